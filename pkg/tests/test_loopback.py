"""Loopback CLA: byte-exact pairing, injectable delay and drop, registry
error paths."""

import pytest

from bundlemux.cla.base import ClaAddress, ClaRegistry
from bundlemux.clock import SimulatedClock
from bundlemux.cla.loopback import LoopbackHub
from bundlemux.errors import DuplicateClaName, UnknownCla
from bundlemux.aap2.messages import Status
from nodeutil import ADMIN, Receiver, client_for, node_config, start_node, wait_for


def loopback_pair(clock=None, a_extra=None):
    hub = LoopbackHub()
    a_cfg = {"hub_name": "a", **(a_extra or {})}
    a = start_node(node_config("a", mtcp=False,
                               extra_cla={"loopback": a_cfg}),
                   clock=clock, hub=hub, name="a")
    b = start_node(node_config("b", mtcp=False,
                               extra_cla={"loopback": {"hub_name": "b"}}),
                   clock=clock, hub=hub, name="b")
    return a, b


def wire_and_send(a, b, payload=b"over the hub"):
    receiver = Receiver(b, "sink")
    control = client_for(a)
    control.configure(active=True, auth=1, admin_secret=ADMIN.encode())
    assert control.link_up("dtn://b.dtn/", "loopback:b",
                           direct=True).status == Status.OK
    control.close()
    sender = client_for(a)
    sender.configure(active=True, agent_id="src", shared_secret=b"s")
    assert sender.send_adu("dtn://b.dtn/sink", payload).status == Status.OK
    sender.close()
    return receiver


def test_byte_exact_delivery():
    a, b = loopback_pair()
    try:
        payload = bytes(range(256))
        receiver = wire_and_send(a, b, payload)
        wait_for(lambda: receiver.payloads() == [payload], message="delivery")
        receiver.close()
    finally:
        a.stop()
        b.stop()


def test_drop_probability_one_delivers_nothing():
    a, b = loopback_pair(a_extra={"drop_probability": 1.0, "seed": 3})
    try:
        receiver = wire_and_send(a, b)
        # the channel drops it; the sender still counts a completed TX
        wait_for(lambda: a.counters.forwarded == 1, message="tx completes")
        assert b.counters.ingested == 0
        assert receiver.payloads() == []
        receiver.close()
    finally:
        a.stop()
        b.stop()


def test_simulated_delay_gates_arrival():
    clock = SimulatedClock(0)
    a, b = loopback_pair(clock=clock, a_extra={"delay_ms": 100})
    try:
        receiver = wire_and_send(a, b)
        import time
        time.sleep(0.3)  # real time passes; simulated time does not
        assert receiver.payloads() == []
        clock.advance_by(100)
        wait_for(lambda: receiver.payloads() == [b"over the hub"],
                 message="arrival after advance")
        # the receive-side timestamp equals send time + injected delay
        ingest = [e for e in b.events.entries() if e["kind"] == "ingest"]
        assert ingest and ingest[0]["t"] == 100
        receiver.close()
    finally:
        a.stop()
        b.stop()
        clock.stop()


def test_link_up_to_unknown_hub_peer_fails():
    a, b = loopback_pair()
    try:
        control = client_for(a)
        control.configure(active=True, auth=1, admin_secret=ADMIN.encode())
        response = control.link_up("dtn://x.dtn/", "loopback:ghost")
        assert response.status == Status.ERROR
        control.close()
    finally:
        a.stop()
        b.stop()


def test_registry_duplicate_and_unknown():
    registry = ClaRegistry()

    class Stub:
        name = "mtcp"
    registry.register(Stub())
    with pytest.raises(DuplicateClaName):
        registry.register(Stub())
    with pytest.raises(UnknownCla):
        registry.get("nosuch")
    with pytest.raises(UnknownCla):
        registry.resolve(ClaAddress.parse("nosuch:x"))
    assert registry.get("mtcp") is not None


def test_cla_address_parsing():
    address = ClaAddress.parse("mtcp:127.0.0.1:4556")
    assert address.cla_name == "mtcp"
    assert address.detail == "127.0.0.1:4556"
    assert str(address) == "mtcp:127.0.0.1:4556"
    with pytest.raises(ValueError):
        ClaAddress.parse("nodetail")
    with pytest.raises(ValueError):
        ClaAddress.parse(":empty")
