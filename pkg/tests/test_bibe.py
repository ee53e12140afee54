"""Encapsulation PDU handling and tunnel behavior not covered by the
harness scenarios."""

import pytest

from bundlemux import cbor
from bundlemux.bundle import CreationTimestamp, make_bundle
from bundlemux.cla.bibe import decapsulate, encapsulation_pdu, open_pdu
from bundlemux.codec import encode_bundle
from bundlemux.eid import parse_eid
from bundlemux.errors import InnerDecodeFailed, MalformedBpdu
from nodeutil import ADMIN, Receiver, client_for, node_config, start_node, wait_for

DEST = parse_eid("dtn://c.dtn/app")


def test_pdu_layout():
    inner = make_bundle(DEST, payload=b"inner payload")
    inner_bytes = encode_bundle(inner)
    pdu = encapsulation_pdu(inner_bytes)
    assert cbor.decode(pdu) == [0, 0, inner_bytes]


def test_pdu_round_trip():
    inner = make_bundle(DEST, payload=b"x" * 100)
    inner_bytes = encode_bundle(inner)
    assert open_pdu(encapsulation_pdu(inner_bytes)) == inner_bytes


def test_decapsulate_recovers_inner_bundle():
    inner = make_bundle(DEST, payload=b"tunnel me")
    outer = make_bundle(parse_eid("dtn://b.dtn/bibe"),
                        payload=encapsulation_pdu(encode_bundle(inner)))
    assert decapsulate(outer) == inner


@pytest.mark.parametrize("payload", [
    b"\x82\x00\x00",                      # 2-element array
    cbor.encode([0, 0, 0]),               # inner not a byte string
    cbor.encode([1, 0, b"x"]),            # nonzero custody transmission id
    cbor.encode([0, 5, b"x"]),            # nonzero retransmission time
    b"not cbor at all",
    cbor.encode({0: 1}),                  # a map, not an array
])
def test_malformed_pdus_rejected(payload):
    outer = make_bundle(parse_eid("dtn://b.dtn/bibe"), payload=payload)
    with pytest.raises(MalformedBpdu):
        decapsulate(outer)


def test_undecodable_inner_rejected():
    outer = make_bundle(parse_eid("dtn://b.dtn/bibe"),
                        payload=cbor.encode([0, 0, b"\x9f\x88junk"]))
    with pytest.raises(InnerDecodeFailed):
        decapsulate(outer)


def test_outer_lifetime_capped_by_inner_remaining():
    """The wrapping node must not let the container outlive its content."""
    node = start_node(node_config("a", extra_cla={"bibe": {}}), name="a")
    try:
        from bundlemux.core import BundleDescriptor, Origin, OriginKind
        cla = node.registry.get("bibe")
        now = node.clock.now_ms()
        inner = make_bundle(DEST, payload=b"short-lived",
                            creation=CreationTimestamp(now, 0), lifetime_ms=5_000)
        desc = BundleDescriptor(inner, Origin(OriginKind.AGENT, "t"),
                                received_at=now)
        outer = cla.encapsulate(desc, parse_eid("dtn://b.dtn/bibe"))
        assert outer.lifetime_ms <= 5_000
        assert outer.lifetime_ms > 4_000
        assert outer.is_admin_record
        assert str(outer.source) == "dtn://a.dtn/bibe"
        assert decapsulate(outer) == inner
    finally:
        node.stop()


def test_same_node_tunnel_with_cache_disabled():
    """Tunneling to the destination node itself needs per-EID decisions, so
    the per-node cache is off; the dispatcher sees inner and outer apart."""
    a = start_node(node_config("a", extra_cla={"bibe": {}},
                               cache_enabled=False), name="a")
    b = start_node(node_config("b", extra_cla={"bibe": {}}), name="b")
    try:
        receiver = Receiver(b, "sink")
        control = client_for(a)
        control.configure(active=True, auth=1, admin_secret=ADMIN.encode())
        assert control.link_up("dtn://b.dtn/", f"mtcp:127.0.0.1:{b.mtcp_port()}"
                               ).status.name == "OK"
        assert control.link_up("dtn://b.dtn/",
                               "bibe:dtn://b.dtn/bibe").status.name == "OK"
        control.close()

        from bundlemux.harness import ScriptedBdm
        bdm = ScriptedBdm(a.aap2_port(), ADMIN.encode(), [
            {"pattern": "dtn://b.dtn/sink", "action": "forward",
             "via": [["dtn://b.dtn/", "bibe:dtn://b.dtn/bibe"]]},
            {"pattern": "dtn://b.dtn/*", "action": "forward",
             "via": [["dtn://b.dtn/", f"mtcp:127.0.0.1:{b.mtcp_port()}"]]},
        ])

        sender = client_for(a)
        sender.configure(active=True, agent_id="src", shared_secret=b"s")
        assert sender.send_adu("dtn://b.dtn/sink", b"capped",
                               lifetime_ms=60_000).status.name == "OK"
        sender.close()
        wait_for(lambda: receiver.payloads() == [b"capped"], message="delivery")

        assert sum(1 for e in a.events.entries()
                   if e["kind"] == "bibe_wrap") == 1
        assert sum(1 for e in b.events.entries()
                   if e["kind"] == "bibe_unwrap") == 1
        receiver.close()
        bdm.stop()
    finally:
        a.stop()
        b.stop()


def test_inner_expiry_enforced_by_receiving_core():
    """An inner bundle that dies in transit is dropped by the unwrapping
    node's ingest policy, not by the tunnel machinery."""
    a = start_node(node_config("a", extra_cla={"bibe": {}}), name="a")
    try:
        # hand-deliver an outer bundle whose inner lifetime is already over
        inner = make_bundle(parse_eid("dtn://a.dtn/app"), payload=b"late",
                            creation=CreationTimestamp(1_000, 0),
                            lifetime_ms=1_000)
        outer_payload = encapsulation_pdu(encode_bundle(inner))
        sender = client_for(a)
        sender.configure(active=True, agent_id="wrapper", shared_secret=b"s")
        assert sender.send_adu("dtn://a.dtn/bibe", outer_payload,
                               is_bibe=True).status.name == "OK"
        sender.close()
        wait_for(lambda: a.counters.dropped.get("Expired") == 1,
                 message="inner expiry drop")
        assert any(e["kind"] == "bibe_unwrap" for e in a.events.entries())
    finally:
        a.stop()
