"""Acceptance gate: one test per release criterion, each printing a
PASS line with the measured value where a tolerance applies. Everything here
is self-contained on top of the public interfaces."""

import json
import pathlib
import random
import socket
import time

import pytest

from bundlemux.aap2.messages import Keepalive, Status, frame
from bundlemux.bundle import BpVersion, CreationTimestamp, make_bundle
from bundlemux.cla.mtcp import mtcp_frame
from bundlemux.codec import decode_bundle, detect_version, encode_bundle
from bundlemux.crc import crc16_x25, crc32c
from bundlemux.eid import DTN_NONE
from bundlemux.errors import UnsupportedVersion
from bundlemux.harness import ScenarioRunner, ScriptedBdm
from conftest import load_vector
from gen import random_bundle
from nodeutil import ADMIN, Receiver, client_for, node_config, start_node, wait_for

SCENARIOS = pathlib.Path(__file__).parent.parent / "scenarios"


def ok(name: str, detail: str = ""):
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {name}: PASS{suffix}")


def run_scenario_file(name: str, tmp_path) -> dict:
    with open(SCENARIOS / name) as handle:
        spec = json.load(handle)
    report = ScenarioRunner(spec, workdir=str(tmp_path)).run()
    assert report["ok"], report["failures"]
    return report


def closure(counters: dict) -> bool:
    return counters["ingested"] == (counters["delivered"] + counters["forwarded"]
                                    + counters["stored"]
                                    + sum(counters["dropped"].values()))


def test_codec_round_trip_1000_bundles():
    rng = random.Random(2024)
    start = time.monotonic()
    for _ in range(1000):
        bundle = random_bundle(rng, max_payload=2048)
        assert decode_bundle(encode_bundle(bundle)) == bundle
    elapsed = time.monotonic() - start
    assert elapsed < 10.0, f"round trips took {elapsed:.1f}s"
    ok("codec-round-trip", f"1000 bundles in {elapsed:.2f}s")


def test_golden_vectors():
    minimal = make_bundle(DTN_NONE)
    assert encode_bundle(minimal) == load_vector("bp7/minimal_bundle.hex")
    assert decode_bundle(load_vector("bp7/minimal_bundle.hex")) == minimal
    assert mtcp_frame(b"\xAB" * 20) == load_vector("mtcp/frame_20.hex")
    assert mtcp_frame(b"\xCD" * 300) == load_vector("mtcp/frame_300.hex")
    assert frame(Keepalive()) == load_vector("aap2/keepalive.hex")
    ok("golden-vectors", "minimal bundle, MTCP frames, keepalive")


def test_crc_known_answers():
    assert crc16_x25(b"123456789") == 0x906E
    assert crc32c(b"123456789") == 0xE3069283
    ok("crc-known-answers", "0x906E / 0xE3069283")


def test_version_gate_on_live_mtcp():
    assert detect_version(0x06) == BpVersion.V6
    assert detect_version(0x9F) == BpVersion.V7
    with pytest.raises(UnsupportedVersion):
        detect_version(0x42)

    node = start_node(node_config("gate"), name="gate")
    try:
        receiver = Receiver(node, "sink")
        with socket.create_connection(("127.0.0.1", node.mtcp_port())) as raw:
            raw.sendall(mtcp_frame(b"\x06" + bytes(20)))       # v6: rejected
            raw.sendall(mtcp_frame(encode_bundle(make_bundle(  # v7: delivered
                node.config.node_id.with_agent("sink"),
                payload=b"after the reject",
                creation=CreationTimestamp(node.clock.now_ms(), 0),
                lifetime_ms=60_000))))
        wait_for(lambda: node.counters.rx_rejected == 1, message="v6 reject")
        wait_for(lambda: receiver.payloads() == [b"after the reject"],
                 message="v7 delivery after reject")
        rejects = [e for e in node.events.entries() if e["kind"] == "rx_reject"]
        assert rejects and "version" in rejects[0]["reason"]
        receiver.close()
    finally:
        node.stop()
    ok("version-gate", "v6 logged reject, daemon alive")


def test_scenario_two_node_direct(tmp_path):
    start = time.monotonic()
    run_scenario_file("two_node_direct.json", tmp_path)
    ok("scenario-two-node-direct", f"{time.monotonic() - start:.2f}s wall")


def test_scenario_three_node_relay(tmp_path):
    report = run_scenario_file("three_node_relay.json", tmp_path)
    assert all(closure(c) for c in report["counters"].values()), report["counters"]
    ok("scenario-three-node-relay", "accounting closed on all nodes")


def test_scenario_store_and_forward(tmp_path):
    report = run_scenario_file("store_and_forward.json", tmp_path)
    latest = max(entry["t"] for entry in report["log"] if "t" in entry)
    assert latest <= 15_000, f"scenario ran to simulated t={latest}"
    ok("scenario-store-and-forward",
       f"persisted across restart, done at t={latest}ms simulated")


def test_scenario_fragmentation(tmp_path):
    report = run_scenario_file("fragmentation.json", tmp_path)
    wire_bundles = report["counters"]["b"]["ingested"]
    assert wire_bundles >= 3
    assert all(closure(c) for c in report["counters"].values())
    ok("scenario-fragmentation", f"{wire_bundles} wire bundles, ADU intact")


def test_scenario_bibe_tunnel_one_and_two_levels(tmp_path):
    run_scenario_file("bibe_tunnel.json", tmp_path / "one")
    run_scenario_file("bibe_tunnel_double.json", tmp_path / "two")
    ok("scenario-bibe-tunnel", "1 and 2 nesting levels byte-identical")


def test_fib_cache_criterion(tmp_path):
    report = run_scenario_file("fib_cache.json", tmp_path)
    assert report["counters"]["a"]["dispatch_requests"] == 2
    ok("fib-cache", "10 bundles -> 1 request; link flap -> 1 more")


def test_aap2_conformance_table():
    from bundlemux.aap2.messages import (BundleAdu, ConnectionConfig,
                                         DispatchRequest, DispatchResponse,
                                         LinkMsg, LinkOp, Response, Welcome)
    from bundlemux.dispatch import DispatchAction, DispatchDecision

    node = start_node(node_config("conf"), name="conf")
    samples = {
        "Welcome": Welcome("dtn://x.dtn/"),
        "ConnectionConfig": ConnectionConfig(True, "again", b"s"),
        "BundleADU": BundleAdu("", "dtn://void.dtn/x", payload=b"p"),
        "DispatchRequest": DispatchRequest(1, "", "dtn://x.dtn/", (0, 0), 0, 0),
        "DispatchResponse": DispatchResponse(
            1, DispatchDecision(DispatchAction.STORE)),
        "LinkUp": LinkMsg(LinkOp.UP, "dtn://x.dtn/", "mtcp:h:1"),
        "LinkNotify": LinkMsg(LinkOp.NOTIFY_UP, "dtn://x.dtn/", "mtcp:h:1"),
        "Keepalive": Keepalive(),
        "Response": Response(Status.OK),
    }
    # expected handling per (phase, message): "ok" answered, "err" answered
    # with a status != OK but connection stays, "close" violation
    table = {
        "await_config": {"Welcome": "close", "ConnectionConfig": "ok",
                         "BundleADU": "close", "DispatchRequest": "close",
                         "DispatchResponse": "close", "LinkUp": "close",
                         "LinkNotify": "close", "Keepalive": "close",
                         "Response": "close"},
        "active": {"Welcome": "close", "ConnectionConfig": "close",
                   "BundleADU": "ok", "DispatchRequest": "close",
                   "DispatchResponse": "close", "LinkUp": "err",
                   "LinkNotify": "close", "Keepalive": "ok",
                   "Response": "close"},
        "passive": {"Welcome": "close", "ConnectionConfig": "close",
                    "BundleADU": "close", "DispatchRequest": "close",
                    "DispatchResponse": "close", "LinkUp": "close",
                    "LinkNotify": "close", "Keepalive": "close",
                    "Response": "close"},
    }
    cells = 0
    try:
        for phase, row in table.items():
            for label, expected in row.items():
                client = client_for(node)
                if phase == "active":
                    assert client.configure(active=True, agent_id="t",
                                            shared_secret=b"x").status == Status.OK
                elif phase == "passive":
                    assert client.configure(active=False, agent_id="t",
                                            shared_secret=b"x").status == Status.OK
                client.send_raw(samples[label])
                if expected == "ok":
                    answer = client.recv_msg()
                    assert isinstance(answer, Response) and \
                        answer.status == Status.OK, (phase, label, answer)
                elif expected == "err":
                    answer = client.recv_msg()
                    assert isinstance(answer, Response) and \
                        answer.status != Status.OK, (phase, label, answer)
                else:
                    answer = client.recv_msg()
                    assert isinstance(answer, Response) and \
                        answer.status == Status.ERROR, (phase, label, answer)
                    with pytest.raises((ConnectionError, OSError)):
                        client.recv_msg(timeout_s=2)
                client.close()
                wait_for(lambda: "t" not in node.core.registrations,
                         message="slot release", timeout_s=5)
                cells += 1
    finally:
        node.stop()
    ok("aap2-conformance-table", f"{cells} (state, message) cells")


def test_shared_secret_matrix():
    node = start_node(node_config("matrix"), name="matrix")
    try:
        holder = client_for(node)
        assert holder.configure(active=False, agent_id="m",
                                shared_secret=b"s").status == Status.OK
        outcomes = {}
        for label, (secret, active) in {
            "match-opposite": (b"s", True),
            "match-same": (b"s", False),
            "mismatch-opposite": (b"WRONG", True),
            "mismatch-same": (b"WRONG", False),
        }.items():
            probe = client_for(node)
            outcomes[label] = probe.configure(active=active, agent_id="m",
                                              shared_secret=secret).status
            probe.close()
        assert outcomes == {
            "match-opposite": Status.OK,
            "match-same": Status.OCCUPIED,
            "mismatch-opposite": Status.OCCUPIED,
            "mismatch-same": Status.OCCUPIED,
        }, outcomes
        holder.close()
    finally:
        node.stop()
    ok("shared-secret-matrix", "{OK, OCCUPIED} as specified")


def test_authorization_and_hot_swap(tmp_path):
    node = start_node(node_config("auth", storage_dir=tmp_path), name="auth")
    try:
        wrong = client_for(node)
        assert wrong.configure(active=False, auth=2,
                               admin_secret=b"bad").status == Status.UNAUTHORIZED
        wrong.close()

        first = ScriptedBdm(node.aap2_port(), ADMIN.encode(),
                            [{"pattern": "*", "action": "store"}])
        second_claim = client_for(node)
        assert second_claim.configure(
            active=False, auth=2,
            admin_secret=ADMIN.encode()).status == Status.OCCUPIED
        second_claim.close()

        sender = client_for(node)
        sender.configure(active=True, agent_id="src", shared_secret=b"s")
        assert sender.send_adu("dtn://far.dtn/x", b"before").status == Status.OK
        wait_for(lambda: node.storage.record_count() == 1, message="store 1")

        first.stop()
        wait_for(lambda: node.core.bdm is None, message="release")
        second = ScriptedBdm(node.aap2_port(), ADMIN.encode(),
                             [{"pattern": "*", "action": "store"}])
        assert sender.send_adu("dtn://far.dtn/x", b"after").status == Status.OK
        wait_for(lambda: node.storage.record_count() == 2, message="store 2")
        sender.close()
        second.stop()
        assert node.storage.record_count() == 2
    finally:
        node.stop()
    ok("authorization-and-hot-swap",
       "UNAUTHORIZED, OCCUPIED, zero stored bundles lost")
