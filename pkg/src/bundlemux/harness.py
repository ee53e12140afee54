"""Multi-node integration harness.

Runs N node instances in one process (each with its own threads and real
sockets), scripts link changes, sends, storage commands and dispatcher
behavior from a declarative JSON scenario, and checks the declared
expectations. Orchestration happens exclusively through the nodes' public
socket interfaces; per-node event logs and counters provide observability.

Scenario files live under scenarios/; `bundlemux harness run <file>` executes
one and prints a pass/fail report (optionally JUnit XML for CI).
"""

import fnmatch
import json
import logging
import tempfile
import threading
import time

from . import cbor
from .aap2.client import Aap2Client
from .aap2.messages import AUTH_DISPATCH, AUTH_LINK_CONTROL, Status
from .cla.base import ClaAddress
from .cla.storage import VERB_DELETE, VERB_QUERY, VERB_RECALL
from .clock import SimulatedClock, WallClock
from .config import load_config
from .dispatch import DispatchAction, DispatchDecision, NextHop
from .eid import parse_eid
from .node import Node
from .cla.loopback import LoopbackHub

log = logging.getLogger(__name__)


class ScriptedBdm:
    """Table-driven dispatcher module holding dispatch authority over the
    control protocol. Rules are matched in order against the full
    destination EID; the first hit decides."""

    def __init__(self, aap2_port: int, admin_secret: bytes, rules: list,
                 name: str = "bdm"):
        self.rules = rules
        self.name = name
        self.requests = []
        self.client = Aap2Client(tcp=("127.0.0.1", aap2_port))
        response = self.client.configure(active=False, auth=AUTH_DISPATCH,
                                         admin_secret=admin_secret)
        if response.status != Status.OK:
            raise RuntimeError(f"BDM authorization failed: {response}")
        self._thread = threading.Thread(target=self._serve, name=name, daemon=True)
        self._thread.start()

    def _serve(self):
        try:
            self.client.serve(on_dispatch=self._decide)
        except Exception:
            pass

    def _decide(self, request) -> "DispatchDecision | None":
        self.requests.append(request)
        for rule in self.rules:
            if not fnmatch.fnmatch(request.dst, rule.get("pattern", "*")):
                continue
            action = rule.get("action", "drop")
            if action == "forward":
                hops = tuple(NextHop(parse_eid(node), ClaAddress.parse(addr))
                             for node, addr in rule["via"])
                return DispatchDecision(DispatchAction.FORWARD, hops,
                                        rule.get("max_fragment_payload"))
            if action == "store":
                return DispatchDecision(DispatchAction.STORE)
            return DispatchDecision(DispatchAction.DROP,
                                    reason=rule.get("reason", "scripted drop"))
        return DispatchDecision(DispatchAction.DROP, reason="no rule matched")

    def stop(self):
        self.client.stop()

    @property
    def request_count(self) -> int:
        return len(self.requests)


class ScenarioError(AssertionError):
    pass


class Receiver:
    def __init__(self, aap2_port: int, agent: str, secret: bytes):
        self.adus = []
        self.client = Aap2Client(tcp=("127.0.0.1", aap2_port))
        response = self.client.configure(active=False, agent_id=agent,
                                         shared_secret=secret)
        if response.status != Status.OK:
            raise RuntimeError(f"receiver registration failed: {response}")
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._thread.start()

    def _serve(self):
        try:
            self.client.serve(on_adu=self.adus.append)
        except Exception:
            pass

    def stop(self):
        self.client.stop()


class ScenarioRunner:
    DEFAULT_ADMIN = "harness-admin"

    def __init__(self, spec: dict, workdir: "str | None" = None):
        self.spec = spec
        self.name = spec.get("name", "scenario")
        self.simulated = spec.get("clock", "real") == "simulated"
        self.clock = SimulatedClock(0) if self.simulated else WallClock()
        self.hub = LoopbackHub()
        self.workdir = workdir or tempfile.mkdtemp(prefix="bundlemux-harness-")
        self.nodes: "dict[str, Node]" = {}
        self.node_cfgs: "dict[str, dict]" = {}
        self.receivers: "dict[tuple, Receiver]" = {}
        self.bdms: "dict[str, ScriptedBdm]" = {}
        self.sent_payloads: "dict[str, bytes]" = {}
        self.failures: "list[str]" = []
        self.log: "list[dict]" = []
        self.seed = spec.get("seed", 1)

    # --- construction ---

    def _node_config(self, key: str, spec: dict) -> dict:
        cla = {}
        cla_spec = spec.get("cla", {"mtcp": {}})
        for cla_name, sub in cla_spec.items():
            sub = dict(sub)
            if cla_name == "mtcp":
                sub.setdefault("listen", "127.0.0.1:0")
            if cla_name == "loopback":
                sub.setdefault("hub_name", key)
                sub.setdefault("seed", self.seed)
            if cla_name == "storage":
                sub.setdefault("path", f"{self.workdir}/{key}-storage")
            cla[cla_name] = sub
        if spec.get("storage") and "storage" not in cla:
            cla["storage"] = {"path": f"{self.workdir}/{key}-storage"}
        cfg = {
            "node_id": spec.get("node_id", f"dtn://{key}.dtn/"),
            "admin_secret": self.DEFAULT_ADMIN,
            "aap2": {"tcp": "127.0.0.1:0"},
            "cla": cla,
        }
        for key_name in ("bdm_timeout_ms", "cache_enabled", "default_lifetime_ms",
                         "keepalive_timeout_ms"):
            if key_name in spec:
                if key_name == "keepalive_timeout_ms":
                    cfg["aap2"]["keepalive_timeout_ms"] = spec[key_name]
                else:
                    cfg[key_name] = spec[key_name]
        return cfg

    def _start_node(self, key: str):
        cfg = self.node_cfgs[key]
        node = Node(load_config(cfg), clock=self.clock, loopback_hub=self.hub,
                    name=key)
        node.start()
        self.nodes[key] = node

    # --- name resolution ---

    def _eid(self, text: str) -> str:
        """Expand "@b/agent" to the node's EID plus demux."""
        if not text.startswith("@"):
            return text
        node_key, _, agent = text[1:].partition("/")
        base = str(self.nodes[node_key].config.node_id)
        return base + agent

    def _cla_address(self, text: str) -> str:
        """Expand "@b:mtcp" / "@b:loopback" / "@b:bibe/agent" to an address."""
        if not text.startswith("@"):
            return text
        node_key, _, kind = text[1:].partition(":")
        node = self.nodes[node_key]
        if kind == "mtcp":
            return f"mtcp:127.0.0.1:{node.mtcp_port()}"
        if kind == "loopback":
            return f"loopback:{node_key}"
        if kind.startswith("bibe"):
            _, _, agent = kind.partition("/")
            return "bibe:" + str(node.config.node_id) + (agent or "bibe")
        raise ScenarioError(f"cannot resolve CLA address {text!r}")

    # --- clients ---

    def _admin_client(self, node_key: str) -> Aap2Client:
        client = Aap2Client(tcp=("127.0.0.1", self.nodes[node_key].aap2_port()))
        response = client.configure(active=True, auth=AUTH_LINK_CONTROL,
                                    admin_secret=self.DEFAULT_ADMIN.encode())
        if response.status != Status.OK:
            raise ScenarioError(f"admin client rejected: {response}")
        return client

    # --- event execution ---

    def run(self) -> dict:
        for key, node_spec in self.spec.get("nodes", {}).items():
            self.node_cfgs[key] = self._node_config(key, node_spec or {})
        for key in self.node_cfgs:
            self._start_node(key)
        try:
            events = sorted(self.spec.get("events", []),
                            key=lambda e: e.get("at_ms", 0))
            start = time.monotonic()
            for event in events:
                at_ms = event.get("at_ms", 0)
                if self.simulated:
                    if at_ms > self.clock.now_ms():
                        self.clock.advance_to(at_ms)
                else:
                    delay = at_ms / 1000.0 - (time.monotonic() - start)
                    if delay > 0:
                        time.sleep(delay)
                self._execute(event)
        finally:
            self._shutdown()
        report = {
            "name": self.name,
            "ok": not self.failures,
            "failures": self.failures,
            "counters": {k: n.counters.snapshot() for k, n in self.nodes.items()},
            "log": self.log,
        }
        return report

    def _shutdown(self):
        for bdm in self.bdms.values():
            bdm.stop()
        for receiver in self.receivers.values():
            receiver.stop()
        for node in self.nodes.values():
            node.stop()
        if self.simulated:
            self.clock.stop()

    def _execute(self, event: dict):
        action = event["action"]
        self.log.append({"t": self.clock.now_ms(), **event})
        handler = getattr(self, f"_do_{action}", None)
        if handler is None:
            raise ScenarioError(f"unknown scenario action {action!r}")
        handler(event)

    def _do_link(self, event):
        client = self._admin_client(event["node"])
        try:
            address = self._cla_address(event["cla"])
            peer = self._eid(event["peer"])
            if event.get("op", "up") == "up":
                response = client.link_up(peer, address,
                                          direct=event.get("direct", False))
            else:
                response = client.link_down(peer, address)
            wanted = event.get("expect", "OK")
            if response.status.name != wanted:
                self._fail(f"link {event} -> {response.status.name}, wanted {wanted}")
        finally:
            client.close()

    def _do_recv(self, event):
        key = (event["node"], event["agent"])
        secret = event.get("secret", "harness").encode()
        self.receivers[key] = Receiver(self.nodes[event["node"]].aap2_port(),
                                       event["agent"], secret)

    def _do_send(self, event):
        node = self.nodes[event["node"]]
        payload = self._payload_of(event)
        if "id" in event:
            self.sent_payloads[event["id"]] = payload
        client = Aap2Client(tcp=("127.0.0.1", node.aap2_port()))
        try:
            response = client.configure(active=True, agent_id=event.get("agent", "src"),
                                        shared_secret=event.get("secret", "harness").encode())
            if response.status != Status.OK:
                return self._fail(f"send registration failed: {response}")
            response = client.send_adu(self._eid(event["to"]), payload,
                                       lifetime_ms=event.get("lifetime_ms"))
            if response.status != Status.OK:
                self._fail(f"send failed: {response}")
        finally:
            client.close()

    def _payload_of(self, event) -> bytes:
        if "payload_text" in event:
            return event["payload_text"].encode()
        if "payload_hex" in event:
            return bytes.fromhex(event["payload_hex"])
        size = event.get("payload_size", 64)
        import random
        rng = random.Random(self.seed ^ size ^ len(self.sent_payloads))
        return rng.randbytes(size)

    def _do_bdm(self, event):
        key = event["node"]
        rules = []
        for rule in event.get("rules", []):
            rule = dict(rule)
            if "via" in rule:
                rule["via"] = [[self._eid(n), self._cla_address(a)]
                               for n, a in rule["via"]]
            rules.append(rule)
        self.bdms[key] = ScriptedBdm(self.nodes[key].aap2_port(),
                                     self.DEFAULT_ADMIN.encode(), rules,
                                     name=f"bdm-{key}")

    def _do_bdm_stop(self, event):
        bdm = self.bdms.pop(event["node"], None)
        if bdm:
            bdm.stop()
            time.sleep(0.05)

    def _do_storage(self, event):
        node = self.nodes[event["node"]]
        verb = {"query": VERB_QUERY, "delete": VERB_DELETE,
                "recall": VERB_RECALL}[event["verb"]]
        reply = storage_command(node, verb, event.get("filter"),
                                event.get("delete_after"))
        if reply.get(0) != 0:
            self._fail(f"storage command failed: {reply}")
        if "expect_count" in event and reply.get(1) != event["expect_count"]:
            self._fail(f"storage {event['verb']} matched {reply.get(1)}, "
                       f"wanted {event['expect_count']}")
        self.log.append({"t": self.clock.now_ms(), "storage_reply": repr(reply)})

    def _do_restart(self, event):
        key = event["node"]
        for rk in [k for k in self.receivers if k[0] == key]:
            self.receivers.pop(rk).stop()
        if key in self.bdms:
            self.bdms.pop(key).stop()
        self.nodes[key].stop()
        self._start_node(key)

    def _do_advance(self, event):
        if self.simulated:
            self.clock.advance_to(event["to_ms"])

    def _do_sleep(self, event):
        time.sleep(event.get("seconds", 0.1))

    def _do_wait_quiescent(self, event):
        self._settle(event.get("timeout_s", 10.0))

    def _settle(self, timeout_s: float = 10.0):
        deadline = time.monotonic() + timeout_s
        while time.monotonic() < deadline:
            if all(node.quiescent() for node in self.nodes.values()):
                return
            time.sleep(0.01)
        self._fail("nodes did not become quiescent")

    # --- expectations ---

    def _do_expect_delivered(self, event):
        key = (event["node"], event["agent"])
        receiver = self.receivers.get(key)
        if receiver is None:
            return self._fail(f"no receiver for {key}")
        wanted = [self.sent_payloads[i] for i in event["payload_ids"]]
        deadline = time.monotonic() + event.get("within_ms", 10_000) / 1000.0
        while time.monotonic() < deadline:
            if [a.payload for a in receiver.adus] == wanted:
                return
            time.sleep(0.005)
        got = [a.payload[:16] for a in receiver.adus]
        self._fail(f"delivery mismatch at {key}: got {len(receiver.adus)} ADUs "
                   f"{got!r}")

    def _poll_equal(self, read_value, wanted, within_ms, describe):
        deadline = time.monotonic() + within_ms / 1000.0
        value = read_value()
        while time.monotonic() < deadline:
            value = read_value()
            if value == wanted:
                return
            time.sleep(0.005)
        self._fail(f"{describe} is {value}, wanted {wanted}")

    def _do_expect_counter(self, event):
        node = self.nodes[event["node"]]

        def read():
            value = node.counters.snapshot()
            for part in event["counter"].split("."):
                value = value.get(part) if isinstance(value, dict) else None
            return 0 if value is None else value
        self._poll_equal(read, event["value"], event.get("within_ms", 3000),
                         f"counter {event['counter']} on {event['node']}")

    def _do_expect_bdm_calls(self, event):
        bdm = self.bdms.get(event["node"])
        self._poll_equal(lambda: bdm.request_count if bdm else 0,
                         event["value"], event.get("within_ms", 3000),
                         f"BDM request count on {event['node']}")

    def _do_expect_stored(self, event):
        def read():
            node = self.nodes[event["node"]]
            return node.storage.record_count() if node.storage else 0
        self._poll_equal(read, event["count"], event.get("within_ms", 3000),
                         f"stored-bundle count on {event['node']}")

    def _do_expect_accounting(self, event):
        self._settle(event.get("timeout_s", 10.0))
        for key, node in self.nodes.items():
            counters = node.counters
            if counters.ingested != counters.outcomes():
                self._fail(f"accounting not closed on {key}: "
                           f"{counters.snapshot()}")

    def _do_expect_min_ingest(self, event):
        node = self.nodes[event["node"]]
        if node.counters.ingested < event["value"]:
            self._fail(f"{event['node']} ingested {node.counters.ingested}, "
                       f"wanted >= {event['value']}")

    def _fail(self, message: str):
        self.failures.append(message)
        log.error("[%s] %s", self.name, message)


def storage_command(node: Node, verb: int, filter_spec=None, delete_after=None,
                    timeout_s: float = 10.0) -> dict:
    """Send one command bundle to the node's storage endpoint over the
    control protocol and return the decoded reply payload."""
    reply_box = []
    got = threading.Event()

    agent = "sqaclient"
    secret = b"storage-tool"
    recv = Aap2Client(tcp=("127.0.0.1", node.aap2_port()))
    if recv.configure(active=False, agent_id=agent,
                      shared_secret=secret).status != Status.OK:
        raise RuntimeError("storage reply registration failed")

    def on_adu(adu):
        reply_box.append(cbor.decode(adu.payload))
        got.set()

    server = threading.Thread(target=lambda: recv.serve(on_adu=on_adu, max_calls=1),
                              daemon=True)
    server.start()

    body = {0: verb}
    if filter_spec is not None:
        filter_map = {}
        mapping = {"dest": 0, "source": 1, "after": 2, "before": 3, "limit": 4}
        for name, key in mapping.items():
            if name in filter_spec:
                filter_map[key] = filter_spec[name]
        body[1] = filter_map
    if delete_after is not None:
        body[2] = delete_after

    send = Aap2Client(tcp=("127.0.0.1", node.aap2_port()))
    try:
        if send.configure(active=True, agent_id=agent,
                          shared_secret=secret).status != Status.OK:
            raise RuntimeError("storage command registration failed")
        endpoint = str(node.config.node_id) + node.storage.endpoint
        if send.send_adu(endpoint, cbor.encode(body)).status != Status.OK:
            raise RuntimeError("storage command send failed")
        if not got.wait(timeout_s):
            raise RuntimeError("storage command got no reply")
        server.join(timeout=5)
    finally:
        send.close()
        recv.stop()
    return reply_box[0]


def run_scenario(path_or_spec, junit_path: "str | None" = None) -> dict:
    if isinstance(path_or_spec, dict):
        spec = path_or_spec
    else:
        with open(path_or_spec) as handle:
            spec = json.load(handle)
    report = ScenarioRunner(spec).run()
    if junit_path:
        _write_junit(report, junit_path)
    return report


def _write_junit(report: dict, path: str):
    from xml.sax.saxutils import escape
    failures = report["failures"]
    lines = ['<?xml version="1.0" encoding="UTF-8"?>',
             f'<testsuite name="bundlemux-harness" tests="1" '
             f'failures="{1 if failures else 0}">',
             f'  <testcase name="{escape(report["name"])}">']
    if failures:
        text = escape("\n".join(failures))
        lines.append(f'    <failure message="scenario failed">{text}</failure>')
    lines += ["  </testcase>", "</testsuite>", ""]
    with open(path, "w") as handle:
        handle.write("\n".join(lines))
