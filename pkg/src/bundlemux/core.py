"""The bundle processor: a single logical loop fed by message queues.

CLA RX workers, control-protocol connections and the storage worker talk to
the loop exclusively through its inbox; the loop owns the FIB, the decision
cache, the endpoint registrations and the dispatch-pending table, so none of
those need locks. The loop itself never blocks on network I/O: forwarding
decisions from an attached dispatcher module suspend only the affected
bundle via the pending table.
"""

import heapq
import itertools
import logging
import queue
import threading
from collections import Counter as TallyCounter
from dataclasses import dataclass, field, replace as dc_replace

from .bundle import (BLOCK_TYPE_HOP_COUNT, Bundle, CreationTimestamp,
                     FLAG_ADMIN_RECORD, bundle_age_block, expiry_time,
                     hop_count_block, make_bundle)
from .cla.base import ClaAddress, LinkEvent
from .codec import encode_bundle
from .dispatch import (DispatchAction, DispatchDecision, STORE_DECISION,
                       forward_to)
from .eid import EndpointId
from .errors import IncompleteAdu, MissingBundleAge, UnknownCla
from .fib import DispatchCache, Fib
from .fragment import fragment_bundle, reassemble

log = logging.getLogger(__name__)

# terminal drop reasons (observable in events and counters)
DROP_EXPIRED = "Expired"
DROP_HOP_LIMIT = "HopLimitExceeded"
DROP_NO_ENDPOINT = "NoSuchEndpoint"
DROP_NO_ROUTE = "NoRoute"
DROP_DISPATCHER = "DispatcherDrop"
DROP_STORAGE_FULL = "StorageFull"

_MAX_DISPATCH_ATTEMPTS = 3


class OriginKind:
    CLA = "cla"
    AGENT = "agent"
    STORAGE = "storage"


@dataclass(frozen=True)
class Origin:
    kind: str
    detail: str = ""


_desc_ids = itertools.count(1)


@dataclass
class BundleDescriptor:
    bundle: Bundle
    origin: Origin
    received_at: int
    desc_id: int = field(default_factory=lambda: next(_desc_ids))
    outcome: "str | None" = None
    parent: "BundleDescriptor | None" = None
    storage_unavailable: bool = False
    bypass_cache: bool = False
    dispatch_attempts: int = 0
    on_outcome: "object | None" = None  # callable(outcome: str)

    def spawn_fragment(self, fragment: Bundle) -> "BundleDescriptor":
        return BundleDescriptor(fragment, self.origin, self.received_at,
                                parent=self.parent or self)


@dataclass
class Registration:
    agent_id: str
    secret: bytes
    send_owner: "object | None" = None
    recv_sink: "object | None" = None


class InternalSink:
    """Adapter letting in-process components act as delivery endpoints."""

    def __init__(self, fn):
        self._fn = fn

    def deliver_adu(self, bundle: Bundle) -> bool:
        return self._fn(bundle)


class Counters:
    def __init__(self):
        self.ingested = 0
        self.delivered = 0
        self.forwarded = 0
        self.stored = 0
        self.dropped = TallyCounter()
        self.dispatch_requests = 0
        self.rx_rejected = 0

    def outcomes(self) -> int:
        return self.delivered + self.forwarded + self.stored \
            + sum(self.dropped.values())

    def snapshot(self) -> dict:
        return {
            "ingested": self.ingested, "delivered": self.delivered,
            "forwarded": self.forwarded, "stored": self.stored,
            "dropped": dict(self.dropped),
            "dispatch_requests": self.dispatch_requests,
            "rx_rejected": self.rx_rejected,
        }


class EventLog:
    def __init__(self, name: str):
        self.name = name
        self._entries = []
        self._lock = threading.Lock()

    def emit(self, t_ms: int, kind: str, **fields) -> None:
        entry = {"t": t_ms, "kind": kind, **fields}
        with self._lock:
            self._entries.append(entry)
        log.info("[%s] t=%d %s %s", self.name, t_ms, kind,
                 " ".join(f"{k}={v}" for k, v in fields.items()))

    def entries(self) -> list:
        with self._lock:
            return list(self._entries)


# --- loop messages ---

@dataclass
class Ingest:
    desc: BundleDescriptor


@dataclass
class LinkEventMsg:
    event: LinkEvent


@dataclass
class TxDone:
    desc: BundleDescriptor
    link: object


@dataclass
class TxFailed:
    desc: BundleDescriptor
    link: object
    reason: str


@dataclass
class RegisterEndpoint:
    agent_id: str
    secret: bytes
    direction: str  # "send" | "recv"
    owner: object
    reply: queue.Queue


@dataclass
class DeregisterEndpoint:
    agent_id: str
    direction: str
    owner: object


@dataclass
class SendAdu:
    agent_id: str
    destination: EndpointId
    payload: bytes
    lifetime_ms: "int | None"
    creation: "CreationTimestamp | None"
    is_bibe: bool
    reply: queue.Queue


@dataclass
class LinkRequest:
    op: str  # "up" | "down"
    node_id: EndpointId
    cla_address: ClaAddress
    direct: bool
    reply: queue.Queue


@dataclass
class ClaimDispatch:
    conn: object
    reply: queue.Queue


@dataclass
class ReleaseDispatch:
    conn: object


@dataclass
class ClaimLinkControl:
    conn: object
    reply: queue.Queue


@dataclass
class DispatchReply:
    conn: object
    request_id: int
    decision: "DispatchDecision | None"


@dataclass
class ConnectionClosed:
    conn: object


@dataclass
class FibSnapshotRequest:
    reply: queue.Queue


@dataclass
class Shutdown:
    reply: queue.Queue


class BundleProcessor:
    def __init__(self, node_id: EndpointId, clock, registry, config, events: EventLog):
        self.node_id = node_id.node_id()
        self.clock = clock
        self.registry = registry
        self.config = config
        self.events = events
        self.counters = Counters()
        self.inbox = queue.Queue()
        self.fib = Fib()
        self.cache = DispatchCache(config.cache_enabled)
        self.registrations: "dict[str, Registration]" = {}
        self.pending_dispatch: "dict[int, BundleDescriptor]" = {}
        self._pending_conn: "dict[int, object]" = {}
        self._pending_dest: "dict[str, int]" = {}
        self._dispatch_waiters: "dict[int, list]" = {}
        self._request_ids = itertools.count(1)
        self._timer_seq = itertools.count()
        self._timers = []  # heap of (deadline_ms, seq, fn)
        self.bdm = None
        self.link_control_conns = []
        self.storage_cla = None
        self._last_creation = (0, -1)
        self._reassembly = {}
        self._thread = None
        self._running = False
        self.tx_queue_depth = config.tx_queue_depth

    # --- lifecycle ---

    def start(self):
        self._running = True
        self._thread = threading.Thread(target=self._run, name="bundle-processor",
                                        daemon=True)
        self._thread.start()

    def stop(self):
        if not self._running:
            return
        done = queue.Queue()
        self.inbox.put(Shutdown(done))
        try:
            done.get(timeout=5)
        except queue.Empty:
            pass
        self._running = False

    def _run(self):
        self._add_timer(self.clock.now_ms() + 5000, self._reassembly_sweep)
        while True:
            try:
                msg = self.inbox.get(timeout=0.02)
            except queue.Empty:
                msg = None
            if msg is not None:
                if isinstance(msg, Shutdown):
                    msg.reply.put(True)
                    return
                try:
                    self._handle(msg)
                except Exception:
                    log.exception("error handling %r", msg)
            self._fire_timers()

    def _handle(self, msg):
        handler = self._HANDLERS[type(msg)]
        handler(self, msg)

    # --- producers (called from other threads) ---

    def post_ingest_from_cla(self, bundle: Bundle, link, peer_addr=None):
        addr = peer_addr or (link.peer_cla_address if link else None)
        desc = BundleDescriptor(bundle, Origin(OriginKind.CLA, str(addr)),
                                self.clock.now_ms())
        self.inbox.put(Ingest(desc))

    def post_link_event(self, event: LinkEvent):
        self.inbox.put(LinkEventMsg(event))

    def post_tx_done(self, desc, link):
        self.inbox.put(TxDone(desc, link))

    def post_tx_failed(self, desc, link, reason):
        self.inbox.put(TxFailed(desc, link, reason))

    def note_rx_reject(self, cla_name: str, reason: str):
        self.counters.rx_rejected += 1
        self.events.emit(self.clock.now_ms(), "rx_reject", cla=cla_name,
                         reason=reason)

    def post(self, msg):
        self.inbox.put(msg)

    def call(self, msg_cls, timeout=5.0, **kwargs):
        """Post a request message carrying a reply queue and wait for it."""
        reply = queue.Queue()
        self.inbox.put(msg_cls(reply=reply, **kwargs))
        return reply.get(timeout=timeout)

    # --- timers ---

    def _add_timer(self, deadline_ms: int, fn):
        heapq.heappush(self._timers, (deadline_ms, next(self._timer_seq), fn))

    def _fire_timers(self):
        now = self.clock.now_ms()
        while self._timers and self._timers[0][0] <= now:
            _, _, fn = heapq.heappop(self._timers)
            try:
                fn()
            except Exception:
                log.exception("timer callback failed")

    # --- outcome accounting ---

    def _finish(self, desc: BundleDescriptor, outcome: str, reason: str = ""):
        target = desc.parent or desc
        if target.outcome is not None:
            return
        target.outcome = outcome
        now = self.clock.now_ms()
        if outcome == "delivered":
            self.counters.delivered += 1
            self.events.emit(now, "deliver", dest=str(target.bundle.destination),
                             desc=target.desc_id)
        elif outcome == "forwarded":
            self.counters.forwarded += 1
            self.events.emit(now, "forward", dest=str(target.bundle.destination),
                             desc=target.desc_id)
        elif outcome == "stored":
            self.counters.stored += 1
            self.events.emit(now, "store", dest=str(target.bundle.destination),
                             desc=target.desc_id)
        elif outcome == "dropped":
            self.counters.dropped[reason] += 1
            self.events.emit(now, "drop", dest=str(target.bundle.destination),
                             reason=reason, desc=target.desc_id)
        if target.on_outcome is not None:
            try:
                target.on_outcome(outcome)
            except Exception:
                log.exception("outcome callback failed")

    # --- ingest pipeline ---

    def ingest_inline(self, desc: BundleDescriptor):
        """Entry point for in-loop re-ingestion (BIBE wrap/unwrap)."""
        self._ingest(desc)

    def _handle_ingest(self, msg: Ingest):
        self._ingest(msg.desc)

    def _ingest(self, desc: BundleDescriptor):
        self.counters.ingested += 1
        b = desc.bundle
        now = self.clock.now_ms()
        self.events.emit(now, "ingest", dest=str(b.destination),
                         origin=f"{desc.origin.kind}:{desc.origin.detail}",
                         desc=desc.desc_id)
        try:
            expires = expiry_time(b, desc.received_at)
        except MissingBundleAge:
            # lifetime cannot be determined; treat as already elapsed
            return self._finish(desc, "dropped", DROP_EXPIRED)
        if expires <= now:
            return self._finish(desc, "dropped", DROP_EXPIRED)

        if desc.origin.kind == OriginKind.CLA:
            hop = b.find_block(BLOCK_TYPE_HOP_COUNT)
            if hop is not None:
                limit, count = hop.hop_count()
                count += 1
                if count > limit:
                    return self._finish(desc, "dropped", DROP_HOP_LIMIT)
                updated = dc_replace(
                    hop_count_block(limit, count, hop.block_number, hop.crc_type),
                    flags=hop.flags)
                desc.bundle = b = b.replace_block(updated)

        if not b.destination.is_none and b.destination.node_id() == self.node_id:
            return self._deliver_local(desc)
        if b.destination.is_none:
            return self._finish(desc, "dropped", DROP_NO_ENDPOINT)
        self._dispatch(desc)

    # --- local delivery ---

    def _deliver_local(self, desc: BundleDescriptor):
        b = desc.bundle
        agent = b.destination.agent_id
        reg = self.registrations.get(agent)
        sink = reg.recv_sink if reg else None
        if b.is_fragment and sink is not None:
            return self._absorb_fragment(desc, sink)
        if sink is not None:
            if sink.deliver_adu(b):
                return self._finish(desc, "delivered")
            self._drop_sink(sink)
        if self.storage_cla is not None and not desc.storage_unavailable:
            return self._apply_decision(desc, STORE_DECISION)
        self._finish(desc, "dropped", DROP_NO_ENDPOINT)

    def _absorb_fragment(self, desc: BundleDescriptor, sink):
        b = desc.bundle
        key = (str(b.source), b.creation, b.total_adu_length)
        buf = self._reassembly.setdefault(key, {})
        buf.setdefault(b.fragment_offset, desc)
        try:
            whole = reassemble([d.bundle for d in buf.values()])
        except IncompleteAdu:
            return
        del self._reassembly[key]
        members = list(buf.values())
        if sink.deliver_adu(whole):
            for member in members:
                self._finish(member, "delivered")
        else:
            self._drop_sink(sink)
            for member in members:
                self._finish(member, "dropped", DROP_NO_ENDPOINT)

    def _reassembly_sweep(self):
        now = self.clock.now_ms()
        for key, buf in list(self._reassembly.items()):
            dead = []
            for desc in buf.values():
                try:
                    if expiry_time(desc.bundle, desc.received_at) > now:
                        break
                except MissingBundleAge:
                    pass
                dead.append(desc)
            else:
                del self._reassembly[key]
                for desc in dead:
                    self._finish(desc, "dropped", DROP_EXPIRED)
        self._add_timer(now + 5000, self._reassembly_sweep)

    def _drop_sink(self, sink):
        closer = getattr(sink, "close_from_core", None)
        if closer is not None:
            closer()

    # --- dispatch ---

    def _dispatch(self, desc: BundleDescriptor):
        desc.dispatch_attempts += 1
        if desc.dispatch_attempts > _MAX_DISPATCH_ATTEMPTS:
            return self._finish(desc, "dropped", DROP_NO_ROUTE)
        dest_node = desc.bundle.destination.node_id()

        if not desc.bypass_cache:
            cached = self.cache.get(dest_node)
            if cached is not None:
                self.events.emit(self.clock.now_ms(), "dispatch_cached",
                                 dest=str(dest_node), desc=desc.desc_id)
                return self._apply_decision(desc, cached)

        for entry in self.fib.lookup(dest_node):
            if entry.direct and entry.connected:
                decision = forward_to(entry.node_id, entry.cla_address)
                self._maybe_cache(dest_node, decision)
                return self._apply_decision(desc, decision)

        if self.bdm is not None:
            dest_text = str(dest_node)
            outstanding = self._pending_dest.get(dest_text)
            if outstanding is not None:
                # coalesce: ride along on the in-flight request for this node
                self._dispatch_waiters[outstanding].append(desc)
                return
            rid = next(self._request_ids)
            meta = self._bundle_meta(desc.bundle)
            if self.bdm.send_dispatch_request(rid, meta):
                self.counters.dispatch_requests += 1
                self.events.emit(self.clock.now_ms(), "dispatch_request",
                                 request_id=rid, dest=dest_text,
                                 desc=desc.desc_id)
                self.pending_dispatch[rid] = desc
                self._pending_conn[rid] = self.bdm
                self._pending_dest[dest_text] = rid
                self._dispatch_waiters[rid] = []
                deadline = self.clock.now_ms() + self.config.bdm_timeout_ms
                self._add_timer(deadline, lambda rid=rid: self._bdm_timeout(rid))
                return
            self._connection_closed(self.bdm)

        self._dispatch_fallback(desc)

    def _dispatch_fallback(self, desc: BundleDescriptor):
        if self.storage_cla is not None:
            if desc.storage_unavailable:
                return self._finish(desc, "dropped", DROP_STORAGE_FULL)
            return self._apply_decision(desc, STORE_DECISION)
        self._finish(desc, "dropped", DROP_NO_ROUTE)

    def _bundle_meta(self, b: Bundle) -> dict:
        return {
            "src": str(b.source), "dst": str(b.destination),
            "creation": (b.creation.dtn_time_ms, b.creation.sequence_number),
            "size": len(encode_bundle(b)), "lifetime_ms": b.lifetime_ms,
        }

    def _take_pending(self, rid: int):
        desc = self.pending_dispatch.pop(rid, None)
        self._pending_conn.pop(rid, None)
        waiters = self._dispatch_waiters.pop(rid, [])
        if desc is not None:
            dest_text = str(desc.bundle.destination.node_id())
            if self._pending_dest.get(dest_text) == rid:
                del self._pending_dest[dest_text]
        return desc, waiters

    def _bdm_timeout(self, rid: int):
        desc, waiters = self._take_pending(rid)
        if desc is None:
            return
        self.events.emit(self.clock.now_ms(), "bdm_timeout", request_id=rid,
                         desc=desc.desc_id)
        for each in [desc] + waiters:
            self._dispatch_fallback(each)

    def _maybe_cache(self, dest_node: EndpointId, decision: DispatchDecision):
        if decision.action == DispatchAction.DROP:
            return
        if decision.action == DispatchAction.FORWARD:
            for hop in decision.next_hops:
                if self.registry.find_active_link(hop.cla_address) is None:
                    return
        self.cache.put(dest_node, decision, decision.referenced_addresses(),
                       self.clock.now_ms())

    def _handle_dispatch_reply(self, msg: DispatchReply):
        desc, waiters = self._take_pending(msg.request_id)
        if desc is None:
            return
        decision = msg.decision
        if decision is None:
            for each in [desc] + waiters:
                self._dispatch_fallback(each)
            return
        self.events.emit(self.clock.now_ms(), "dispatch_decision",
                         request_id=msg.request_id,
                         action=decision.action.name, desc=desc.desc_id)
        self._maybe_cache(desc.bundle.destination.node_id(), decision)
        for each in [desc] + waiters:
            self._apply_decision(each, decision)

    # --- decision application ---

    def _apply_decision(self, desc: BundleDescriptor, decision: DispatchDecision):
        if decision.action == DispatchAction.DROP:
            return self._finish(desc, "dropped", DROP_DISPATCHER)
        if decision.action == DispatchAction.STORE:
            return self._store(desc)
        for hop in decision.next_hops:
            link = self.registry.find_active_link(hop.cla_address)
            if link is None:
                continue
            if self._transmit(desc, link, decision.max_fragment_payload):
                return
            if (desc.parent or desc).outcome is not None:
                return  # dropped during fragmentation handling
        self._retry_dispatch(desc)

    def _retry_dispatch(self, desc: BundleDescriptor):
        desc.bypass_cache = True
        self._dispatch(desc)

    def _store(self, desc: BundleDescriptor):
        if self.storage_cla is None or desc.storage_unavailable:
            return self._finish(desc, "dropped", DROP_STORAGE_FULL)
        link = self.storage_cla.storage_link
        if link is None or not link.enqueue(desc):
            return self._finish(desc, "dropped", DROP_NO_ROUTE)

    def _transmit(self, desc: BundleDescriptor, link, max_fragment_payload) -> bool:
        b = desc.bundle
        max_size = link.cla.max_bundle_size()
        wire_len = len(encode_bundle(b))
        oversize = wire_len > max_size
        if not oversize and max_fragment_payload is None:
            return self._enqueue_or_inline(link, desc)
        if b.must_not_fragment:
            if oversize:
                self._finish(desc, "dropped", DROP_DISPATCHER)
                return False
            return self._enqueue_or_inline(link, desc)
        overhead = wire_len - len(b.payload) + 32
        budget = max_size - overhead
        if max_fragment_payload is not None:
            budget = min(budget, max_fragment_payload)
        if budget < 1:
            self._finish(desc, "dropped", DROP_DISPATCHER)
            return False
        fragments = fragment_bundle(b, budget)
        if len(fragments) == 1:
            return self._enqueue_or_inline(link, desc)
        ok = True
        for fragment in fragments:
            child = desc.spawn_fragment(fragment)
            if not self._enqueue_or_inline(link, child):
                ok = False
                break
        return ok

    def _enqueue_or_inline(self, link, desc) -> bool:
        if link.cla.inline_tx:
            try:
                link.cla.send_inline(link, desc)
            except Exception as exc:
                self.events.emit(self.clock.now_ms(), "tx_error",
                                 cla=link.cla_name, reason=str(exc))
                self._finish(desc, "dropped", DROP_DISPATCHER)
                return False
            self._finish(desc, "forwarded")
            return True
        if not link.enqueue(desc):
            return False
        return True

    # --- TX completion ---

    def _handle_tx_done(self, msg: TxDone):
        self.events.emit(self.clock.now_ms(), "tx", cla=msg.link.cla_name,
                         peer=str(msg.link.peer_cla_address),
                         desc=(msg.desc.parent or msg.desc).desc_id)
        self._finish(msg.desc, msg.link.cla.outcome_kind)

    def _handle_tx_failed(self, msg: TxFailed):
        desc = msg.desc.parent or msg.desc
        if desc.outcome is not None:
            return
        self.events.emit(self.clock.now_ms(), "tx_failed", cla=msg.link.cla_name,
                         reason=msg.reason, desc=desc.desc_id)
        if self.storage_cla is not None and msg.link.cla is self.storage_cla:
            desc.storage_unavailable = True
        desc.bypass_cache = True
        self._dispatch(desc)

    # --- link events & control ---

    def _handle_link_event(self, msg: LinkEventMsg):
        event = msg.event
        link = event.link
        addr = link.peer_cla_address
        now = self.clock.now_ms()
        if event.kind == "up":
            changed = self.fib.on_link_up(addr, link.link_id)
            self.events.emit(now, "link_up", address=str(addr), link=link.link_id)
            for entry in changed:
                self._notify_link("notify_up", entry.node_id, addr)
        else:
            changed = self.fib.on_link_down(addr)
            self.cache.invalidate_address(addr)
            self.events.emit(now, "link_down", address=str(addr), link=link.link_id)
            for entry in changed:
                self._notify_link("notify_down", entry.node_id, addr)
            for desc in event.drained or []:
                desc.bypass_cache = True
                self._dispatch(desc)

    def _handle_link_request(self, msg: LinkRequest):
        addr = msg.cla_address
        try:
            cla = self.registry.resolve(addr)
        except UnknownCla:
            msg.reply.put(("error", f"unknown CLA {addr.cla_name!r}"))
            return
        if msg.op == "down":
            self.fib.remove(msg.node_id, addr)
            self.cache.invalidate_destination(msg.node_id)
            self.cache.invalidate_address(addr)
            self._notify_link("notify_down", msg.node_id.node_id(), addr)
            if not self.fib.entries_for_address(addr):
                link = self.registry.find_active_link(addr)
                if link is not None:
                    cla.link_down(link)
            msg.reply.put(("ok", ""))
            return
        entry = self.fib.upsert(msg.node_id, addr, direct=msg.direct)
        self.cache.invalidate_destination(msg.node_id)
        existing = self.registry.find_active_link(addr)
        if existing is not None:
            entry.connected = True
            entry.link_id = existing.link_id
            self._notify_link("notify_up", entry.node_id, addr)
            msg.reply.put(("ok", ""))
            return
        self._notify_link("notify_up", entry.node_id, addr)

        def connector():
            try:
                cla.link_up(addr)
            except Exception as exc:
                msg.reply.put(("error", str(exc)))
            else:
                msg.reply.put(("ok", ""))
        threading.Thread(target=connector, name=f"connect-{addr}",
                         daemon=True).start()

    def _notify_link(self, op: str, node_id: EndpointId, addr: ClaAddress):
        for conn in list(self.link_control_conns):
            if not conn.notify_link(op, str(node_id), str(addr)):
                self._connection_closed(conn)

    # --- registrations & control claims ---

    def _handle_register(self, msg: RegisterEndpoint):
        if not msg.agent_id:
            msg.reply.put(("error", "empty agent id"))
            return
        reg = self.registrations.get(msg.agent_id)
        if reg is None:
            reg = Registration(msg.agent_id, msg.secret)
            self.registrations[msg.agent_id] = reg
        elif reg.secret != msg.secret:
            msg.reply.put(("occupied", "shared secret mismatch"))
            return
        slot = "send_owner" if msg.direction == "send" else "recv_sink"
        if getattr(reg, slot) is not None:
            msg.reply.put(("occupied", f"{msg.direction} direction already registered"))
            return
        setattr(reg, slot, msg.owner)
        self.events.emit(self.clock.now_ms(), "register", agent=msg.agent_id,
                         direction=msg.direction)
        msg.reply.put(("ok", ""))

    def _handle_deregister(self, msg: DeregisterEndpoint):
        reg = self.registrations.get(msg.agent_id)
        if reg is None:
            return
        slot = "send_owner" if msg.direction == "send" else "recv_sink"
        if getattr(reg, slot) is msg.owner:
            setattr(reg, slot, None)
        if reg.send_owner is None and reg.recv_sink is None:
            del self.registrations[msg.agent_id]

    def register_internal_endpoint(self, agent_id: str, fn) -> None:
        """Wire an in-process delivery sink (storage commands, BIBE unwrap)."""
        reply = queue.Queue()
        self.inbox.put(RegisterEndpoint(agent_id, b"\x00internal", "recv",
                                        InternalSink(fn), reply))

    def _handle_send_adu(self, msg: SendAdu):
        try:
            source = self.node_id.with_agent(msg.agent_id)
        except Exception:
            msg.reply.put(("error", f"agent id {msg.agent_id!r} unusable as source"))
            return
        creation = msg.creation
        if creation is None or (creation.dtn_time_ms == 0 and
                                creation.sequence_number == 0):
            creation = self._next_creation()
        lifetime = msg.lifetime_ms if msg.lifetime_ms is not None \
            else self.config.default_lifetime_ms
        extensions = ()
        if creation.dtn_time_ms == 0:
            extensions = (bundle_age_block(0, 2, self.config.default_crc),)
        flags = FLAG_ADMIN_RECORD if msg.is_bibe else 0
        try:
            bundle = make_bundle(
                msg.destination, source, msg.payload, creation=creation,
                lifetime_ms=lifetime, proc_flags=flags,
                crc_type=self.config.default_crc, extension_blocks=extensions)
        except Exception as exc:
            msg.reply.put(("error", str(exc)))
            return
        desc = BundleDescriptor(bundle, Origin(OriginKind.AGENT, msg.agent_id),
                                self.clock.now_ms())
        msg.reply.put(("ok", ""))
        self._ingest(desc)

    def _next_creation(self) -> CreationTimestamp:
        now = self.clock.now_ms()
        last_t, last_seq = self._last_creation
        if now > last_t:
            self._last_creation = (now, 0)
        else:
            self._last_creation = (last_t, last_seq + 1)
        return CreationTimestamp(*self._last_creation)

    def _handle_claim_dispatch(self, msg: ClaimDispatch):
        if self.bdm is not None and self.bdm is not msg.conn:
            msg.reply.put(("occupied", "another dispatcher holds authority"))
            return
        self.bdm = msg.conn
        # decisions made by a previous authority must not outlive it
        self.cache.clear()
        self.events.emit(self.clock.now_ms(), "bdm_attached", conn=id(msg.conn))
        msg.reply.put(("ok", ""))

    def _handle_release_dispatch(self, msg: ReleaseDispatch):
        if self.bdm is msg.conn:
            self.bdm = None
            self.cache.clear()
            self.events.emit(self.clock.now_ms(), "bdm_detached", conn=id(msg.conn))

    def _handle_claim_link_control(self, msg: ClaimLinkControl):
        if msg.conn not in self.link_control_conns:
            self.link_control_conns.append(msg.conn)
        msg.reply.put(("ok", ""))
        # late joiners get the current FIB as a snapshot of notify messages
        for entry in self.fib.snapshot():
            op = "notify_up" if entry.connected else "notify_down"
            if not msg.conn.notify_link(op, str(entry.node_id),
                                        str(entry.cla_address)):
                self._connection_closed(msg.conn)
                return

    def _handle_connection_closed(self, msg: ConnectionClosed):
        self._connection_closed(msg.conn)

    def _connection_closed(self, conn):
        for agent_id in list(self.registrations):
            reg = self.registrations[agent_id]
            if reg.send_owner is conn:
                reg.send_owner = None
            if reg.recv_sink is conn:
                reg.recv_sink = None
            if reg.send_owner is None and reg.recv_sink is None:
                del self.registrations[agent_id]
        if self.bdm is conn:
            self.bdm = None
            self.cache.clear()
            self.events.emit(self.clock.now_ms(), "bdm_detached", conn=id(conn))
            for rid in [r for r, c in self._pending_conn.items() if c is conn]:
                desc, waiters = self._take_pending(rid)
                for each in ([desc] if desc else []) + waiters:
                    self._dispatch_fallback(each)
        if conn in self.link_control_conns:
            self.link_control_conns.remove(conn)

    def _handle_fib_snapshot(self, msg: FibSnapshotRequest):
        msg.reply.put([(str(e.node_id), str(e.cla_address), sorted(e.flags))
                       for e in self.fib.snapshot()])

    _HANDLERS = {}


def _install_handlers():
    BundleProcessor._HANDLERS = {
        Ingest: BundleProcessor._handle_ingest,
        LinkEventMsg: BundleProcessor._handle_link_event,
        TxDone: BundleProcessor._handle_tx_done,
        TxFailed: BundleProcessor._handle_tx_failed,
        RegisterEndpoint: BundleProcessor._handle_register,
        DeregisterEndpoint: BundleProcessor._handle_deregister,
        SendAdu: BundleProcessor._handle_send_adu,
        LinkRequest: BundleProcessor._handle_link_request,
        ClaimDispatch: BundleProcessor._handle_claim_dispatch,
        ReleaseDispatch: BundleProcessor._handle_release_dispatch,
        ClaimLinkControl: BundleProcessor._handle_claim_link_control,
        DispatchReply: BundleProcessor._handle_dispatch_reply,
        ConnectionClosed: BundleProcessor._handle_connection_closed,
        FibSnapshotRequest: BundleProcessor._handle_fib_snapshot,
    }


_install_handlers()
