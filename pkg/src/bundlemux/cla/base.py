"""Abstract convergence-layer adapter contract and per-link machinery.

Every CLA implements three groups of functions: reception (read wire data
and hand bundles to the processor), transmission (serialize and send), and
management (start/stop, link setup/teardown, size limits). The generic part
here owns the per-link TX worker and the link state transitions; the bundle
processor never references a concrete CLA by name.
"""

import enum
import itertools
import logging
import queue
import threading
from dataclasses import dataclass, replace as dc_replace

from ..bundle import BLOCK_TYPE_BUNDLE_AGE, bundle_age_block
from ..codec import encode_bundle
from ..errors import DuplicateClaName, UnknownCla

log = logging.getLogger(__name__)

_link_ids = itertools.count(1)
_SHUTDOWN = object()


@dataclass(frozen=True)
class ClaAddress:
    """A CLA-qualified address, text form "<cla_name>:<detail>"."""

    cla_name: str
    detail: str

    def __str__(self) -> str:
        return f"{self.cla_name}:{self.detail}"

    @classmethod
    def parse(cls, text: str) -> "ClaAddress":
        name, sep, detail = text.partition(":")
        if not sep or not name:
            raise ValueError(f"CLA address must be <cla>:<detail>, got {text!r}")
        return cls(name, detail)


class LinkState(enum.Enum):
    CONNECTING = "connecting"
    ACTIVE = "active"
    CLOSING = "closing"
    DOWN = "down"


class Link:
    """One CLA link: a TX queue plus (for socket CLAs) an RX worker."""

    def __init__(self, cla: "Cla", peer_cla_address: ClaAddress,
                 tx_queue_depth: int = 256):
        self.link_id = next(_link_ids)
        self.cla = cla
        self.cla_name = cla.name
        self.peer_cla_address = peer_cla_address
        self.peer_node_id = None
        self.state = LinkState.CONNECTING
        self.tx_queue = queue.Queue(maxsize=tx_queue_depth)
        self._lock = threading.Lock()

    def enqueue(self, desc) -> bool:
        """Queue a descriptor for transmission; False if the link is not
        ACTIVE or the queue is full."""
        with self._lock:
            if self.state != LinkState.ACTIVE:
                return False
            try:
                self.tx_queue.put_nowait(desc)
                return True
            except queue.Full:
                return False

    def activate(self) -> bool:
        with self._lock:
            if self.state != LinkState.CONNECTING:
                return False
            self.state = LinkState.ACTIVE
            return True

    def begin_close(self) -> bool:
        """Transition towards DOWN; True for the single caller that wins."""
        with self._lock:
            if self.state in (LinkState.CLOSING, LinkState.DOWN):
                return False
            self.state = LinkState.CLOSING
            return True

    def finish_close(self) -> "list":
        """Mark DOWN and collect undelivered descriptors from the TX queue."""
        drained = []
        with self._lock:
            self.state = LinkState.DOWN
            while True:
                try:
                    item = self.tx_queue.get_nowait()
                except queue.Empty:
                    break
                if item is not _SHUTDOWN:
                    drained.append(item)
            self.tx_queue.put(_SHUTDOWN)
        return drained

    def __repr__(self):
        return f"<Link {self.link_id} {self.peer_cla_address} {self.state.value}>"


@dataclass
class LinkEvent:
    kind: str  # "up" | "down"
    link: Link
    drained: "list" = None


def serialize_for_tx(desc, now_ms: int) -> bytes:
    """Encode a descriptor's bundle for the wire, bumping the bundle-age
    block by the residence time at this node."""
    bundle = desc.bundle
    age = bundle.find_block(BLOCK_TYPE_BUNDLE_AGE)
    if age is not None:
        residence = max(0, now_ms - desc.received_at)
        updated = bundle_age_block(age.bundle_age_ms() + residence,
                                   age.block_number, age.crc_type)
        updated = dc_replace(updated, flags=age.flags)
        bundle = bundle.replace_block(updated)
    return encode_bundle(bundle)


class Cla:
    """Base class for convergence-layer adapters.

    Subclasses implement send_frame (or send_inline when inline_tx is set)
    plus link management; the generic TX worker lives here.

    Contract attributes the processor reads without knowing the concrete
    CLA: inline_tx (transmission happens synchronously on the processing
    loop), outcome_kind (what a completed transmission means for a bundle),
    tx_failure_fatal (whether a failed send implies the link is dead).
    """

    inline_tx = False
    outcome_kind = "forwarded"
    tx_failure_fatal = True

    def __init__(self, name: str, core, config: dict):
        self.name = name
        self.core = core
        self.config = config
        self._links = {}  # link_id -> Link
        self._links_lock = threading.Lock()
        self._stopping = False

    # --- management functions ---

    def start(self) -> None:
        pass

    def stop(self) -> None:
        self._stopping = True
        for link in self.links():
            self.link_down(link)

    def max_bundle_size(self) -> int:
        return self.config.get("max_bundle_size", 16 * 1024 * 1024)

    def link_up(self, address: ClaAddress) -> Link:
        raise NotImplementedError

    def link_down(self, link: Link) -> None:
        if not link.begin_close():
            return
        self._teardown(link)
        drained = link.finish_close()
        self._forget(link)
        self.core.post_link_event(LinkEvent("down", link, drained))

    def links(self) -> "list[Link]":
        with self._links_lock:
            return list(self._links.values())

    def find_link(self, address: ClaAddress) -> "Link | None":
        with self._links_lock:
            for link in self._links.values():
                if link.peer_cla_address == address and link.state == LinkState.ACTIVE:
                    return link
        return None

    # --- transmission functions ---

    def send_frame(self, link: Link, data: bytes) -> None:
        raise NotImplementedError

    def send_inline(self, link: Link, desc) -> None:
        raise NotImplementedError

    # --- generic link plumbing ---

    def _register_link(self, link: Link) -> None:
        with self._links_lock:
            self._links[link.link_id] = link

    def _forget(self, link: Link) -> None:
        with self._links_lock:
            self._links.pop(link.link_id, None)

    def _activate_link(self, link: Link, start_tx: bool = True) -> None:
        self._register_link(link)
        link.activate()
        if start_tx and not self.inline_tx:
            worker = threading.Thread(target=self._tx_loop, args=(link,),
                                      name=f"{self.name}-tx-{link.link_id}",
                                      daemon=True)
            worker.start()
        self.core.post_link_event(LinkEvent("up", link))

    def _tx_loop(self, link: Link) -> None:
        while True:
            desc = link.tx_queue.get()
            if desc is _SHUTDOWN:
                return
            try:
                data = serialize_for_tx(desc, self.core.clock.now_ms())
                self.send_frame(link, data)
            except Exception as exc:
                log.warning("%s: TX on %r failed: %s", self.name, link, exc)
                self.core.post_tx_failed(desc, link, str(exc))
                if self.tx_failure_fatal:
                    self.link_down(link)
                    return
                continue
            self.core.post_tx_done(desc, link)

    def _teardown(self, link: Link) -> None:
        """CLA-specific close of the underlying channel."""


class ClaRegistry:
    def __init__(self):
        self._clas = {}

    def register(self, cla: Cla) -> None:
        if cla.name in self._clas:
            raise DuplicateClaName(cla.name)
        self._clas[cla.name] = cla

    def get(self, name: str) -> Cla:
        try:
            return self._clas[name]
        except KeyError:
            raise UnknownCla(name) from None

    def resolve(self, address: ClaAddress) -> Cla:
        return self.get(address.cla_name)

    def all(self) -> "list[Cla]":
        return list(self._clas.values())

    def find_active_link(self, address: ClaAddress) -> "Link | None":
        cla = self._clas.get(address.cla_name)
        return cla.find_link(address) if cla else None
