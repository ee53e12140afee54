"""Bundle-in-bundle encapsulation as a CLA: a next hop of the form
"bibe:<outer-destination-eid>" wraps the bundle as the payload of an outer
bundle routed through the enclosing network; bundles arriving at the local
BIBE endpoint are unwrapped and re-ingested. Nesting works to arbitrary
depth by recursion through the ingest path."""

import logging

from .. import cbor
from ..bundle import Bundle, FLAG_ADMIN_RECORD, expiry_time, make_bundle
from ..codec import decode_bundle, encode_bundle
from ..core import BundleDescriptor, Origin, OriginKind
from ..eid import EndpointId, parse_eid
from ..errors import (InnerDecodeFailed, InnerTooLarge, InvalidEndpointId,
                      MalformedBpdu, MissingBundleAge)
from .base import Cla, ClaAddress, Link, serialize_for_tx

log = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "bibe"
DEFAULT_OUTER_LIFETIME_MS = 24 * 3600 * 1000


def encapsulation_pdu(inner_bytes: bytes) -> bytes:
    """Wrap serialized-bundle bytes in the 3-element protocol data unit;
    the two leading custody fields are fixed at 0 here."""
    return cbor.encode([0, 0, inner_bytes])


def open_pdu(payload: bytes) -> bytes:
    """Validate a PDU and return the encapsulated bundle bytes."""
    try:
        item = cbor.decode(payload)
    except cbor.CborError as exc:
        raise MalformedBpdu(f"PDU is not valid CBOR: {exc}") from None
    if not isinstance(item, list) or len(item) != 3:
        raise MalformedBpdu(f"PDU must be a 3-element array, got {item!r}")
    transmission_id, retransmission_time, inner = item
    if transmission_id != 0 or retransmission_time != 0:
        raise MalformedBpdu("custody transfer fields must be 0")
    if not isinstance(inner, bytes):
        raise MalformedBpdu("encapsulated bundle must be a byte string")
    return inner


def decapsulate(outer: Bundle) -> Bundle:
    """Extract and decode the inner bundle of an encapsulating bundle."""
    inner_bytes = open_pdu(outer.payload)
    try:
        return decode_bundle(inner_bytes)
    except Exception as exc:
        raise InnerDecodeFailed(str(exc)) from None


class BibeCla(Cla):
    """config keys: endpoint, max_bundle_size, outer_lifetime_ms."""

    inline_tx = True

    def __init__(self, name, core, config):
        super().__init__(name, core, config)
        self.endpoint = config.get("endpoint", DEFAULT_ENDPOINT)
        self.outer_lifetime_ms = config.get("outer_lifetime_ms",
                                            DEFAULT_OUTER_LIFETIME_MS)

    def start(self):
        self.core.register_internal_endpoint(self.endpoint, self._unwrap_sink)

    @property
    def local_endpoint(self) -> EndpointId:
        return self.core.node_id.with_agent(self.endpoint)

    def link_up(self, address: ClaAddress) -> Link:
        try:
            parse_eid(address.detail)
        except InvalidEndpointId as exc:
            raise InvalidEndpointId(f"bad BIBE outer destination: {exc}") from None
        link = Link(self, address, self.core.tx_queue_depth)
        self._activate_link(link, start_tx=False)
        return link

    # --- egress: wrap and re-ingest the outer bundle ---

    def send_inline(self, link: Link, desc) -> None:
        outer_dest = parse_eid(link.peer_cla_address.detail)
        outer = self.encapsulate(desc, outer_dest)
        outer_desc = BundleDescriptor(
            outer, Origin(OriginKind.CLA, str(link.peer_cla_address)),
            received_at=self.core.clock.now_ms())
        self.core.events.emit(self.core.clock.now_ms(), "bibe_wrap",
                              outer_dest=str(outer_dest),
                              inner_dest=str(desc.bundle.destination))
        self.core.ingest_inline(outer_desc)

    def encapsulate(self, desc, outer_dest: EndpointId) -> Bundle:
        now = self.core.clock.now_ms()
        inner_bytes = serialize_for_tx(desc, now)
        try:
            remaining = max(0, expiry_time(desc.bundle, desc.received_at) - now)
        except MissingBundleAge:
            remaining = 0
        outer = make_bundle(
            outer_dest,
            self.local_endpoint,
            encapsulation_pdu(inner_bytes),
            creation=self.core._next_creation(),
            lifetime_ms=min(self.outer_lifetime_ms, remaining),
            proc_flags=FLAG_ADMIN_RECORD,
            crc_type=self.core.config.default_crc,
        )
        if len(encode_bundle(outer)) > self.max_bundle_size():
            raise InnerTooLarge(
                f"outer bundle exceeds {self.max_bundle_size()} bytes")
        return outer

    # --- ingress: unwrap bundles delivered to the local BIBE endpoint ---

    def _unwrap_sink(self, outer: Bundle) -> bool:
        try:
            inner = decapsulate(outer)
        except (MalformedBpdu, InnerDecodeFailed) as exc:
            self.core.events.emit(self.core.clock.now_ms(), "bibe_reject",
                                  reason=str(exc))
            return True
        desc = BundleDescriptor(inner, Origin(OriginKind.CLA, f"{self.name}:{outer.source}"),
                                received_at=self.core.clock.now_ms())
        self.core.events.emit(self.core.clock.now_ms(), "bibe_unwrap",
                              inner_dest=str(inner.destination))
        self.core.ingest_inline(desc)
        return True
