"""In-memory bundle representation shared by both wire versions.

Only BPv7 bundles are constructed locally; v6 input is detected and rejected
at the codec, but the version tag is part of this structure so a decoded
bundle knows how it must be re-serialized.
"""

import enum
from dataclasses import dataclass, field, replace

from . import cbor
from .crc import CrcType
from .eid import DTN_NONE, EndpointId
from .errors import MalformedBundle, MissingBundleAge

# Unix timestamp of 2000-01-01T00:00:00 UTC; leap seconds ignored.
DTN_EPOCH_UNIX = 946_684_800


class BpVersion(enum.IntEnum):
    V6 = 6
    V7 = 7


# primary-block processing flags (others are preserved untouched)
FLAG_IS_FRAGMENT = 0x0001
FLAG_ADMIN_RECORD = 0x0002
FLAG_MUST_NOT_FRAGMENT = 0x0004
FLAG_ACK_REQUESTED = 0x0020

# canonical-block processing flags
BLOCK_FLAG_REPLICATE_IN_FRAGMENTS = 0x01
BLOCK_FLAG_DELETE_BUNDLE_ON_FAIL = 0x04
BLOCK_FLAG_DISCARD_BLOCK_ON_FAIL = 0x10

BLOCK_TYPE_PAYLOAD = 1
BLOCK_TYPE_PREVIOUS_NODE = 6
BLOCK_TYPE_BUNDLE_AGE = 7
BLOCK_TYPE_HOP_COUNT = 10


@dataclass(frozen=True)
class CreationTimestamp:
    dtn_time_ms: int
    sequence_number: int

    def to_cbor_item(self):
        return [self.dtn_time_ms, self.sequence_number]


@dataclass(frozen=True)
class CanonicalBlock:
    block_type: int
    block_number: int
    flags: int = 0
    crc_type: CrcType = CrcType.NONE
    data: bytes = b""

    @property
    def replicate_in_fragments(self) -> bool:
        return bool(self.flags & BLOCK_FLAG_REPLICATE_IN_FRAGMENTS)

    def hop_count(self) -> "tuple[int, int]":
        pair = cbor.decode(self.data)
        if (not isinstance(pair, list) or len(pair) != 2
                or not all(isinstance(n, int) and n >= 0 for n in pair)):
            raise MalformedBundle(f"hop-count data is not (limit, count): {pair!r}")
        return pair[0], pair[1]

    def bundle_age_ms(self) -> int:
        age = cbor.decode(self.data)
        if not isinstance(age, int) or age < 0:
            raise MalformedBundle(f"bundle-age data is not an unsigned int: {age!r}")
        return age

    def previous_node(self) -> EndpointId:
        return EndpointId.from_cbor_item(cbor.decode(self.data))


def hop_count_block(limit: int, count: int, block_number: int,
                    crc_type: CrcType = CrcType.NONE) -> CanonicalBlock:
    return CanonicalBlock(BLOCK_TYPE_HOP_COUNT, block_number,
                          BLOCK_FLAG_REPLICATE_IN_FRAGMENTS, crc_type,
                          cbor.encode([limit, count]))


def bundle_age_block(age_ms: int, block_number: int,
                     crc_type: CrcType = CrcType.NONE) -> CanonicalBlock:
    return CanonicalBlock(BLOCK_TYPE_BUNDLE_AGE, block_number,
                          BLOCK_FLAG_REPLICATE_IN_FRAGMENTS, crc_type,
                          cbor.encode(age_ms))


def previous_node_block(node: EndpointId, block_number: int,
                        crc_type: CrcType = CrcType.NONE) -> CanonicalBlock:
    return CanonicalBlock(BLOCK_TYPE_PREVIOUS_NODE, block_number, 0, crc_type,
                          cbor.encode(node.to_cbor_item()))


@dataclass(frozen=True)
class Bundle:
    """A parsed bundle: primary-block fields plus the ordered block list.

    `blocks` always ends with the payload block (type 1, number 1); the
    `payload` property mirrors its data.
    """

    version: BpVersion = BpVersion.V7
    proc_flags: int = 0
    destination: EndpointId = DTN_NONE
    source: EndpointId = DTN_NONE
    report_to: EndpointId = DTN_NONE
    creation: CreationTimestamp = CreationTimestamp(0, 0)
    lifetime_ms: int = 0
    fragment_offset: "int | None" = None
    total_adu_length: "int | None" = None
    crc_type: CrcType = CrcType.NONE
    blocks: "tuple[CanonicalBlock, ...]" = field(default_factory=tuple)

    @property
    def payload(self) -> bytes:
        return self.blocks[-1].data

    @property
    def is_fragment(self) -> bool:
        return bool(self.proc_flags & FLAG_IS_FRAGMENT)

    @property
    def is_admin_record(self) -> bool:
        return bool(self.proc_flags & FLAG_ADMIN_RECORD)

    @property
    def must_not_fragment(self) -> bool:
        return bool(self.proc_flags & FLAG_MUST_NOT_FRAGMENT)

    def find_block(self, block_type: int) -> "CanonicalBlock | None":
        for block in self.blocks:
            if block.block_type == block_type:
                return block
        return None

    def replace_block(self, block: CanonicalBlock) -> "Bundle":
        blocks = tuple(block if b.block_number == block.block_number else b
                       for b in self.blocks)
        return replace(self, blocks=blocks)

    def validate(self) -> None:
        if not self.blocks or self.blocks[-1].block_type != BLOCK_TYPE_PAYLOAD:
            raise MalformedBundle("payload block must exist and come last")
        if sum(1 for b in self.blocks if b.block_type == BLOCK_TYPE_PAYLOAD) != 1:
            raise MalformedBundle("exactly one payload block allowed")
        if self.blocks[-1].block_number != 1:
            raise MalformedBundle("payload block number must be 1")
        numbers = [b.block_number for b in self.blocks]
        if len(set(numbers)) != len(numbers):
            raise MalformedBundle("duplicate block numbers")
        if self.is_fragment:
            if self.fragment_offset is None or self.total_adu_length is None:
                raise MalformedBundle("fragment without offset/total length")
            if self.fragment_offset + len(self.payload) > self.total_adu_length:
                raise MalformedBundle("fragment range exceeds total ADU length")
        elif self.fragment_offset is not None or self.total_adu_length is not None:
            raise MalformedBundle("offset/total length on a non-fragment")


def make_bundle(destination: EndpointId, source: EndpointId = DTN_NONE,
                payload: bytes = b"", *, report_to: EndpointId = DTN_NONE,
                creation: CreationTimestamp = CreationTimestamp(0, 0),
                lifetime_ms: int = 0, proc_flags: int = 0,
                crc_type: CrcType = CrcType.NONE,
                payload_crc_type: "CrcType | None" = None,
                extension_blocks: "tuple[CanonicalBlock, ...]" = ()) -> Bundle:
    """Assemble a v7 bundle; the payload block is appended automatically."""
    payload_block = CanonicalBlock(
        BLOCK_TYPE_PAYLOAD, 1,
        crc_type=payload_crc_type if payload_crc_type is not None else crc_type,
        data=payload)
    b = Bundle(
        version=BpVersion.V7, proc_flags=proc_flags, destination=destination,
        source=source, report_to=report_to, creation=creation,
        lifetime_ms=lifetime_ms, crc_type=crc_type,
        blocks=tuple(extension_blocks) + (payload_block,))
    b.validate()
    return b


def expiry_time(b: Bundle, received_at_dtn_ms: int) -> int:
    """DTN time (ms) after which the bundle must not be kept or forwarded.

    Clockless bundles (creation time 0) age from their bundle-age block,
    anchored at the local receive time.
    """
    if b.creation.dtn_time_ms != 0:
        return b.creation.dtn_time_ms + b.lifetime_ms
    age_block = b.find_block(BLOCK_TYPE_BUNDLE_AGE)
    if age_block is None:
        raise MissingBundleAge(f"clockless bundle {b.creation} lacks a bundle-age block")
    remaining = b.lifetime_ms - age_block.bundle_age_ms()
    return received_at_dtn_ms + max(0, remaining)
