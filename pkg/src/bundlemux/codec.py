"""BPv7 wire codec: version detection, bundle encode/decode, CRC handling.

The encoder emits one canonical form: an indefinite-length outer array
(0x9F ... 0xFF) holding definite-length block arrays with minimal-length
integers. The decoder also accepts definite-length outer arrays.
"""

import dataclasses

from . import cbor
from .bundle import (BLOCK_TYPE_PAYLOAD, BpVersion, Bundle, CanonicalBlock,
                     CreationTimestamp, FLAG_IS_FRAGMENT)
from .crc import CrcType, compute_crc
from .eid import EndpointId
from .errors import (CrcMismatch, MalformedBundle, TruncatedInput,
                     UnsupportedVersion)

# Definite-length outer arrays of these arities are accepted as v7 on the
# version gate; 0x9F is what this encoder emits.
_V7_DEFINITE_FIRST = frozenset(range(0x84, 0x8C))


def detect_version(first_byte: int) -> BpVersion:
    """Classify incoming wire data by its first byte."""
    if first_byte == 0x06:
        return BpVersion.V6
    if first_byte == 0x9F or first_byte in _V7_DEFINITE_FIRST:
        return BpVersion.V7
    raise UnsupportedVersion(first_byte)


def _encode_block_array(items: list, crc_type: CrcType) -> bytes:
    """Encode a block's item array, computing the trailing CRC if requested.

    The CRC is computed over the serialized array with the CRC byte string
    present but zero-filled.
    """
    if crc_type == CrcType.NONE:
        return cbor.encode(items)
    zeroed = cbor.encode(items + [b"\x00" * crc_type.length])
    crc = compute_crc(crc_type, zeroed)
    return zeroed[:-crc_type.length] + crc


def _encode_primary(b: Bundle) -> bytes:
    items = [
        7,
        b.proc_flags,
        int(b.crc_type),
        b.destination.to_cbor_item(),
        b.source.to_cbor_item(),
        b.report_to.to_cbor_item(),
        b.creation.to_cbor_item(),
        b.lifetime_ms,
    ]
    if b.is_fragment:
        items += [b.fragment_offset, b.total_adu_length]
    return _encode_block_array(items, b.crc_type)


def _encode_canonical(block: CanonicalBlock) -> bytes:
    items = [block.block_type, block.block_number, block.flags,
             int(block.crc_type), block.data]
    return _encode_block_array(items, block.crc_type)


def encode_bundle(b: Bundle) -> bytes:
    if b.version != BpVersion.V7:
        raise UnsupportedVersion(0x06, version=int(b.version))
    b.validate()
    parts = [cbor.INDEF_ARRAY_START, _encode_primary(b)]
    parts += [_encode_canonical(block) for block in b.blocks]
    parts.append(cbor.BREAK)
    return b"".join(parts)


def _verify_block_crc(raw: bytes, items: list, block_number: int) -> None:
    """Check the trailing CRC of one serialized block array.

    `raw` is the exact wire span of the block; the CRC byte string is its
    final element, so its content bytes are the last N bytes of the span.
    """
    try:
        kind = CrcType(items[2] if block_number == 0 else items[3])
    except (ValueError, TypeError):
        raise MalformedBundle(f"unknown CRC type in block {block_number}")
    if kind == CrcType.NONE:
        return
    crc_value = items[-1]
    if not isinstance(crc_value, bytes) or len(crc_value) != kind.length:
        raise MalformedBundle(f"block {block_number} CRC field has wrong shape")
    zeroed = raw[:-kind.length] + b"\x00" * kind.length
    if compute_crc(kind, zeroed) != crc_value:
        raise CrcMismatch(block_number)


def _decode_eid(item, what: str) -> EndpointId:
    try:
        return EndpointId.from_cbor_item(item)
    except Exception as exc:
        raise MalformedBundle(f"bad {what} EID: {exc}") from None


def _uint(value, what: str) -> int:
    if not isinstance(value, int) or value < 0:
        raise MalformedBundle(f"{what} must be an unsigned integer, got {value!r}")
    return value


def _decode_primary(raw: bytes, items: list) -> Bundle:
    if not isinstance(items, list) or len(items) < 8:
        raise MalformedBundle("primary block array too short")
    version = _uint(items[0], "version")
    if version != 7:
        raise UnsupportedVersion(0x06 if version == 6 else version, version=version)
    flags = _uint(items[1], "bundle processing flags")
    try:
        crc_type = CrcType(_uint(items[2], "CRC type"))
    except ValueError:
        raise MalformedBundle(f"unknown primary CRC type {items[2]!r}")
    expected_len = 8 + (2 if flags & FLAG_IS_FRAGMENT else 0) \
        + (1 if crc_type != CrcType.NONE else 0)
    if len(items) != expected_len:
        raise MalformedBundle(
            f"primary block has {len(items)} items, expected {expected_len}")
    _verify_block_crc(raw, items, 0)
    creation = items[6]
    if (not isinstance(creation, list) or len(creation) != 2
            or not all(isinstance(n, int) and n >= 0 for n in creation)):
        raise MalformedBundle(f"bad creation timestamp: {creation!r}")
    fragment_offset = total_len = None
    if flags & FLAG_IS_FRAGMENT:
        fragment_offset = _uint(items[8], "fragment offset")
        total_len = _uint(items[9], "total ADU length")
    return Bundle(
        version=BpVersion.V7,
        proc_flags=flags,
        destination=_decode_eid(items[3], "destination"),
        source=_decode_eid(items[4], "source"),
        report_to=_decode_eid(items[5], "report-to"),
        creation=CreationTimestamp(creation[0], creation[1]),
        lifetime_ms=_uint(items[7], "lifetime"),
        fragment_offset=fragment_offset,
        total_adu_length=total_len,
        crc_type=crc_type,
    )


def _decode_canonical(raw: bytes, items: list) -> CanonicalBlock:
    if not isinstance(items, list) or len(items) < 5:
        raise MalformedBundle("canonical block array too short")
    block_type = _uint(items[0], "block type")
    block_number = _uint(items[1], "block number")
    flags = _uint(items[2], "block flags")
    try:
        crc_type = CrcType(_uint(items[3], "block CRC type"))
    except ValueError:
        raise MalformedBundle(f"unknown block CRC type {items[3]!r}")
    expected_len = 5 + (1 if crc_type != CrcType.NONE else 0)
    if len(items) != expected_len:
        raise MalformedBundle(
            f"block {block_number} has {len(items)} items, expected {expected_len}")
    if not isinstance(items[4], bytes):
        raise MalformedBundle(f"block {block_number} data is not a byte string")
    _verify_block_crc(raw, items, block_number)
    return CanonicalBlock(block_type, block_number, flags, crc_type, items[4])


def decode_bundle(data: bytes) -> Bundle:
    """Decode one complete serialized bundle, verifying all CRCs."""
    if len(data) == 0:
        raise TruncatedInput("empty input")
    if data[0] == 0x06:
        raise UnsupportedVersion(data[0], version=6)
    first = data[0]
    indefinite = first == 0x9F
    if not indefinite:
        try:
            major, count, head_len, head_indef = cbor.peek_head(data)
        except cbor.CborTruncated as exc:
            raise TruncatedInput(str(exc)) from None
        except cbor.CborError as exc:
            raise MalformedBundle(str(exc)) from None
        if major != cbor.MAJOR_ARRAY or head_indef:
            raise MalformedBundle(f"bundle must be a CBOR array, first byte 0x{first:02X}")
        pos = head_len
    else:
        count = None
        pos = 1

    spans = []  # (raw bytes, decoded item) per block
    while True:
        if indefinite:
            if pos >= len(data):
                raise TruncatedInput("unterminated bundle array")
            if data[pos] == 0xFF:
                pos += 1
                break
        elif len(spans) == count:
            break
        start = pos
        try:
            item, pos = cbor.decode_prefix(data, pos)
        except cbor.CborTruncated as exc:
            raise TruncatedInput(str(exc)) from None
        except cbor.CborError as exc:
            raise MalformedBundle(str(exc)) from None
        spans.append((bytes(data[start:pos]), item))
    if pos != len(data):
        raise MalformedBundle(f"{len(data) - pos} trailing bytes after bundle")
    if len(spans) < 2:
        raise MalformedBundle("bundle needs a primary and a payload block")

    bundle = _decode_primary(*spans[0])
    blocks = tuple(_decode_canonical(raw, items) for raw, items in spans[1:])
    if blocks[-1].block_type != BLOCK_TYPE_PAYLOAD:
        raise MalformedBundle("last block is not the payload block")
    bundle = dataclasses.replace(bundle, blocks=blocks)
    bundle.validate()
    return bundle


def encoded_size(b: Bundle) -> int:
    return len(encode_bundle(b))
