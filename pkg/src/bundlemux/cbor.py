"""Minimal CBOR subset shared by the bundle codec and the control protocol.

Covers unsigned/negative integers, byte strings, text strings, arrays, maps,
booleans and null. The encoder emits definite lengths with minimal-length
heads; the decoder additionally accepts indefinite-length arrays and maps
(the bundle wire format uses an indefinite outer array). Floats, tags and
chunked strings are intentionally unsupported.
"""

MAJOR_UINT = 0
MAJOR_NINT = 1
MAJOR_BYTES = 2
MAJOR_TEXT = 3
MAJOR_ARRAY = 4
MAJOR_MAP = 5
MAJOR_SIMPLE = 7

INDEF_ARRAY_START = b"\x9f"
BREAK = b"\xff"

_FALSE = 0xF4
_TRUE = 0xF5
_NULL = 0xF6


class CborError(ValueError):
    pass


class CborTruncated(CborError):
    """More bytes are required to finish decoding the current item."""


def encode_head(major: int, value: int) -> bytes:
    if value < 0x18:
        return bytes([(major << 5) | value])
    if value < 0x100:
        return bytes([(major << 5) | 0x18, value])
    if value < 0x10000:
        return bytes([(major << 5) | 0x19]) + value.to_bytes(2, "big")
    if value < 0x100000000:
        return bytes([(major << 5) | 0x1A]) + value.to_bytes(4, "big")
    if value < 0x10000000000000000:
        return bytes([(major << 5) | 0x1B]) + value.to_bytes(8, "big")
    raise CborError("integer does not fit in 64 bits")


def encode(obj) -> bytes:
    out = bytearray()
    _encode_into(obj, out)
    return bytes(out)


def _encode_into(obj, out: bytearray) -> None:
    if obj is True:
        out.append(_TRUE)
    elif obj is False:
        out.append(_FALSE)
    elif obj is None:
        out.append(_NULL)
    elif isinstance(obj, int):
        if obj >= 0:
            out += encode_head(MAJOR_UINT, obj)
        else:
            out += encode_head(MAJOR_NINT, -1 - obj)
    elif isinstance(obj, (bytes, bytearray, memoryview)):
        out += encode_head(MAJOR_BYTES, len(obj))
        out += obj
    elif isinstance(obj, str):
        raw = obj.encode("utf-8")
        out += encode_head(MAJOR_TEXT, len(raw))
        out += raw
    elif isinstance(obj, (list, tuple)):
        out += encode_head(MAJOR_ARRAY, len(obj))
        for item in obj:
            _encode_into(item, out)
    elif isinstance(obj, dict):
        out += encode_head(MAJOR_MAP, len(obj))
        for key in sorted(obj):
            _encode_into(key, out)
            _encode_into(obj[key], out)
    else:
        raise CborError(f"cannot encode {type(obj).__name__}")


def peek_head(data, offset: int = 0):
    """Return (major, value, head_len, indefinite) for the item at offset.

    `value` is the argument (integer value or payload/item count); for
    indefinite-length items it is None.
    """
    if offset >= len(data):
        raise CborTruncated("empty input")
    initial = data[offset]
    major = initial >> 5
    info = initial & 0x1F
    if info < 0x18:
        return major, info, 1, False
    if info == 0x1F:
        if major in (MAJOR_ARRAY, MAJOR_MAP) or initial == 0xFF:
            return major, None, 1, True
        raise CborError(f"indefinite length unsupported for major type {major}")
    if info > 0x1B:
        raise CborError(f"reserved additional info {info}")
    length = 1 << (info - 0x18)
    if offset + 1 + length > len(data):
        raise CborTruncated("truncated integer head")
    value = int.from_bytes(data[offset + 1:offset + 1 + length], "big")
    return major, value, 1 + length, False


def decode_prefix(data, offset: int = 0):
    """Decode one item starting at offset; return (obj, next_offset).

    Raises CborTruncated when the buffer ends mid-item, CborError on
    malformed or unsupported input.
    """
    if offset >= len(data):
        raise CborTruncated("empty input")
    if data[offset] == 0xFF:
        raise CborError("unexpected break code")
    major, value, head_len, indefinite = peek_head(data, offset)
    pos = offset + head_len

    if major == MAJOR_UINT:
        return value, pos
    if major == MAJOR_NINT:
        return -1 - value, pos
    if major in (MAJOR_BYTES, MAJOR_TEXT):
        if indefinite:
            raise CborError("chunked strings unsupported")
        if pos + value > len(data):
            raise CborTruncated("truncated string payload")
        raw = bytes(data[pos:pos + value])
        pos += value
        if major == MAJOR_TEXT:
            return raw.decode("utf-8"), pos
        return raw, pos
    if major == MAJOR_ARRAY:
        items = []
        if indefinite:
            while True:
                if pos >= len(data):
                    raise CborTruncated("unterminated indefinite array")
                if data[pos] == 0xFF:
                    return items, pos + 1
                item, pos = decode_prefix(data, pos)
                items.append(item)
        for _ in range(value):
            item, pos = decode_prefix(data, pos)
            items.append(item)
        return items, pos
    if major == MAJOR_MAP:
        result = {}
        if indefinite:
            while True:
                if pos >= len(data):
                    raise CborTruncated("unterminated indefinite map")
                if data[pos] == 0xFF:
                    return result, pos + 1
                key, pos = decode_prefix(data, pos)
                val, pos = decode_prefix(data, pos)
                result[key] = val
            # not reached
        for _ in range(value):
            key, pos = decode_prefix(data, pos)
            val, pos = decode_prefix(data, pos)
            result[key] = val
        return result, pos
    if major == MAJOR_SIMPLE:
        initial = data[offset]
        if initial == _TRUE:
            return True, pos
        if initial == _FALSE:
            return False, pos
        if initial == _NULL:
            return None, pos
        raise CborError(f"unsupported simple/float value 0x{initial:02X}")
    raise CborError(f"unsupported major type {major}")


def decode(data):
    """Decode exactly one item covering the whole input."""
    obj, end = decode_prefix(data, 0)
    if end != len(data):
        raise CborError(f"{len(data) - end} trailing bytes after item")
    return obj
