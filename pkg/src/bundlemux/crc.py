"""Block CRCs: CRC-16/X.25 and CRC-32C (Castagnoli), table-driven."""

import enum


class CrcType(enum.IntEnum):
    NONE = 0
    CRC16_X25 = 1
    CRC32C = 2

    @property
    def length(self) -> int:
        return {CrcType.NONE: 0, CrcType.CRC16_X25: 2, CrcType.CRC32C: 4}[self]


def _make_table(poly: int, width: int):
    mask = (1 << width) - 1
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = (crc >> 1) ^ poly if crc & 1 else crc >> 1
        table.append(crc & mask)
    return table

# reflected polynomials: 0x1021 -> 0x8408, 0x1EDC6F41 -> 0x82F63B78
_TABLE16 = _make_table(0x8408, 16)
_TABLE32C = _make_table(0x82F63B78, 32)


def crc16_x25(data: bytes) -> int:
    crc = 0xFFFF
    for byte in data:
        crc = (crc >> 8) ^ _TABLE16[(crc ^ byte) & 0xFF]
    return crc ^ 0xFFFF


def crc32c(data: bytes) -> int:
    crc = 0xFFFFFFFF
    for byte in data:
        crc = (crc >> 8) ^ _TABLE32C[(crc ^ byte) & 0xFF]
    return crc ^ 0xFFFFFFFF


def compute_crc(kind: CrcType, data: bytes) -> bytes:
    """CRC over `data` as 2 or 4 octets in network byte order."""
    if kind == CrcType.CRC16_X25:
        return crc16_x25(data).to_bytes(2, "big")
    if kind == CrcType.CRC32C:
        return crc32c(data).to_bytes(4, "big")
    raise ValueError(f"no CRC defined for {kind!r}")
