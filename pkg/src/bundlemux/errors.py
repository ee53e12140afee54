"""Exception types shared across the node."""


class BundlemuxError(Exception):
    """Base class for all errors raised by this package."""


# --- codec ---

class UnsupportedVersion(BundlemuxError):
    """Wire data carries a bundle protocol version this node does not process."""

    def __init__(self, first_byte: int, version: "int | None" = None):
        self.first_byte = first_byte
        self.version = version
        super().__init__(f"unsupported bundle version (first byte 0x{first_byte:02X})")


class MalformedBundle(BundlemuxError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


class CrcMismatch(BundlemuxError):
    def __init__(self, block_number: int):
        self.block_number = block_number
        super().__init__(f"CRC mismatch in block {block_number}")


class TruncatedInput(BundlemuxError):
    """Input ended before a complete bundle could be decoded."""


class MustNotFragment(BundlemuxError):
    """Fragmentation requested for a bundle that forbids it."""


class IncompleteAdu(BundlemuxError):
    def __init__(self, missing: "list[tuple[int, int]]"):
        self.missing = missing
        super().__init__(f"ADU ranges missing: {missing}")


class InconsistentFragments(BundlemuxError):
    """Fragments disagree on primary-block fields."""


class MissingBundleAge(BundlemuxError):
    """Bundle has no clock reading and no bundle-age block."""


class InvalidEndpointId(BundlemuxError):
    pass


# --- CLA framework ---

class DuplicateClaName(BundlemuxError):
    pass


class UnknownCla(BundlemuxError):
    pass


class ConnectionFailed(BundlemuxError):
    def __init__(self, detail: str):
        self.detail = detail
        super().__init__(detail)


class MalformedFrame(BundlemuxError):
    pass


class FrameTooLarge(BundlemuxError):
    pass


# --- storage ---

class StorageFull(BundlemuxError):
    def __init__(self, quota: int):
        self.quota = quota
        super().__init__(f"storage quota of {quota} bytes exceeded")


class IoFailure(BundlemuxError):
    pass


class MalformedCommand(BundlemuxError):
    pass


# --- BIBE ---

class MalformedBpdu(BundlemuxError):
    pass


class InnerDecodeFailed(BundlemuxError):
    pass


class InnerTooLarge(BundlemuxError):
    pass


# --- control protocol / endpoints ---

class MalformedMessage(BundlemuxError):
    pass


class EndpointOccupied(BundlemuxError):
    pass


class ProtocolViolation(BundlemuxError):
    pass


class ConfigError(BundlemuxError):
    def __init__(self, key: str, reason: str):
        self.key = key
        self.reason = reason
        super().__init__(f"config key '{key}': {reason}")
