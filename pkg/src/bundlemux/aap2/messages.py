"""Control-protocol wire format.

A frame is a 4-octet big-endian length N followed by N octets of CBOR:
an array [type_tag, body_map] with unsigned-integer body keys. Unknown body
keys are ignored so the message set can grow without breaking old peers.
The full layout is documented in docs/aap2-cbor.md; golden byte vectors
live in testdata/aap2/.
"""

import enum
from dataclasses import dataclass, field

from .. import cbor
from ..bundle import CreationTimestamp
from ..dispatch import DispatchDecision
from ..errors import FrameTooLarge, MalformedMessage

TAG_WELCOME = 0
TAG_CONNECTION_CONFIG = 1
TAG_BUNDLE_ADU = 2
TAG_DISPATCH_REQUEST = 3
TAG_DISPATCH_RESPONSE = 4
TAG_LINK = 5
TAG_KEEPALIVE = 6
TAG_RESPONSE = 7

AUTH_LINK_CONTROL = 0x01
AUTH_DISPATCH = 0x02

ADU_FLAG_BIBE = 0x01

DEFAULT_MAX_FRAME = 17 * 1024 * 1024


class Status(enum.IntEnum):
    OK = 0
    ERROR = 1
    UNAUTHORIZED = 2
    OCCUPIED = 3
    TIMEOUT = 4


class LinkOp(enum.IntEnum):
    UP = 0
    DOWN = 1
    NOTIFY_UP = 2
    NOTIFY_DOWN = 3

LINK_FLAG_DIRECT = 0x01


@dataclass(frozen=True)
class Welcome:
    node_id: str

    tag = TAG_WELCOME

    def body(self):
        return {0: self.node_id}

    @classmethod
    def from_body(cls, body):
        return cls(node_id=_text(body, 0, "node_id"))


@dataclass(frozen=True)
class ConnectionConfig:
    is_active_client: bool
    agent_id: str = ""
    shared_secret: bytes = b""
    auth: int = 0
    admin_secret: bytes = b""

    tag = TAG_CONNECTION_CONFIG

    def body(self):
        out = {0: self.is_active_client}
        if self.agent_id:
            out[1] = self.agent_id
        if self.shared_secret:
            out[2] = self.shared_secret
        if self.auth:
            out[3] = self.auth
        if self.admin_secret:
            out[4] = self.admin_secret
        return out

    @classmethod
    def from_body(cls, body):
        active = body.get(0)
        if not isinstance(active, bool):
            raise MalformedMessage("ConnectionConfig needs a control-direction bool")
        return cls(
            is_active_client=active,
            agent_id=_text(body, 1, "agent_id", default=""),
            shared_secret=_bytes(body, 2, "shared_secret", default=b""),
            auth=_uint(body, 3, "auth", default=0),
            admin_secret=_bytes(body, 4, "admin_secret", default=b""),
        )


@dataclass(frozen=True)
class BundleAdu:
    src: str
    dst: str
    creation: "tuple[int, int]" = (0, 0)
    payload: bytes = b""
    flags: int = 0
    lifetime_ms: "int | None" = None

    tag = TAG_BUNDLE_ADU

    @property
    def is_bibe(self) -> bool:
        return bool(self.flags & ADU_FLAG_BIBE)

    def body(self):
        out = {0: self.src, 1: self.dst, 2: list(self.creation), 3: self.payload}
        if self.flags:
            out[4] = self.flags
        if self.lifetime_ms is not None:
            out[5] = self.lifetime_ms
        return out

    @classmethod
    def from_body(cls, body):
        creation = body.get(2, [0, 0])
        if (not isinstance(creation, list) or len(creation) != 2
                or not all(isinstance(n, int) and n >= 0 for n in creation)):
            raise MalformedMessage(f"bad ADU creation timestamp: {creation!r}")
        return cls(
            src=_text(body, 0, "src", default=""),
            dst=_text(body, 1, "dst"),
            creation=(creation[0], creation[1]),
            payload=_bytes(body, 3, "payload", default=b""),
            flags=_uint(body, 4, "flags", default=0),
            lifetime_ms=_uint(body, 5, "lifetime_ms", default=None),
        )


@dataclass(frozen=True)
class DispatchRequest:
    request_id: int
    src: str
    dst: str
    creation: "tuple[int, int]"
    size: int
    lifetime_ms: int

    tag = TAG_DISPATCH_REQUEST

    def body(self):
        return {0: self.request_id,
                1: {0: self.src, 1: self.dst, 2: list(self.creation),
                    3: self.size, 4: self.lifetime_ms}}

    @classmethod
    def from_body(cls, body):
        meta = body.get(1)
        if not isinstance(meta, dict):
            raise MalformedMessage("DispatchRequest needs a metadata map")
        creation = meta.get(2, [0, 0])
        if not isinstance(creation, list) or len(creation) != 2:
            raise MalformedMessage(f"bad creation in request meta: {creation!r}")
        return cls(
            request_id=_uint(body, 0, "request_id"),
            src=_text(meta, 0, "src", default=""),
            dst=_text(meta, 1, "dst"),
            creation=(creation[0], creation[1]),
            size=_uint(meta, 3, "size", default=0),
            lifetime_ms=_uint(meta, 4, "lifetime_ms", default=0),
        )


@dataclass(frozen=True)
class DispatchResponse:
    request_id: int
    decision: DispatchDecision

    tag = TAG_DISPATCH_RESPONSE

    def body(self):
        return {0: self.request_id, 1: self.decision.to_cbor_map()}

    @classmethod
    def from_body(cls, body):
        return cls(
            request_id=_uint(body, 0, "request_id"),
            decision=DispatchDecision.from_cbor_map(body.get(1)),
        )


@dataclass(frozen=True)
class LinkMsg:
    op: LinkOp
    node_id: str = ""
    cla_address: str = ""
    flags: int = 0

    tag = TAG_LINK

    @property
    def direct(self) -> bool:
        return bool(self.flags & LINK_FLAG_DIRECT)

    def body(self):
        out = {0: int(self.op), 1: self.node_id, 2: self.cla_address}
        if self.flags:
            out[3] = self.flags
        return out

    @classmethod
    def from_body(cls, body):
        try:
            op = LinkOp(_uint(body, 0, "op"))
        except ValueError:
            raise MalformedMessage(f"unknown link op {body.get(0)!r}") from None
        return cls(op=op,
                   node_id=_text(body, 1, "node_id", default=""),
                   cla_address=_text(body, 2, "cla_address", default=""),
                   flags=_uint(body, 3, "flags", default=0))


@dataclass(frozen=True)
class Keepalive:
    tag = TAG_KEEPALIVE

    def body(self):
        return {}

    @classmethod
    def from_body(cls, body):
        return cls()


@dataclass(frozen=True)
class Response:
    status: Status
    detail: str = ""

    tag = TAG_RESPONSE

    def body(self):
        out = {0: int(self.status)}
        if self.detail:
            out[1] = self.detail
        return out

    @classmethod
    def from_body(cls, body):
        try:
            status = Status(_uint(body, 0, "status"))
        except ValueError:
            raise MalformedMessage(f"unknown status {body.get(0)!r}") from None
        return cls(status=status, detail=_text(body, 1, "detail", default=""))


_BY_TAG = {m.tag: m for m in (Welcome, ConnectionConfig, BundleAdu,
                              DispatchRequest, DispatchResponse, LinkMsg,
                              Keepalive, Response)}

_REQUIRED = object()


def _text(body, key, what, default=_REQUIRED):
    value = body.get(key, None)
    if value is None:
        if default is not _REQUIRED:
            return default
        raise MalformedMessage(f"missing {what}")
    if not isinstance(value, str):
        raise MalformedMessage(f"{what} must be text, got {value!r}")
    return value


def _bytes(body, key, what, default=_REQUIRED):
    value = body.get(key, None)
    if value is None:
        if default is not _REQUIRED:
            return default
        raise MalformedMessage(f"missing {what}")
    if not isinstance(value, bytes):
        raise MalformedMessage(f"{what} must be a byte string, got {value!r}")
    return value


def _uint(body, key, what, default=_REQUIRED):
    value = body.get(key, None)
    if value is None:
        if default is not _REQUIRED:
            return default
        raise MalformedMessage(f"missing {what}")
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise MalformedMessage(f"{what} must be an unsigned integer, got {value!r}")
    return value


def frame(msg) -> bytes:
    payload = cbor.encode([msg.tag, msg.body()])
    return len(payload).to_bytes(4, "big") + payload


def parse_frame_payload(payload: bytes):
    try:
        item = cbor.decode(payload)
    except cbor.CborError as exc:
        raise MalformedMessage(f"frame payload is not valid CBOR: {exc}") from None
    if not isinstance(item, list) or len(item) != 2 or not isinstance(item[1], dict):
        raise MalformedMessage(f"frame must be [tag, body map], got {item!r}")
    tag, body = item
    cls = _BY_TAG.get(tag)
    if cls is None:
        raise MalformedMessage(f"unknown message tag {tag!r}")
    return cls.from_body(body)


class FrameReader:
    """Incremental deframer over the 4-byte length prefix."""

    def __init__(self, max_frame: int = DEFAULT_MAX_FRAME):
        self.max_frame = max_frame
        self._buf = bytearray()

    def feed(self, data: bytes) -> list:
        self._buf += data
        messages = []
        while len(self._buf) >= 4:
            length = int.from_bytes(self._buf[:4], "big")
            if length > self.max_frame:
                raise FrameTooLarge(f"{length} > {self.max_frame}")
            if len(self._buf) < 4 + length:
                break
            payload = bytes(self._buf[4:4 + length])
            del self._buf[:4 + length]
            messages.append(parse_frame_payload(payload))
        return messages
