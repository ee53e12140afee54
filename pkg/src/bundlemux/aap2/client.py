"""Blocking control-protocol client.

One instance wraps one connection, so programs that both send and receive
(or serve dispatch requests while issuing link requests) open two clients
with the same agent id and shared secret, one per direction of control.
"""

import socket
import threading

from ..errors import MalformedMessage, ProtocolViolation
from .messages import (ADU_FLAG_BIBE, BundleAdu, ConnectionConfig,
                       DispatchRequest, DispatchResponse, FrameReader,
                       Keepalive, LinkMsg, LinkOp, LINK_FLAG_DIRECT, Response,
                       Status, Welcome, frame)


class Aap2Client:
    def __init__(self, tcp=None, unix=None, timeout_s: float = 10.0):
        if (tcp is None) == (unix is None):
            raise ValueError("exactly one of tcp=(host, port) or unix=path")
        if tcp is not None:
            self.sock = socket.create_connection(tcp, timeout=timeout_s)
        else:
            self.sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
            self.sock.settimeout(timeout_s)
            self.sock.connect(unix)
        self.sock.settimeout(timeout_s)
        self._reader = FrameReader()
        self._pending = []
        self.node_id = None
        self._stop = threading.Event()
        welcome = self.recv_msg()
        if not isinstance(welcome, Welcome):
            raise ProtocolViolation(f"expected Welcome, got {welcome!r}")
        self.node_id = welcome.node_id

    # --- low-level primitives (also used by protocol-conformance tests) ---

    def send_raw(self, msg) -> None:
        self.sock.sendall(frame(msg))

    def recv_msg(self, timeout_s: "float | None" = None):
        if self._pending:
            return self._pending.pop(0)
        if timeout_s is not None:
            self.sock.settimeout(timeout_s)
        while True:
            data = self.sock.recv(65536)
            if not data:
                raise ConnectionError("connection closed by daemon")
            messages = self._reader.feed(data)
            if messages:
                self._pending = messages[1:]
                return messages[0]

    def call(self, msg) -> Response:
        self.send_raw(msg)
        answer = self.recv_msg()
        if not isinstance(answer, Response):
            raise ProtocolViolation(f"expected Response, got {answer!r}")
        return answer

    def close(self):
        self._stop.set()
        try:
            self.sock.close()
        except OSError:
            pass

    # --- session setup ---

    def configure(self, active: bool, agent_id: str = "",
                  shared_secret: bytes = b"", auth: int = 0,
                  admin_secret: bytes = b"") -> Response:
        return self.call(ConnectionConfig(
            is_active_client=active, agent_id=agent_id,
            shared_secret=shared_secret, auth=auth, admin_secret=admin_secret))

    # --- active-direction calls ---

    def send_adu(self, dst: str, payload: bytes, src: str = "",
                 lifetime_ms: "int | None" = None,
                 creation: "tuple[int, int] | None" = None,
                 is_bibe: bool = False) -> Response:
        flags = ADU_FLAG_BIBE if is_bibe else 0
        return self.call(BundleAdu(src=src, dst=dst,
                                   creation=creation or (0, 0),
                                   payload=payload, flags=flags,
                                   lifetime_ms=lifetime_ms))

    def link_up(self, node_id: str, cla_address: str,
                direct: bool = False) -> Response:
        flags = LINK_FLAG_DIRECT if direct else 0
        return self.call(LinkMsg(LinkOp.UP, node_id, cla_address, flags))

    def link_down(self, node_id: str, cla_address: str) -> Response:
        return self.call(LinkMsg(LinkOp.DOWN, node_id, cla_address))

    def keepalive(self) -> Response:
        return self.call(Keepalive())

    # --- passive-direction serving ---

    def serve(self, on_adu=None, on_dispatch=None, on_notify=None,
              max_calls: "int | None" = None) -> int:
        """Answer daemon calls until the connection closes, stop() is called,
        or max_calls calls have been handled. Returns the call count.

        on_adu(BundleAdu), on_notify(LinkMsg) -> None;
        on_dispatch(DispatchRequest) -> DispatchDecision | None.
        """
        handled = 0
        while not self._stop.is_set():
            if max_calls is not None and handled >= max_calls:
                break
            try:
                msg = self.recv_msg()
            except (ConnectionError, OSError):
                break
            handled += 1
            if isinstance(msg, Keepalive):
                self.send_raw(Response(Status.OK))
                handled -= 1  # liveness checks don't count as served calls
            elif isinstance(msg, BundleAdu):
                if on_adu is not None:
                    on_adu(msg)
                self.send_raw(Response(Status.OK))
            elif isinstance(msg, DispatchRequest):
                decision = on_dispatch(msg) if on_dispatch is not None else None
                if decision is None:
                    self.send_raw(Response(Status.OK))
                else:
                    self.send_raw(DispatchResponse(msg.request_id, decision))
            elif isinstance(msg, LinkMsg):
                if on_notify is not None:
                    on_notify(msg)
                self.send_raw(Response(Status.OK))
            else:
                raise MalformedMessage(f"unexpected daemon call: {msg!r}")
        return handled

    def stop(self):
        self._stop.set()
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
