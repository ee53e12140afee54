"""Control-protocol server: one handler per accepted connection.

A connection greets with Welcome, then waits for ConnectionConfig, which
fixes the direction of control for the connection's whole lifetime: either
the client issues calls (send ADUs, link control, keepalive) or the daemon
does (deliver ADUs, dispatch requests, link notifications, keepalive).
Every call gets exactly one answer before the next call in that direction.
"""

import logging
import os
import queue
import socket
import threading

from ..bundle import CreationTimestamp
from ..cla.base import ClaAddress
from ..core import (ClaimDispatch, ClaimLinkControl, ConnectionClosed,
                    DispatchReply, LinkRequest, RegisterEndpoint, SendAdu)
from ..eid import parse_eid
from ..errors import FrameTooLarge, InvalidEndpointId, MalformedMessage
from .messages import (ADU_FLAG_BIBE, AUTH_DISPATCH, AUTH_LINK_CONTROL,
                       BundleAdu, ConnectionConfig, DispatchRequest,
                       DispatchResponse, FrameReader, Keepalive, LinkMsg,
                       LinkOp, Response, Status, Welcome, frame)

log = logging.getLogger(__name__)

PHASE_AWAIT_CONFIG = "await_config"
PHASE_ACTIVE = "active_client_control"
PHASE_PASSIVE = "passive_daemon_control"
PHASE_CLOSED = "closed"

_STOP = object()


class Aap2Server:
    def __init__(self, core, config):
        self.core = core
        self.config = config
        self._listeners = []
        self.connections = set()
        self._conn_lock = threading.Lock()
        self.tcp_port = None

    def start(self):
        if self.config.aap2_tcp:
            host, port = self.config.aap2_tcp
            listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            listener.bind((host, port))
            listener.listen(32)
            self.tcp_port = listener.getsockname()[1]
            self._spawn_accept(listener, "aap2-tcp")
        if self.config.aap2_socket:
            path = self.config.aap2_socket
            if os.path.exists(path):
                os.unlink(path)
            listener = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
            listener.bind(path)
            listener.listen(32)
            self._spawn_accept(listener, "aap2-local")

    def _spawn_accept(self, listener, name):
        self._listeners.append(listener)

        def loop():
            while True:
                try:
                    sock, _ = listener.accept()
                except OSError:
                    return
                conn = ServerConnection(self, sock)
                with self._conn_lock:
                    self.connections.add(conn)
                conn.start()
        threading.Thread(target=loop, name=name, daemon=True).start()

    def stop(self):
        for listener in self._listeners:
            try:
                listener.close()
            except OSError:
                pass
        if self.config.aap2_socket and os.path.exists(self.config.aap2_socket):
            try:
                os.unlink(self.config.aap2_socket)
            except OSError:
                pass
        with self._conn_lock:
            conns = list(self.connections)
        for conn in conns:
            conn.close("server shutdown")

    def forget(self, conn):
        with self._conn_lock:
            self.connections.discard(conn)


class ServerConnection:
    def __init__(self, server: Aap2Server, sock: socket.socket):
        self.server = server
        self.core = server.core
        self.config = server.config
        self.sock = sock
        self.phase = PHASE_AWAIT_CONFIG
        self.agent_id = ""
        self.granted_auth = 0
        self._write_lock = threading.Lock()
        self._closed = False
        self._close_lock = threading.Lock()
        # passive-side call machinery
        self.outbound = queue.Queue(maxsize=server.config.conn_queue_depth)
        self._response_slot = queue.Queue(maxsize=1)
        self._outstanding = None  # (kind, request_id) while a call awaits answer

    def start(self):
        threading.Thread(target=self._read_loop, name="aap2-conn", daemon=True).start()

    # --- interfaces the processing loop uses (duck-typed) ---

    def deliver_adu(self, bundle) -> bool:
        flags = ADU_FLAG_BIBE if bundle.is_admin_record else 0
        msg = BundleAdu(
            src=str(bundle.source), dst=str(bundle.destination),
            creation=(bundle.creation.dtn_time_ms, bundle.creation.sequence_number),
            payload=bundle.payload, flags=flags)
        return self._enqueue_call(("call", msg, None))

    def send_dispatch_request(self, request_id: int, meta: dict) -> bool:
        msg = DispatchRequest(request_id=request_id, src=meta["src"],
                              dst=meta["dst"], creation=meta["creation"],
                              size=meta["size"], lifetime_ms=meta["lifetime_ms"])
        return self._enqueue_call(("call", msg, request_id))

    def notify_link(self, op: str, node_id: str, cla_address: str) -> bool:
        link_op = LinkOp.NOTIFY_UP if op == "notify_up" else LinkOp.NOTIFY_DOWN
        return self._enqueue_call(
            ("call", LinkMsg(link_op, node_id, cla_address), None))

    def close_from_core(self):
        self.close("delivery queue overflow")

    def _enqueue_call(self, item) -> bool:
        if self._closed or self.phase != PHASE_PASSIVE:
            return False
        try:
            self.outbound.put_nowait(item)
            return True
        except queue.Full:
            return False

    # --- socket plumbing ---

    def _send(self, msg) -> bool:
        try:
            with self._write_lock:
                self.sock.sendall(frame(msg))
            return True
        except OSError:
            self.close("send failed")
            return False

    def close(self, reason: str):
        with self._close_lock:
            if self._closed:
                return
            self._closed = True
        log.debug("closing connection (%s): %s", self.agent_id or "?", reason)
        self.phase = PHASE_CLOSED
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass
        try:
            self.outbound.put_nowait(_STOP)
        except queue.Full:
            pass
        self.core.post(ConnectionClosed(self))
        self.server.forget(self)

    def _violation(self, detail: str):
        self._send(Response(Status.ERROR, detail))
        self.close(f"protocol violation: {detail}")

    # --- reader ---

    def _read_loop(self):
        timeout_s = self.config.keepalive_timeout_ms / 1000.0
        self.sock.settimeout(timeout_s)
        if not self._send(Welcome(str(self.core.node_id))):
            return
        reader = FrameReader(self.config.max_adu_bytes + 4096)
        while not self._closed:
            try:
                data = self.sock.recv(65536)
            except socket.timeout:
                self.close("idle timeout")
                return
            except OSError:
                self.close("read failed")
                return
            if not data:
                self.close("peer closed")
                return
            try:
                messages = reader.feed(data)
            except (MalformedMessage, FrameTooLarge) as exc:
                self._violation(str(exc))
                return
            for msg in messages:
                if self._closed:
                    return
                try:
                    self._handle(msg)
                except MalformedMessage as exc:
                    self._violation(str(exc))
                    return

    def _handle(self, msg):
        if self.phase == PHASE_AWAIT_CONFIG:
            if isinstance(msg, ConnectionConfig):
                self._configure(msg)
            else:
                self._violation(f"{type(msg).__name__} before ConnectionConfig")
        elif self.phase == PHASE_ACTIVE:
            self._handle_active_call(msg)
        elif self.phase == PHASE_PASSIVE:
            self._handle_passive_answer(msg)

    # --- configuration ---

    def _configure(self, msg: ConnectionConfig):
        if msg.auth:
            if not self.config.admin_secret or \
                    msg.admin_secret != self.config.admin_secret:
                self._send(Response(Status.UNAUTHORIZED, "bad admin secret"))
                self.close("unauthorized")
                return
            if msg.auth & AUTH_DISPATCH:
                status, detail = self.core.call(ClaimDispatch, conn=self)
                if status != "ok":
                    self._send(Response(Status.OCCUPIED, detail))
                    self.close("dispatch authority occupied")
                    return
        if msg.agent_id:
            direction = "send" if msg.is_active_client else "recv"
            status, detail = self.core.call(
                RegisterEndpoint, agent_id=msg.agent_id,
                secret=msg.shared_secret, direction=direction, owner=self)
            if status != "ok":
                code = Status.OCCUPIED if status == "occupied" else Status.ERROR
                self._send(Response(code, detail))
                self.close(f"registration failed: {detail}")
                return
            self.agent_id = msg.agent_id
        self.granted_auth = msg.auth
        self.phase = PHASE_ACTIVE if msg.is_active_client else PHASE_PASSIVE
        self._send(Response(Status.OK))
        if self.phase == PHASE_PASSIVE:
            threading.Thread(target=self._write_loop, name="aap2-conn-tx",
                             daemon=True).start()
            if msg.auth & AUTH_LINK_CONTROL:
                self.core.call(ClaimLinkControl, conn=self)

    # --- active direction: client calls, daemon answers ---

    def _handle_active_call(self, msg):
        if isinstance(msg, Keepalive):
            self._send(Response(Status.OK))
        elif isinstance(msg, BundleAdu):
            self._send(self._do_send_adu(msg))
        elif isinstance(msg, LinkMsg):
            if msg.op not in (LinkOp.UP, LinkOp.DOWN):
                return self._violation("clients may not send link notifications")
            if not self.granted_auth & AUTH_LINK_CONTROL:
                self._send(Response(Status.UNAUTHORIZED, "link control not granted"))
                return
            self._send(self._do_link(msg))
        else:
            self._violation(f"{type(msg).__name__} is not a client call")

    def _do_send_adu(self, msg: BundleAdu) -> Response:
        if not self.agent_id:
            return Response(Status.ERROR, "no endpoint registered on this connection")
        if len(msg.payload) > self.config.max_adu_bytes:
            return Response(Status.ERROR, "ADU exceeds size limit")
        try:
            destination = parse_eid(msg.dst)
        except InvalidEndpointId as exc:
            return Response(Status.ERROR, str(exc))
        creation = None
        if msg.creation != (0, 0):
            creation = CreationTimestamp(*msg.creation)
        try:
            status, detail = self.core.call(
                SendAdu, agent_id=self.agent_id, destination=destination,
                payload=msg.payload, lifetime_ms=msg.lifetime_ms,
                creation=creation, is_bibe=msg.is_bibe)
        except queue.Empty:
            return Response(Status.TIMEOUT, "processor did not answer")
        return Response(Status.OK if status == "ok" else Status.ERROR, detail)

    def _do_link(self, msg: LinkMsg) -> Response:
        try:
            node_id = parse_eid(msg.node_id)
            address = ClaAddress.parse(msg.cla_address)
        except (InvalidEndpointId, ValueError) as exc:
            return Response(Status.ERROR, str(exc))
        op = "up" if msg.op == LinkOp.UP else "down"
        try:
            status, detail = self.core.call(
                LinkRequest, op=op, node_id=node_id, cla_address=address,
                direct=msg.direct, timeout=10.0)
        except queue.Empty:
            return Response(Status.TIMEOUT, "link request timed out")
        return Response(Status.OK if status == "ok" else Status.ERROR, detail)

    # --- passive direction: daemon calls, client answers ---

    def _write_loop(self):
        interval_s = self.config.keepalive_timeout_ms / 3000.0
        timeout_s = self.config.keepalive_timeout_ms / 1000.0
        while not self._closed:
            try:
                item = self.outbound.get(timeout=interval_s)
            except queue.Empty:
                item = ("call", Keepalive(), None)
            if item is _STOP:
                return
            _, msg, request_id = item
            kind = type(msg).__name__
            self._outstanding = (kind, request_id)
            if not self._send(msg):
                return
            try:
                answer = self._response_slot.get(timeout=timeout_s)
            except queue.Empty:
                self.close("call not answered in time")
                return
            self._outstanding = None
            if isinstance(answer, DispatchResponse):
                self.core.post(DispatchReply(self, answer.request_id,
                                             answer.decision))

    def _handle_passive_answer(self, msg):
        outstanding = self._outstanding
        if outstanding is None:
            return self._violation(f"unsolicited {type(msg).__name__}")
        kind, request_id = outstanding
        if isinstance(msg, DispatchResponse):
            if kind != "DispatchRequest" or msg.request_id != request_id:
                return self._violation("DispatchResponse does not match the call")
            self._response_slot.put(msg)
        elif isinstance(msg, Response):
            if kind == "DispatchRequest":
                # a plain response to a dispatch request means "no decision"
                self.core.post(DispatchReply(self, request_id, None))
            self._response_slot.put(msg)
        else:
            self._violation(f"{type(msg).__name__} is not an answer")
