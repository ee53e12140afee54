"""Minimal TCP convergence layer: bundles ride as back-to-back definite
CBOR byte strings on one bidirectional TCP connection per link."""

import logging
import socket
import threading

from .. import cbor
from ..codec import decode_bundle, detect_version
from ..errors import (ConnectionFailed, FrameTooLarge, MalformedFrame,
                      UnsupportedVersion)
from .base import Cla, ClaAddress, Link, LinkState

log = logging.getLogger(__name__)

DEFAULT_PORT = 4556
DEFAULT_MAX_FRAME = 16 * 1024 * 1024


def mtcp_frame(bundle_bytes: bytes) -> bytes:
    return cbor.encode_head(cbor.MAJOR_BYTES, len(bundle_bytes)) + bundle_bytes


class MtcpDeframer:
    """Incremental parser for the byte-string stream; tolerates arbitrary
    read boundaries."""

    def __init__(self, max_frame: int = DEFAULT_MAX_FRAME):
        self.max_frame = max_frame
        self._buf = bytearray()

    def feed(self, data: bytes) -> "list[bytes]":
        self._buf += data
        frames = []
        while self._buf:
            try:
                major, length, head_len, indefinite = cbor.peek_head(self._buf)
            except cbor.CborTruncated:
                break
            except cbor.CborError as exc:
                raise MalformedFrame(str(exc)) from None
            if major != cbor.MAJOR_BYTES or indefinite:
                raise MalformedFrame(
                    f"expected definite byte string, got major type {major}")
            if length > self.max_frame:
                raise FrameTooLarge(f"{length} > {self.max_frame}")
            if len(self._buf) < head_len + length:
                break
            frames.append(bytes(self._buf[head_len:head_len + length]))
            del self._buf[:head_len + length]
        return frames


def _parse_host_port(detail: str) -> "tuple[str, int]":
    host, sep, port = detail.rpartition(":")
    if not sep:
        return detail, DEFAULT_PORT
    return host, int(port)


class MtcpCla(Cla):
    """config keys: listen ("host:port", optional), max_bundle_size,
    connect_timeout_ms."""

    def __init__(self, name, core, config):
        super().__init__(name, core, config)
        self._listener = None
        self.listen_port = None

    def start(self):
        listen = self.config.get("listen")
        if not listen:
            return
        host, port = _parse_host_port(listen)
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen(16)
        self.listen_port = self._listener.getsockname()[1]
        threading.Thread(target=self._accept_loop,
                         name=f"{self.name}-accept", daemon=True).start()

    def stop(self):
        listener, self._listener = self._listener, None
        if listener is not None:
            try:
                listener.close()
            except OSError:
                pass
        super().stop()

    def link_up(self, address: ClaAddress) -> Link:
        host, port = _parse_host_port(address.detail)
        timeout = self.config.get("connect_timeout_ms", 3000) / 1000.0
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise ConnectionFailed(f"{address}: {exc}") from None
        sock.settimeout(None)
        return self._attach(sock, address)

    def _accept_loop(self):
        while True:
            listener = self._listener
            if listener is None:
                return
            try:
                sock, peer = listener.accept()
            except OSError:
                return
            self._attach(sock, ClaAddress(self.name, f"{peer[0]}:{peer[1]}"))

    def _attach(self, sock: socket.socket, peer: ClaAddress) -> Link:
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        link = Link(self, peer, self.core.tx_queue_depth)
        link.socket = sock
        link.send_lock = threading.Lock()
        self._activate_link(link)
        threading.Thread(target=self._rx_loop, args=(link,),
                         name=f"{self.name}-rx-{link.link_id}", daemon=True).start()
        return link

    def _rx_loop(self, link: Link):
        deframer = MtcpDeframer(self.max_bundle_size())
        sock = link.socket
        while True:
            try:
                data = sock.recv(65536)
            except OSError:
                data = b""
            if not data:
                self.link_down(link)
                return
            try:
                frames = deframer.feed(data)
            except (MalformedFrame, FrameTooLarge) as exc:
                # no way to resynchronize the stream; drop the connection
                log.warning("%s: closing %r: %s", self.name, link, exc)
                self.core.note_rx_reject(self.name, str(exc))
                self.link_down(link)
                return
            for frame in frames:
                self._handle_frame(link, frame)

    def _handle_frame(self, link: Link, frame: bytes):
        if not frame:
            self.core.note_rx_reject(self.name, "empty frame")
            return
        try:
            detect_version(frame[0])
            bundle = decode_bundle(frame)
        except UnsupportedVersion as exc:
            self.core.note_rx_reject(self.name, f"unsupported version: {exc}")
            return
        except Exception as exc:
            self.core.note_rx_reject(self.name, f"undecodable bundle: {exc}")
            return
        self.core.post_ingest_from_cla(bundle, link)

    def send_frame(self, link: Link, data: bytes):
        with link.send_lock:
            link.socket.sendall(mtcp_frame(data))

    def _teardown(self, link: Link):
        try:
            link.socket.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            link.socket.close()
        except OSError:
            pass
