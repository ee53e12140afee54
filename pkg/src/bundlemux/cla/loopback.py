"""In-process loopback CLA: byte-exact delivery between paired node
instances, with injectable delay and drop probability for tests."""

import logging
import random
import threading

from ..codec import decode_bundle, detect_version
from ..errors import ConnectionFailed, UnsupportedVersion
from .base import Cla, ClaAddress, Link

log = logging.getLogger(__name__)


class LoopbackHub:
    """Registry pairing loopback CLA instances by node name."""

    def __init__(self):
        self._instances = {}
        self._lock = threading.Lock()

    def register(self, name: str, cla: "LoopbackCla") -> None:
        with self._lock:
            self._instances[name] = cla

    def lookup(self, name: str) -> "LoopbackCla | None":
        with self._lock:
            return self._instances.get(name)


class LoopbackCla(Cla):
    """config keys: hub_name, max_bundle_size, delay_ms, drop_probability,
    seed. The hub object is injected by the node wiring."""

    def __init__(self, name, core, config, hub: LoopbackHub):
        super().__init__(name, core, config)
        self.hub = hub
        self.hub_name = config.get("hub_name", "")
        self.delay_ms = config.get("delay_ms", 0)
        self.drop_probability = config.get("drop_probability", 0.0)
        self._rng = random.Random(config.get("seed", 0))

    def start(self):
        if self.hub_name:
            self.hub.register(self.hub_name, self)

    def link_up(self, address: ClaAddress) -> Link:
        peer = self.hub.lookup(address.detail)
        if peer is None:
            raise ConnectionFailed(f"no loopback peer named {address.detail!r}")
        link = Link(self, address, self.core.tx_queue_depth)
        link.peer_cla = peer
        self._activate_link(link)
        peer._accept_peer(self.hub_name)
        return link

    def _accept_peer(self, from_name: str) -> None:
        address = ClaAddress(self.name, from_name)
        if self.find_link(address) is not None:
            return
        back = Link(self, address, self.core.tx_queue_depth)
        back.peer_cla = self.hub.lookup(from_name)
        self._activate_link(back)

    def send_frame(self, link: Link, data: bytes):
        if self.drop_probability and self._rng.random() < self.drop_probability:
            return
        if self.delay_ms:
            self.core.clock.sleep_ms(self.delay_ms)
        peer = link.peer_cla
        if peer is None:
            raise ConnectionFailed("loopback peer vanished")
        peer._receive(data, self.hub_name)

    def _receive(self, data: bytes, from_name: str):
        try:
            detect_version(data[0])
            bundle = decode_bundle(data)
        except UnsupportedVersion as exc:
            self.core.note_rx_reject(self.name, f"unsupported version: {exc}")
            return
        except Exception as exc:
            self.core.note_rx_reject(self.name, f"undecodable bundle: {exc}")
            return
        link = self.find_link(ClaAddress(self.name, from_name))
        self.core.post_ingest_from_cla(bundle, link,
                                       ClaAddress(self.name, from_name))
