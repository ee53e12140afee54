"""Node assembly: wires the bundle processor, the configured CLAs and the
control-protocol server together, and owns their lifecycles."""

import logging

from .aap2.server import Aap2Server
from .cla.base import ClaRegistry
from .cla.bibe import BibeCla
from .cla.loopback import LoopbackCla, LoopbackHub
from .cla.mtcp import MtcpCla
from .cla.storage import StorageCla
from .clock import WallClock
from .config import NodeConfig
from .core import BundleProcessor, EventLog

log = logging.getLogger(__name__)


class Node:
    def __init__(self, config: NodeConfig, clock=None, loopback_hub=None,
                 name: "str | None" = None):
        self.config = config
        self.clock = clock or WallClock()
        self.name = name or str(config.node_id)
        self.events = EventLog(self.name)
        self.registry = ClaRegistry()
        self.core = BundleProcessor(config.node_id, self.clock, self.registry,
                                    config, self.events)
        self.aap2 = Aap2Server(self.core, config)
        self._loopback_hub = loopback_hub or LoopbackHub()
        self._build_clas()
        self._started = False

    def _build_clas(self):
        for name, sub in self.config.cla.items():
            if name == "mtcp":
                cla = MtcpCla(name, self.core, sub)
            elif name == "loopback":
                cla = LoopbackCla(name, self.core, sub, self._loopback_hub)
            elif name == "storage":
                cla = StorageCla(name, self.core, sub)
            elif name == "bibe":
                cla = BibeCla(name, self.core, sub)
            else:
                raise ValueError(f"unknown CLA {name!r} in config")
            self.registry.register(cla)

    def start(self):
        if self._started:
            return
        self._started = True
        self.core.start()
        for cla in self.registry.all():
            cla.start()
            if isinstance(cla, StorageCla):
                self.core.storage_cla = cla
        self.aap2.start()
        self.events.emit(self.clock.now_ms(), "ready",
                         node_id=str(self.config.node_id))

    def stop(self):
        if not self._started:
            return
        self._started = False
        self.aap2.stop()
        for cla in self.registry.all():
            try:
                cla.stop()
            except Exception:
                log.exception("stopping CLA %s failed", cla.name)
        self.core.stop()
        self.events.emit(self.clock.now_ms(), "stopped")

    # --- conveniences for tools, tests and the harness ---

    @property
    def counters(self):
        return self.core.counters

    @property
    def storage(self) -> "StorageCla | None":
        return self.core.storage_cla

    def mtcp_port(self) -> "int | None":
        for cla in self.registry.all():
            if isinstance(cla, MtcpCla):
                return cla.listen_port
        return None

    def aap2_port(self) -> "int | None":
        return self.aap2.tcp_port

    def quiescent(self) -> bool:
        """True when no bundle is in flight anywhere in this node."""
        if not self.core.inbox.empty() or self.core.pending_dispatch:
            return False
        for cla in self.registry.all():
            for link in cla.links():
                if link.tx_queue.qsize() > 0:
                    return False
        return self.counters.ingested == self.counters.outcomes() \
            + sum(len(buf) for buf in self.core._reassembly.values())
