"""Forwarding information base: reachable node -> CLA address mappings,
folded from link events and control-plane requests, plus the next-hop
decision cache."""

from dataclasses import dataclass, field

from .cla.base import ClaAddress
from .eid import EndpointId


@dataclass
class FibEntry:
    node_id: EndpointId
    cla_address: ClaAddress
    direct: bool = False      # static forwarding rule: skip the BDM
    connected: bool = False   # an ACTIVE link to cla_address exists
    link_id: "int | None" = None

    @property
    def flags(self) -> "set[str]":
        out = set()
        if self.direct:
            out.add("DIRECT")
        if self.connected:
            out.add("CONNECTED")
        return out


class Fib:
    def __init__(self):
        self._entries: "dict[tuple[str, str], FibEntry]" = {}

    @staticmethod
    def _key(node_id: EndpointId, address: ClaAddress):
        return (str(node_id), str(address))

    def upsert(self, node_id: EndpointId, address: ClaAddress,
               direct: bool = False, connected: "bool | None" = None,
               link_id: "int | None" = None) -> FibEntry:
        node_id = node_id.node_id()
        key = self._key(node_id, address)
        entry = self._entries.get(key)
        if entry is None:
            entry = FibEntry(node_id, address, direct=direct)
            self._entries[key] = entry
        else:
            entry.direct = direct
        if connected is not None:
            entry.connected = connected
        if link_id is not None:
            entry.link_id = link_id
        return entry

    def remove(self, node_id: EndpointId, address: ClaAddress) -> bool:
        return self._entries.pop(self._key(node_id.node_id(), address), None) is not None

    def lookup(self, node_id: EndpointId) -> "list[FibEntry]":
        wanted = str(node_id.node_id())
        found = [e for e in self._entries.values() if str(e.node_id) == wanted]
        return sorted(found, key=lambda e: not e.connected)

    def entries_for_address(self, address: ClaAddress) -> "list[FibEntry]":
        return [e for e in self._entries.values() if e.cla_address == address]

    def on_link_up(self, address: ClaAddress, link_id: int) -> "list[FibEntry]":
        changed = []
        for entry in self.entries_for_address(address):
            if not entry.connected:
                entry.connected = True
                entry.link_id = link_id
                changed.append(entry)
            else:
                entry.link_id = link_id
        return changed

    def on_link_down(self, address: ClaAddress) -> "list[FibEntry]":
        changed = []
        for entry in self.entries_for_address(address):
            if entry.connected:
                entry.connected = False
                entry.link_id = None
                changed.append(entry)
        return changed

    def snapshot(self) -> "list[FibEntry]":
        return sorted(self._entries.values(),
                      key=lambda e: (str(e.node_id), str(e.cla_address)))


@dataclass
class CachedDecision:
    decision: "object"
    addresses: "set[str]" = field(default_factory=set)
    inserted_at: int = 0


class DispatchCache:
    """Next-hop decision cache keyed by destination node; invalidation is
    purely event-driven (link down or FIB change for the destination)."""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self._cache: "dict[str, CachedDecision]" = {}

    def put(self, dest_node: EndpointId, decision, addresses: "set[str]",
            now_ms: int) -> None:
        if not self.enabled:
            return
        self._cache[str(dest_node.node_id())] = CachedDecision(
            decision, set(addresses), now_ms)

    def get(self, dest_node: EndpointId):
        if not self.enabled:
            return None
        entry = self._cache.get(str(dest_node.node_id()))
        return entry.decision if entry else None

    def invalidate_destination(self, dest_node: EndpointId) -> None:
        self._cache.pop(str(dest_node.node_id()), None)

    def invalidate_address(self, address: ClaAddress) -> None:
        text = str(address)
        for key in [k for k, v in self._cache.items() if text in v.addresses]:
            del self._cache[key]

    def clear(self) -> None:
        self._cache.clear()

    def __len__(self):
        return len(self._cache)
