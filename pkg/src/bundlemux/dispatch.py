"""Forwarding decisions: the value type exchanged with dispatcher modules
and the rules for turning one into link enqueues."""

import enum
from dataclasses import dataclass

from .cla.base import ClaAddress
from .eid import EndpointId, parse_eid
from .errors import MalformedMessage


class DispatchAction(enum.IntEnum):
    FORWARD = 0
    STORE = 1
    DROP = 2


@dataclass(frozen=True)
class NextHop:
    node_id: EndpointId
    cla_address: ClaAddress


@dataclass(frozen=True)
class DispatchDecision:
    action: DispatchAction
    next_hops: "tuple[NextHop, ...]" = ()
    max_fragment_payload: "int | None" = None
    reason: str = ""

    def validate(self) -> None:
        if self.action == DispatchAction.FORWARD and not self.next_hops:
            raise MalformedMessage("FORWARD decision lists no next hops")
        if self.max_fragment_payload is not None and self.max_fragment_payload < 1:
            raise MalformedMessage("max_fragment_payload must be >= 1")

    def referenced_addresses(self) -> "set[str]":
        return {str(hop.cla_address) for hop in self.next_hops}

    def to_cbor_map(self) -> dict:
        body = {0: int(self.action)}
        if self.next_hops:
            body[1] = [[str(h.node_id), str(h.cla_address)] for h in self.next_hops]
        if self.max_fragment_payload is not None:
            body[2] = self.max_fragment_payload
        if self.reason:
            body[3] = self.reason
        return body

    @classmethod
    def from_cbor_map(cls, body) -> "DispatchDecision":
        if not isinstance(body, dict):
            raise MalformedMessage(f"decision must be a map, got {body!r}")
        try:
            action = DispatchAction(body[0])
        except (KeyError, ValueError, TypeError):
            raise MalformedMessage(f"bad decision action: {body.get(0)!r}") from None
        hops = []
        for pair in body.get(1, []):
            if not isinstance(pair, list) or len(pair) != 2:
                raise MalformedMessage(f"bad next hop: {pair!r}")
            try:
                hops.append(NextHop(parse_eid(pair[0]), ClaAddress.parse(pair[1])))
            except ValueError as exc:
                raise MalformedMessage(str(exc)) from None
        frag = body.get(2)
        if frag is not None and (not isinstance(frag, int) or frag < 1):
            raise MalformedMessage(f"bad max_fragment_payload: {frag!r}")
        reason = body.get(3, "")
        if not isinstance(reason, str):
            raise MalformedMessage("decision reason must be text")
        decision = cls(action, tuple(hops), frag, reason)
        decision.validate()
        return decision


def forward_to(node_id: EndpointId, address: ClaAddress,
               max_fragment_payload: "int | None" = None) -> DispatchDecision:
    return DispatchDecision(DispatchAction.FORWARD,
                            (NextHop(node_id, address),), max_fragment_payload)


STORE_DECISION = DispatchDecision(DispatchAction.STORE)


def drop(reason: str) -> DispatchDecision:
    return DispatchDecision(DispatchAction.DROP, reason=reason)
