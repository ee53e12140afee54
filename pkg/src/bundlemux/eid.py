"""DTN endpoint identifiers in the `dtn` and `ipn` schemes."""

import enum
from dataclasses import dataclass

from .errors import InvalidEndpointId


class EidScheme(enum.IntEnum):
    DTN = 1
    IPN = 2


@dataclass(frozen=True)
class EndpointId:
    """An endpoint identifier with canonical text and CBOR forms.

    DTN-scheme EIDs store the scheme-specific part ("none" or
    "//<node-name>/<demux>"); IPN-scheme EIDs store node and service numbers.
    """

    scheme: EidScheme
    ssp: str = ""
    node_number: int = 0
    service_number: int = 0

    def __str__(self) -> str:
        if self.scheme == EidScheme.DTN:
            return f"dtn:{self.ssp}"
        return f"ipn:{self.node_number}.{self.service_number}"

    @property
    def is_none(self) -> bool:
        return self.scheme == EidScheme.DTN and self.ssp == "none"

    @property
    def node_name(self) -> str:
        """The DTN node name, without scheme or slashes."""
        if self.scheme != EidScheme.DTN or self.is_none:
            raise InvalidEndpointId(f"{self} has no node name")
        return self.ssp[2:].split("/", 1)[0]

    def node_id(self) -> "EndpointId":
        """The node part: dtn://<name>/ or ipn:<node>.0."""
        if self.is_none:
            return self
        if self.scheme == EidScheme.DTN:
            return EndpointId(EidScheme.DTN, f"//{self.node_name}/")
        return EndpointId(EidScheme.IPN, node_number=self.node_number)

    @property
    def agent_id(self) -> str:
        """The demux token identifying the application agent."""
        if self.scheme == EidScheme.IPN:
            return str(self.service_number)
        if self.is_none:
            return ""
        return self.ssp[2:].split("/", 1)[1]

    def is_node_id(self) -> bool:
        return not self.is_none and self.agent_id == ""

    def with_agent(self, agent_id: str) -> "EndpointId":
        if self.scheme == EidScheme.IPN:
            return EndpointId(EidScheme.IPN, node_number=self.node_number,
                              service_number=int(agent_id))
        return EndpointId(EidScheme.DTN, f"//{self.node_name}/{agent_id}")

    def to_cbor_item(self):
        if self.scheme == EidScheme.DTN:
            # dtn:none encodes its ssp as the unsigned integer 0
            return [1, 0] if self.is_none else [1, self.ssp]
        return [2, [self.node_number, self.service_number]]

    @classmethod
    def from_cbor_item(cls, item) -> "EndpointId":
        if not isinstance(item, list) or len(item) != 2:
            raise InvalidEndpointId(f"EID item must be a 2-array, got {item!r}")
        scheme, ssp = item
        if scheme == EidScheme.DTN:
            if ssp == 0:
                return DTN_NONE
            if not isinstance(ssp, str):
                raise InvalidEndpointId(f"dtn ssp must be text or 0, got {ssp!r}")
            return parse_eid(f"dtn:{ssp}")
        if scheme == EidScheme.IPN:
            if (not isinstance(ssp, list) or len(ssp) != 2
                    or not all(isinstance(n, int) and n >= 0 for n in ssp)):
                raise InvalidEndpointId(f"ipn ssp must be [node, service], got {ssp!r}")
            return cls(EidScheme.IPN, node_number=ssp[0], service_number=ssp[1])
        raise InvalidEndpointId(f"unknown EID scheme {scheme!r}")


DTN_NONE = EndpointId(EidScheme.DTN, "none")


def parse_eid(text: str) -> EndpointId:
    """Parse the canonical text form; a missing trailing slash after the
    node name is tolerated and normalized ("dtn://a" -> "dtn://a/")."""
    if text.startswith("dtn:"):
        ssp = text[4:]
        if ssp == "none":
            return DTN_NONE
        if not ssp.startswith("//"):
            raise InvalidEndpointId(f"dtn ssp must start with // : {text!r}")
        rest = ssp[2:]
        if "/" not in rest:
            rest += "/"
        name, _, demux = rest.partition("/")
        if not name:
            raise InvalidEndpointId(f"empty node name: {text!r}")
        return EndpointId(EidScheme.DTN, f"//{name}/{demux}")
    if text.startswith("ipn:"):
        parts = text[4:].split(".")
        if len(parts) != 2:
            raise InvalidEndpointId(f"ipn form is ipn:<node>.<service>: {text!r}")
        try:
            node, service = int(parts[0]), int(parts[1])
        except ValueError:
            raise InvalidEndpointId(f"non-numeric ipn components: {text!r}") from None
        if node < 0 or service < 0:
            raise InvalidEndpointId(f"negative ipn components: {text!r}")
        return EndpointId(EidScheme.IPN, node_number=node, service_number=service)
    raise InvalidEndpointId(f"unknown scheme: {text!r}")
