from .base import Cla, ClaAddress, ClaRegistry, Link, LinkEvent, LinkState

__all__ = ["Cla", "ClaAddress", "ClaRegistry", "Link", "LinkEvent", "LinkState"]
