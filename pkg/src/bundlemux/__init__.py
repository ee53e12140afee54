"""bundlemux: a Bundle Protocol v7 node built as a bundle multiplexer.

The data plane (codec, CLAs, FIB, dispatch loop) carries no routing policy
of its own; forwarding decisions come from external dispatcher modules over
the control protocol, or from static forwarding entries.
"""

__version__ = "0.1.0"
