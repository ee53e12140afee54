from .messages import (AUTH_DISPATCH, AUTH_LINK_CONTROL, BundleAdu,
                       ConnectionConfig, DispatchRequest, DispatchResponse,
                       FrameReader, Keepalive, LinkMsg, LinkOp, Response,
                       Status, Welcome, frame, parse_frame_payload)

__all__ = [
    "AUTH_DISPATCH", "AUTH_LINK_CONTROL", "BundleAdu", "ConnectionConfig",
    "DispatchRequest", "DispatchResponse", "FrameReader", "Keepalive",
    "LinkMsg", "LinkOp", "Response", "Status", "Welcome", "frame",
    "parse_frame_payload",
]
