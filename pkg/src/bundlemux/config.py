"""Daemon configuration: JSON file -> validated NodeConfig.

Schema (see docs/config.md):
{
  "node_id": "dtn://a.dtn/",
  "admin_secret": "text",
  "aap2": {"tcp": "127.0.0.1:4244", "socket": "/run/aap2.sock",
           "keepalive_timeout_ms": 30000},
  "cla": {"mtcp": {...}, "loopback": {...}, "storage": {...}, "bibe": {...}},
  "bdm_timeout_ms": 2000,
  "cache_enabled": true,
  "default_lifetime_ms": 86400000,
  "default_crc": "crc16" | "crc32c" | "none"
}
"""

import json
from dataclasses import dataclass, field

from .crc import CrcType
from .eid import EndpointId, parse_eid
from .errors import ConfigError, InvalidEndpointId

_CRC_NAMES = {"none": CrcType.NONE, "crc16": CrcType.CRC16_X25,
              "crc32c": CrcType.CRC32C}


@dataclass
class NodeConfig:
    node_id: EndpointId
    admin_secret: bytes = b""
    aap2_tcp: "tuple[str, int] | None" = ("127.0.0.1", 4244)
    aap2_socket: "str | None" = None
    keepalive_timeout_ms: int = 30_000
    cla: dict = field(default_factory=dict)
    bdm_timeout_ms: int = 2_000
    cache_enabled: bool = True
    default_lifetime_ms: int = 86_400_000
    default_crc: CrcType = CrcType.CRC16_X25
    tx_queue_depth: int = 256
    conn_queue_depth: int = 64
    max_adu_bytes: int = 16 * 1024 * 1024


def _host_port(text, key) -> "tuple[str, int]":
    if not isinstance(text, str) or ":" not in text:
        raise ConfigError(key, f"expected \"host:port\", got {text!r}")
    host, _, port = text.rpartition(":")
    try:
        return host, int(port)
    except ValueError:
        raise ConfigError(key, f"port is not a number in {text!r}") from None


def load_config(source) -> NodeConfig:
    """Build a NodeConfig from a dict, a JSON string, or a file path."""
    if isinstance(source, dict):
        raw = source
    else:
        text = source
        if "\n" not in str(source) and not str(source).lstrip().startswith("{"):
            with open(source) as handle:
                text = handle.read()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")

    node_text = raw.get("node_id")
    if not isinstance(node_text, str):
        raise ConfigError("node_id", "required text field")
    try:
        node_id = parse_eid(node_text).node_id()
    except InvalidEndpointId as exc:
        raise ConfigError("node_id", str(exc)) from None

    cfg = NodeConfig(node_id=node_id)

    secret = raw.get("admin_secret", "")
    if isinstance(secret, str):
        cfg.admin_secret = secret.encode("utf-8")
    else:
        raise ConfigError("admin_secret", "must be text")

    aap2 = raw.get("aap2", {})
    if not isinstance(aap2, dict):
        raise ConfigError("aap2", "must be an object")
    if "tcp" in aap2:
        cfg.aap2_tcp = _host_port(aap2["tcp"], "aap2.tcp") if aap2["tcp"] else None
    if "socket" in aap2:
        cfg.aap2_socket = aap2["socket"]
    if "keepalive_timeout_ms" in aap2:
        cfg.keepalive_timeout_ms = _uint(aap2, "keepalive_timeout_ms", "aap2")

    cla = raw.get("cla", {})
    if not isinstance(cla, dict):
        raise ConfigError("cla", "must be an object")
    for name, sub in cla.items():
        if not isinstance(sub, dict):
            raise ConfigError(f"cla.{name}", "must be an object")
    cfg.cla = cla

    for key in ("bdm_timeout_ms", "default_lifetime_ms", "tx_queue_depth",
                "conn_queue_depth", "max_adu_bytes"):
        if key in raw:
            setattr(cfg, key, _uint(raw, key))
    if "cache_enabled" in raw:
        if not isinstance(raw["cache_enabled"], bool):
            raise ConfigError("cache_enabled", "must be a boolean")
        cfg.cache_enabled = raw["cache_enabled"]
    if "default_crc" in raw:
        crc_name = raw["default_crc"]
        if crc_name not in _CRC_NAMES:
            raise ConfigError("default_crc",
                              f"must be one of {sorted(_CRC_NAMES)}, got {crc_name!r}")
        cfg.default_crc = _CRC_NAMES[crc_name]
    return cfg


def _uint(mapping, key, prefix="") -> int:
    value = mapping[key]
    full = f"{prefix}.{key}" if prefix else key
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise ConfigError(full, f"must be an unsigned integer, got {value!r}")
    return value
