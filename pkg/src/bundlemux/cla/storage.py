"""Persistent storage realized as a CLA: "transmission" persists the bundle
back to this node with undefined duration. Release is driven by command
bundles (query / delete / recall with a bundle filter) sent to a dedicated
storage endpoint, so any forwarding module can manage retention through the
normal bundle flow."""

import fnmatch
import hashlib
import logging
import os
import queue
import re
import threading

from .. import cbor
from ..bundle import CreationTimestamp, expiry_time, make_bundle
from ..codec import decode_bundle
from ..core import BundleDescriptor, Ingest, Origin, OriginKind
from ..errors import MalformedCommand, MissingBundleAge, StorageFull
from .base import Cla, ClaAddress, Link

log = logging.getLogger(__name__)

VERB_QUERY = 0
VERB_DELETE = 1
VERB_RECALL = 2

DEFAULT_QUOTA = 64 * 1024 * 1024
DEFAULT_SWEEP_MS = 10_000
DEFAULT_ENDPOINT = "sqa"


class BundleFilter:
    """Conjunctive match over stored-bundle metadata; absent fields match
    everything. The destination pattern supports "*" wildcards."""

    def __init__(self, destination_pattern=None, source=None,
                 creation_after=None, creation_before=None, limit=None):
        self.destination_pattern = destination_pattern
        self.source = source
        self.creation_after = creation_after
        self.creation_before = creation_before
        self.limit = limit
        self._regex = None
        if destination_pattern is not None:
            self._regex = re.compile(fnmatch.translate(destination_pattern))

    @classmethod
    def from_cbor_map(cls, body) -> "BundleFilter":
        if body is None:
            return cls()
        if not isinstance(body, dict):
            raise MalformedCommand(f"filter must be a map, got {body!r}")
        def expect(key, kinds, what):
            value = body.get(key)
            if value is not None and not isinstance(value, kinds):
                raise MalformedCommand(f"filter {what} has wrong type: {value!r}")
            return value
        return cls(
            destination_pattern=expect(0, str, "destination pattern"),
            source=expect(1, str, "source"),
            creation_after=expect(2, int, "creation-after"),
            creation_before=expect(3, int, "creation-before"),
            limit=expect(4, int, "limit"),
        )

    def matches(self, meta: dict) -> bool:
        if self._regex is not None and not self._regex.match(meta["destination"]):
            return False
        if self.source is not None and meta["source"] != self.source:
            return False
        if self.creation_after is not None and \
                meta["creation"][0] < self.creation_after:
            return False
        if self.creation_before is not None and \
                meta["creation"][0] > self.creation_before:
            return False
        return True

    def select(self, records: "list[dict]") -> "list[dict]":
        hits = [m for m in records if self.matches(m)]
        if self.limit is not None:
            hits = hits[:self.limit]
        return hits


class StorageCla(Cla):
    """config keys: path, quota_bytes, endpoint, sweep_interval_ms.

    One permanent loopback link; the generic TX worker persists, a command
    worker executes filter commands and injects recalls.
    """

    outcome_kind = "stored"
    tx_failure_fatal = False

    def __init__(self, name, core, config):
        super().__init__(name, core, config)
        self.path = config["path"]
        self.quota = config.get("quota_bytes", DEFAULT_QUOTA)
        self.endpoint = config.get("endpoint", DEFAULT_ENDPOINT)
        self.sweep_interval_ms = config.get("sweep_interval_ms", DEFAULT_SWEEP_MS)
        self.self_address = ClaAddress(name, "local")
        self._index = {}          # storage_id -> meta dict
        self._used = 0
        self._index_lock = threading.Lock()
        self._commands = queue.Queue()
        self._worker = None
        self._reply_seq = 0
        self.storage_link = None

    # --- management ---

    def start(self):
        os.makedirs(self.path, exist_ok=True)
        self._scan()
        self.storage_link = self.link_up(self.self_address)
        self.core.register_internal_endpoint(self.endpoint, self._command_sink)
        self._worker = threading.Thread(target=self._command_loop,
                                        name=f"{self.name}-commands", daemon=True)
        self._worker.start()

    def stop(self):
        self._commands.put(None)
        super().stop()

    def link_up(self, address: ClaAddress) -> Link:
        link = Link(self, address, self.core.tx_queue_depth)
        self._activate_link(link)
        return link

    def _scan(self):
        """Rebuild the index from disk; partial writes (*.tmp) are ignored."""
        with self._index_lock:
            self._index.clear()
            self._used = 0
            for dirpath, _, names in os.walk(self.path):
                for filename in names:
                    if not filename.endswith(".bp7"):
                        continue
                    full = os.path.join(dirpath, filename)
                    try:
                        data = open(full, "rb").read()
                        bundle = decode_bundle(data)
                    except Exception as exc:
                        log.warning("ignoring unreadable %s: %s", full, exc)
                        continue
                    storage_id = filename[:-4]
                    self._index[storage_id] = self._meta(bundle, data, storage_id)
                    self._used += len(data)

    def _meta(self, bundle, data: bytes, storage_id: str) -> dict:
        # after a restart the scan re-anchors stored_at at scan time; clocked
        # bundles keep their absolute expiry, clockless ones restart aging
        stored_at = self.core.clock.now_ms()
        try:
            expiry = expiry_time(bundle, stored_at)
        except MissingBundleAge:
            expiry = stored_at
        return {
            "storage_id": storage_id,
            "destination": str(bundle.destination),
            "source": str(bundle.source),
            "creation": (bundle.creation.dtn_time_ms,
                         bundle.creation.sequence_number),
            "lifetime_ms": bundle.lifetime_ms,
            "stored_at": stored_at,
            "size": len(data),
            "expiry": expiry,
        }

    def _file_for(self, storage_id: str) -> str:
        return os.path.join(self.path, storage_id[:2], storage_id + ".bp7")

    # --- transmission == persistence ---

    def send_frame(self, link: Link, data: bytes):
        storage_id = hashlib.sha256(data).hexdigest()
        with self._index_lock:
            if storage_id in self._index:
                return  # identical bytes already stored
            if self._used + len(data) > self.quota:
                raise StorageFull(self.quota)
            target = self._file_for(storage_id)
            os.makedirs(os.path.dirname(target), exist_ok=True)
            tmp = target + ".tmp"
            with open(tmp, "wb") as handle:
                handle.write(data)
                handle.flush()
                os.fsync(handle.fileno())
            os.replace(tmp, target)
            bundle = decode_bundle(data)
            self._index[storage_id] = self._meta(bundle, data, storage_id)
            self._used += len(data)

    # --- command endpoint ---

    def _command_sink(self, bundle) -> bool:
        self._commands.put(bundle)
        return True

    def _command_loop(self):
        next_sweep = self.core.clock.now_ms() + self.sweep_interval_ms
        while True:
            try:
                item = self._commands.get(timeout=0.05)
            except queue.Empty:
                item = False
            if item is None:
                return
            if item is not False:
                try:
                    self._execute(item)
                except Exception:
                    log.exception("storage command failed")
            now = self.core.clock.now_ms()
            if now >= next_sweep:
                self.expire_sweep(now)
                next_sweep = now + self.sweep_interval_ms

    def _execute(self, command_bundle):
        try:
            verb, bundle_filter, delete_after = self._parse_command(command_bundle)
        except MalformedCommand as exc:
            self._reply(command_bundle, {0: 1, 1: str(exc)})
            return
        with self._index_lock:
            hits = bundle_filter.select(sorted(self._index.values(),
                                               key=lambda m: m["stored_at"]))
        if verb == VERB_QUERY:
            records = [{0: m["storage_id"], 1: m["destination"], 2: m["source"],
                        3: list(m["creation"]), 4: m["lifetime_ms"],
                        5: m["stored_at"], 6: m["size"]} for m in hits]
            self._reply(command_bundle, {0: 0, 1: records})
        elif verb == VERB_DELETE:
            count = sum(1 for m in hits if self._delete(m["storage_id"]))
            self._reply(command_bundle, {0: 0, 1: count})
        elif verb == VERB_RECALL:
            count = 0
            for meta in hits:
                if self._recall(meta, delete_after):
                    count += 1
            self._reply(command_bundle, {0: 0, 1: count})
        else:
            self._reply(command_bundle, {0: 1, 1: f"unknown verb {verb}"})
        self.core.events.emit(self.core.clock.now_ms(), "storage_command",
                              verb=verb, matched=len(hits))

    def _parse_command(self, command_bundle):
        try:
            body = cbor.decode(command_bundle.payload)
        except cbor.CborError as exc:
            raise MalformedCommand(f"undecodable command: {exc}") from None
        if not isinstance(body, dict) or not isinstance(body.get(0), int):
            raise MalformedCommand(f"command must be a map with a verb: {body!r}")
        bundle_filter = BundleFilter.from_cbor_map(body.get(1))
        delete_after = body.get(2, True)
        if not isinstance(delete_after, bool):
            raise MalformedCommand("delete_after must be a boolean")
        return body[0], bundle_filter, delete_after

    def _delete(self, storage_id: str) -> bool:
        with self._index_lock:
            meta = self._index.pop(storage_id, None)
            if meta is None:
                return False
            self._used -= meta["size"]
        try:
            os.unlink(self._file_for(storage_id))
        except OSError:
            pass
        return True

    def _recall(self, meta: dict, delete_after: bool) -> bool:
        storage_id = meta["storage_id"]
        try:
            data = open(self._file_for(storage_id), "rb").read()
            bundle = decode_bundle(data)
        except Exception as exc:
            log.warning("recall of %s failed: %s", storage_id, exc)
            return False

        def on_outcome(outcome, storage_id=storage_id):
            # a re-store of the same content must not be followed by a delete
            if delete_after and outcome != "stored":
                self._delete(storage_id)

        desc = BundleDescriptor(
            bundle, Origin(OriginKind.STORAGE, storage_id),
            received_at=meta["stored_at"], on_outcome=on_outcome)
        self.core.post(Ingest(desc))
        self.core.events.emit(self.core.clock.now_ms(), "recall",
                              storage_id=storage_id[:12])
        return True

    def _reply(self, command_bundle, reply_body: dict):
        reply_to = command_bundle.source
        if reply_to.is_none:
            return
        self._reply_seq += 1
        bundle = make_bundle(
            reply_to,
            self.core.node_id.with_agent(self.endpoint),
            cbor.encode(reply_body),
            creation=CreationTimestamp(self.core.clock.now_ms(), self._reply_seq),
            lifetime_ms=self.core.config.default_lifetime_ms,
            crc_type=self.core.config.default_crc,
        )
        desc = BundleDescriptor(bundle, Origin(OriginKind.STORAGE, "reply"),
                                received_at=self.core.clock.now_ms())
        self.core.post(Ingest(desc))

    # --- retention ---

    def expire_sweep(self, now_ms: int) -> int:
        with self._index_lock:
            dead = [sid for sid, meta in self._index.items()
                    if meta["expiry"] <= now_ms]
        for storage_id in dead:
            self._delete(storage_id)
        if dead:
            self.core.events.emit(now_ms, "storage_sweep", removed=len(dead))
        return len(dead)

    # --- introspection for tests/tools ---

    def record_count(self) -> int:
        with self._index_lock:
            return len(self._index)

    def records(self) -> "list[dict]":
        with self._index_lock:
            return sorted(self._index.values(), key=lambda m: m["stored_at"])
