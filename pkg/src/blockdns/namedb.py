"""Authoritative store of name state with full history and expiry accounting.

Each name keeps an append-only history; everything else about a record
(owner, value, parsed records, registration point, expiry) is derived by
folding that history under an :class:`ExpiryPolicy`. Queries take an
optional height, so past states can be inspected exactly.

Concurrency: one writer at a time (:meth:`NameDb.writer`), and readers take
:meth:`NameDb.snapshot`, an immutable view of the last committed state.
"""

from __future__ import annotations

import bisect
import dataclasses
import json
import os
import struct
import tempfile
import threading
import zlib
from contextlib import contextmanager
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, Optional

from .ingest import Chain, NameOperation, Op, format_dump_line
from .nvs import DnsRecordSet, name_to_fqdn, parse_value, to_bytes, to_text
from .timeutil import SECONDS_PER_DAY

SNAPSHOT_MAGIC = b"BDNSNAP\x00"
SNAPSHOT_VERSION = (1, 0)

Key = tuple[str, bytes]


class ConcurrentWriteError(RuntimeError):
    pass


class SnapshotFormatError(ValueError):
    pass


class ExpiryKind(str, Enum):
    BLOCK_HORIZON = "block_horizon"
    WALL_CLOCK = "wall_clock"
    NEVER = "never"


@dataclass(frozen=True)
class ExpiryPoint:
    kind: ExpiryKind
    at: Optional[int] = None

    def expired(self, height: int, time: int) -> bool:
        if self.kind is ExpiryKind.BLOCK_HORIZON:
            return height >= self.at
        if self.kind is ExpiryKind.WALL_CLOCK:
            return time >= self.at
        return False


NEVER = ExpiryPoint(ExpiryKind.NEVER)


@dataclass(frozen=True)
class ExpiryPolicy:
    """Per-chain expiry rules.

    Namecoin names lapse ``namecoin_horizon`` blocks after their last
    register/update (``None`` disables expiry). Emercoin names lapse
    ``expiry_days`` after their last register/update, measured from that
    operation's timestamp; operations without ``expiry_days`` get
    ``emercoin_default_days``.
    """

    namecoin_horizon: Optional[int] = 36000
    emercoin_default_days: int = 365

    def to_dict(self) -> dict:
        return {
            "namecoin_horizon": self.namecoin_horizon,
            "emercoin_default_days": self.emercoin_default_days,
            "emercoin_update_semantics": "reset-from-update-time",
        }


@dataclass(frozen=True)
class HistoryEntry:
    height: int
    time: int
    op: Op
    owner: str
    value: bytes
    txid: str
    generation: int
    expiry_days: Optional[int] = None

    @property
    def order(self) -> tuple[int, str]:
        return self.height, self.txid


@dataclass(frozen=True)
class NameRecord:
    chain: str
    raw_name: bytes
    fqdn: str
    namespace: str
    owner: str
    value: bytes
    records: DnsRecordSet
    registered_height: int
    registered_time: int
    registration_txid: str
    last_update_height: int
    last_update_time: int
    expires_at: ExpiryPoint
    deleted: bool
    generation: int
    history: tuple[HistoryEntry, ...]
    active: bool = False

    @property
    def key(self) -> Key:
        return self.chain, self.raw_name


class ApplyStatus(str, Enum):
    CREATED = "created"
    UPDATED = "updated"
    DELETED = "deleted"
    REJECTED = "rejected"


@dataclass(frozen=True)
class ApplyOutcome:
    status: ApplyStatus
    reason: str = ""

    @property
    def rejected(self) -> bool:
        return self.status is ApplyStatus.REJECTED


def compute_expiry(record: NameRecord, policy: ExpiryPolicy) -> ExpiryPoint:
    """Expiry of the record's current generation under ``policy``."""
    live = [e for e in record.history if e.generation == record.generation and e.op is not Op.DELETE]
    last = live[-1] if live else record.history[-1]
    if record.chain == Chain.NAMECOIN.value:
        if policy.namecoin_horizon is None:
            return NEVER
        return ExpiryPoint(ExpiryKind.BLOCK_HORIZON, last.height + policy.namecoin_horizon)
    days = last.expiry_days if last.expiry_days is not None else policy.emercoin_default_days
    return ExpiryPoint(ExpiryKind.WALL_CLOCK, last.time + days * SECONDS_PER_DAY)


def _fold(chain: str, raw_name: bytes, history: tuple[HistoryEntry, ...], policy: ExpiryPolicy) -> NameRecord:
    """Derive the flat record fields from a non-empty history."""
    fqdn, namespace = name_to_fqdn(chain, raw_name)
    last = history[-1]
    reg = next(e for e in reversed(history) if e.op is Op.REGISTER)
    live = next((e for e in reversed(history) if e.op is not Op.DELETE), reg)
    value = b"" if last.op is Op.DELETE else live.value
    rec = NameRecord(
        chain=chain,
        raw_name=raw_name,
        fqdn=fqdn,
        namespace=namespace,
        owner=live.owner,
        value=value,
        records=parse_value(chain, value),
        registered_height=reg.height,
        registered_time=reg.time,
        registration_txid=reg.txid,
        last_update_height=live.height,
        last_update_time=live.time,
        expires_at=NEVER,
        deleted=last.op is Op.DELETE,
        generation=last.generation,
        history=history,
    )
    return dataclasses.replace(rec, expires_at=compute_expiry(rec, policy))


class _Clock:
    """Per-chain height -> time mapping built from observed operations.

    ``time_at(h)`` is the latest timestamp seen at or below height ``h``, so
    wall-clock expiry can be evaluated at any height.
    """

    def __init__(self):
        self.heights: list[int] = []
        self.maxima: list[int] = []
        self._raw: dict[int, int] = {}

    def observe(self, height: int, time: int) -> None:
        if self._raw.get(height, -1) >= time:
            return
        self._raw[height] = time
        if not self.heights or height > self.heights[-1]:
            self.heights.append(height)
            self.maxima.append(max(time, self.maxima[-1]) if self.maxima else time)
            return
        # out-of-order observation: rebuild the running maximum
        self.heights = sorted(self._raw)
        running, self.maxima = 0, []
        for h in self.heights:
            running = max(running, self._raw[h])
            self.maxima.append(running)

    @property
    def tip(self) -> int:
        return self.heights[-1] if self.heights else 0

    def time_at(self, height: int) -> int:
        i = bisect.bisect_right(self.heights, height)
        return self.maxima[i - 1] if i else 0

    def copy(self) -> "_Clock":
        c = _Clock()
        c.heights, c.maxima, c._raw = list(self.heights), list(self.maxima), dict(self._raw)
        return c


class NameDbView:
    """Read-only access to name state. :class:`NameDb` extends it with writes."""

    def __init__(self, policy: ExpiryPolicy, histories=None, by_fqdn=None, clocks=None, txids=None):
        self.policy = policy
        self._histories: dict[Key, tuple[HistoryEntry, ...]] = histories if histories is not None else {}
        self._by_fqdn: dict[str, tuple[Key, ...]] = by_fqdn if by_fqdn is not None else {}
        self._clocks: dict[str, _Clock] = clocks if clocks is not None else {c.value: _Clock() for c in Chain}
        self._txids: set[str] = txids if txids is not None else set()
        self._cache: dict[Key, NameRecord] = {}

    def __len__(self) -> int:
        return len(self._histories)

    def has_txid(self, txid: str) -> bool:
        return txid in self._txids

    def tip(self, chain: str) -> int:
        return self._clocks[chain].tip

    def time_at(self, chain: str, height: int) -> int:
        return self._clocks[chain].time_at(height)

    def _point(self, chain: str, at_height: Optional[int], at_time: Optional[int]) -> tuple[int, int]:
        h = self._clocks[chain].tip if at_height is None else at_height
        t = self._clocks[chain].time_at(h) if at_time is None else at_time
        return h, t

    def _tip_record(self, key: Key) -> NameRecord:
        rec = self._cache.get(key)
        if rec is None:
            rec = _fold(key[0], key[1], self._histories[key], self.policy)
            self._cache[key] = rec
        return rec

    def record_at(self, key: Key, at_height: Optional[int] = None, at_time: Optional[int] = None) -> Optional[NameRecord]:
        """State of one name as of a height; ``None`` if it had no history yet."""
        history = self._histories.get(key)
        if history is None:
            return None
        h, t = self._point(key[0], at_height, at_time)
        if history[-1].height <= h:
            rec = self._tip_record(key)
        else:
            cut = bisect.bisect_right([e.height for e in history], h)
            if cut == 0:
                return None
            rec = _fold(key[0], key[1], history[:cut], self.policy)
        active = not rec.deleted and not rec.expires_at.expired(h, t)
        return dataclasses.replace(rec, active=active)

    def records(self, at_height: Optional[int] = None, at_time: Optional[int] = None) -> Iterator[NameRecord]:
        """Every name with history at the given point, active or not."""
        for key in self._ordered_keys():
            rec = self.record_at(key, at_height, at_time)
            if rec is not None:
                yield rec

    def _ordered_keys(self) -> list[Key]:
        return sorted(self._histories, key=lambda k: (k[0], self._tip_record(k).fqdn, k[1]))

    def lookup_exact(self, chain: str, raw_name: bytes, at_height: Optional[int] = None,
                     at_time: Optional[int] = None) -> Optional[NameRecord]:
        rec = self.record_at((chain, raw_name), at_height, at_time)
        return rec if rec is not None and rec.active else None

    def lookup_fqdn(self, fqdn: str, at_height: Optional[int] = None, at_time: Optional[int] = None) -> list[NameRecord]:
        found = []
        for key in self._by_fqdn.get(fqdn, ()):
            rec = self.record_at(key, at_height, at_time)
            if rec is not None and rec.active:
                found.append(rec)
        found.sort(key=lambda r: (r.registered_height, r.registration_txid))
        return found

    def active_set(self, at_height: Optional[int] = None, at_time: Optional[int] = None) -> Iterator[NameRecord]:
        return (r for r in self.records(at_height, at_time) if r.active)

    def operations(self) -> list[NameOperation]:
        """Every applied operation, in application order."""
        ops = []
        for (chain, raw_name), history in self._histories.items():
            for e in history:
                ops.append(NameOperation(Chain(chain), e.op, raw_name, e.value, e.owner, e.height, e.time,
                                         e.txid, e.expiry_days))
        ops.sort(key=lambda o: o.order)
        return ops

    def export_ndjson(self) -> Iterator[str]:
        for op in self.operations():
            yield format_dump_line(op)

    def save(self, path: str | os.PathLike) -> None:
        """Write a snapshot file, replacing ``path`` atomically."""
        payload = {
            "policy": {
                "namecoin_horizon": self.policy.namecoin_horizon,
                "emercoin_default_days": self.policy.emercoin_default_days,
            },
            "names": [
                {
                    "chain": chain,
                    "name": to_text(raw_name),
                    "history": [[e.height, e.time, e.op.value, e.owner, to_text(e.value), e.txid,
                                 e.generation, e.expiry_days] for e in history],
                }
                for (chain, raw_name), history in sorted(self._histories.items())
            ],
        }
        body = zlib.compress(json.dumps(payload, ensure_ascii=True, separators=(",", ":")).encode("ascii"), 6)
        blob = SNAPSHOT_MAGIC + struct.pack(">HHQ", *SNAPSHOT_VERSION, len(body)) + body
        path = Path(path)
        fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent or ".")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(blob)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def apply_operation(db: "NameDb", op: NameOperation) -> ApplyOutcome:
    return db.apply(op)


def lookup_exact(db: NameDbView, chain: str, raw_name: bytes, at_height: Optional[int] = None) -> Optional[NameRecord]:
    return db.lookup_exact(chain, raw_name, at_height)


def lookup_fqdn(db: NameDbView, fqdn: str, at_height: Optional[int] = None) -> list[NameRecord]:
    return db.lookup_fqdn(fqdn, at_height)


def active_set(db: NameDbView, at_height: Optional[int] = None) -> Iterator[NameRecord]:
    return db.active_set(at_height)


class NameDb(NameDbView):
    def __init__(self, policy: ExpiryPolicy = ExpiryPolicy()):
        super().__init__(policy)
        self._write_lock = threading.RLock()
        self._writing = 0
        self._dirty = False
        self._committed: NameDbView = self._freeze()

    def _freeze(self) -> NameDbView:
        view = NameDbView(self.policy, dict(self._histories), dict(self._by_fqdn),
                          {c: clk.copy() for c, clk in self._clocks.items()}, set(self._txids))
        view._cache = dict(self._cache)
        return view

    def snapshot(self) -> NameDbView:
        """The last committed state; never reflects a half-applied dump."""
        if self._write_lock.acquire(blocking=False):
            try:
                if self._dirty and not self._writing:
                    self._committed = self._freeze()
                    self._dirty = False
            finally:
                self._write_lock.release()
        return self._committed

    @contextmanager
    def writer(self):
        """Exclusive write section; its changes become visible to readers on exit."""
        if not self._write_lock.acquire(blocking=False):
            raise ConcurrentWriteError("another ingest is already writing to this database")
        self._writing += 1
        try:
            yield self
        finally:
            self._writing -= 1
            if not self._writing and self._dirty:
                self._committed = self._freeze()
                self._dirty = False
            self._write_lock.release()

    def apply(self, op: NameOperation) -> ApplyOutcome:
        if self._writing:
            return self._apply(op)
        with self.writer():
            return self._apply(op)

    def _apply(self, op: NameOperation) -> ApplyOutcome:
        key = op.key
        history = self._histories.get(key)
        if op.txid in self._txids:
            return ApplyOutcome(ApplyStatus.REJECTED, "duplicate-txid")
        if history is not None and op.order <= history[-1].order:
            return ApplyOutcome(ApplyStatus.REJECTED, "stale-op")

        if history is None:
            if op.op is not Op.REGISTER:
                return ApplyOutcome(ApplyStatus.REJECTED, "unknown-name")
            generation, status = 0, ApplyStatus.CREATED
        else:
            current = self._tip_record(key)
            lapsed = current.deleted or current.expires_at.expired(op.height, op.time)
            if op.op is Op.REGISTER:
                if not lapsed:
                    return ApplyOutcome(ApplyStatus.REJECTED, "name-taken")
                generation, status = current.generation + 1, ApplyStatus.CREATED
            elif current.deleted:
                return ApplyOutcome(ApplyStatus.REJECTED, "name-deleted")
            elif lapsed:
                return ApplyOutcome(ApplyStatus.REJECTED, "rejected-expired-update")
            else:
                generation = current.generation
                status = ApplyStatus.UPDATED if op.op is Op.UPDATE else ApplyStatus.DELETED

        entry = HistoryEntry(op.height, op.time, op.op, op.owner, op.value, op.txid, generation, op.expiry_days)
        self._append(key, entry)
        return ApplyOutcome(status)

    def _append(self, key: Key, entry: HistoryEntry) -> None:
        history = self._histories.get(key)
        if history is None:
            fqdn, _ = name_to_fqdn(key[0], key[1])
            self._by_fqdn[fqdn] = self._by_fqdn.get(fqdn, ()) + (key,)
            history = ()
        self._histories[key] = history + (entry,)
        self._cache.pop(key, None)
        self._txids.add(entry.txid)
        self._clocks[key[0]].observe(entry.height, entry.time)
        self._dirty = True

    @classmethod
    def load(cls, path: str | os.PathLike, policy: Optional[ExpiryPolicy] = None) -> "NameDb":
        """Read a snapshot written by :meth:`save`. ``policy`` overrides the stored one."""
        blob = Path(path).read_bytes()
        header = len(SNAPSHOT_MAGIC) + 12
        if len(blob) < header or not blob.startswith(SNAPSHOT_MAGIC):
            raise SnapshotFormatError(f"{path}: not a name database snapshot")
        major, minor, size = struct.unpack(">HHQ", blob[len(SNAPSHOT_MAGIC):header])
        if major != SNAPSHOT_VERSION[0]:
            raise SnapshotFormatError(f"{path}: snapshot version {major}.{minor} is not supported")
        try:
            payload = json.loads(zlib.decompress(blob[header:header + size]))
        except (zlib.error, ValueError) as exc:
            raise SnapshotFormatError(f"{path}: corrupt snapshot body ({exc})") from None

        stored = payload["policy"]
        db = cls(policy or ExpiryPolicy(stored["namecoin_horizon"], stored["emercoin_default_days"]))
        for item in payload["names"]:
            key = (item["chain"], to_bytes(item["name"]))
            for h, t, op, owner, value, txid, gen, days in item["history"]:
                db._append(key, HistoryEntry(h, t, Op(op), owner, to_bytes(value), txid, gen, days))
        db._committed = db._freeze()
        db._dirty = False
        return db
