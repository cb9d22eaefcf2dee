"""Name-operation dumps: NDJSON parsing, validation and ordered ingestion.

A dump line is one JSON object with exactly the keys
``chain, op, name, value, owner, height, time, txid`` and, for Emercoin
only, ``expiry_days``. Arbitrary bytes in ``name`` and ``value`` travel as
``\\udcXX`` escapes (Python's ``surrogateescape`` convention), so every
byte string round-trips through :func:`format_dump_line`.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .nvs import InvalidName, name_to_fqdn, to_bytes, to_text

log = logging.getLogger(__name__)

MAX_NAME_BYTES = 255
MAX_VALUE_BYTES = 20 * 1024

_TXID = re.compile(r"[0-9a-f]{64}")
_REQUIRED = ("chain", "op", "name", "value", "owner", "height", "time", "txid")
_ALLOWED = frozenset(_REQUIRED + ("expiry_days",))


class Chain(str, Enum):
    NAMECOIN = "namecoin"
    EMERCOIN = "emercoin"


class Op(str, Enum):
    REGISTER = "register"
    UPDATE = "update"
    DELETE = "delete"


class DumpError(ValueError):
    """A dump line failed validation; ``reason`` is a stable short tag."""

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail


@dataclass(frozen=True)
class NameOperation:
    chain: Chain
    op: Op
    raw_name: bytes
    value: bytes
    owner: str
    height: int
    time: int
    txid: str
    expiry_days: Optional[int] = None

    @property
    def key(self) -> tuple[str, bytes]:
        return self.chain.value, self.raw_name

    @property
    def order(self) -> tuple[int, str]:
        return self.height, self.txid


def _nonneg_int(obj: dict, key: str) -> int:
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise DumpError("malformed", f"{key} must be an integer")
    if v < 0:
        raise DumpError("negative-field", f"{key}={v}")
    return v


def _encoded(obj: dict, key: str) -> bytes:
    v = obj[key]
    if not isinstance(v, str):
        raise DumpError("malformed", f"{key} must be a string")
    try:
        return to_bytes(v)
    except UnicodeEncodeError:
        raise DumpError("bad-encoding", f"{key} holds an unpaired surrogate outside the byte-escape range")


def parse_dump_line(line: str) -> NameOperation:
    try:
        obj = json.loads(line)
    except (ValueError, RecursionError) as exc:
        raise DumpError("malformed", f"not JSON ({exc.__class__.__name__})")
    if not isinstance(obj, dict):
        raise DumpError("malformed", "record is not an object")
    missing = [k for k in _REQUIRED if k not in obj]
    if missing:
        raise DumpError("malformed", f"missing keys {missing}")
    extra = sorted(set(obj) - _ALLOWED)
    if extra:
        raise DumpError("malformed", f"unexpected keys {extra}")

    try:
        chain = Chain(obj["chain"])
    except ValueError:
        raise DumpError("unknown-chain", repr(obj["chain"])[:40])
    try:
        op = Op(obj["op"])
    except ValueError:
        raise DumpError("unknown-op", repr(obj["op"])[:40])

    txid = obj["txid"]
    if not isinstance(txid, str) or not _TXID.fullmatch(txid):
        raise DumpError("bad-txid", repr(txid)[:80])
    if not isinstance(obj["owner"], str):
        raise DumpError("malformed", "owner must be a string")

    height = _nonneg_int(obj, "height")
    time = _nonneg_int(obj, "time")
    if time == 0:
        raise DumpError("negative-field", "time must be positive")

    expiry_days = obj.get("expiry_days")
    if expiry_days is not None:
        expiry_days = _nonneg_int(obj, "expiry_days")
        if expiry_days == 0:
            raise DumpError("negative-field", "expiry_days must be positive")
        if chain is not Chain.EMERCOIN:
            raise DumpError("expiry-on-namecoin")

    raw_name = _encoded(obj, "name")
    value = _encoded(obj, "value")
    if not raw_name:
        raise DumpError("empty-name")
    if len(raw_name) > MAX_NAME_BYTES:
        raise DumpError("name-too-long", f"{len(raw_name)} bytes")
    if len(value) > MAX_VALUE_BYTES:
        raise DumpError("value-too-long", f"{len(value)} bytes")
    if op is Op.DELETE and value:
        raise DumpError("delete-with-value")
    try:
        name_to_fqdn(chain.value, raw_name)
    except InvalidName as exc:
        raise DumpError("empty-sld", str(exc))

    return NameOperation(chain, op, raw_name, value, obj["owner"], height, time, txid, expiry_days)


def format_dump_line(op: NameOperation) -> str:
    """Canonical dump line for ``op``; :func:`parse_dump_line` inverts it."""
    obj = {
        "chain": op.chain.value,
        "op": op.op.value,
        "name": to_text(op.raw_name),
        "value": to_text(op.value),
        "owner": op.owner,
        "height": op.height,
        "time": op.time,
        "txid": op.txid,
    }
    if op.expiry_days is not None:
        obj["expiry_days"] = op.expiry_days
    return json.dumps(obj, ensure_ascii=True, separators=(",", ":"))


@dataclass
class IngestReport:
    accepted: int = 0
    rejected: int = 0
    rejects: list[tuple[int, str]] = field(default_factory=list)
    height_range: Optional[tuple[int, int]] = None

    def summary(self) -> str:
        hr = "-" if self.height_range is None else f"{self.height_range[0]}..{self.height_range[1]}"
        return f"accepted={self.accepted} rejected={self.rejected} heights={hr}"

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "rejects": [{"line": n, "reason": r} for n, r in self.rejects],
            "height_range": list(self.height_range) if self.height_range else None,
        }


def ingest_stream(lines: Iterable[str], db) -> IngestReport:
    """Validate ``lines`` and apply them to ``db`` in (height, txid) order.

    Blank lines are skipped and not counted. A txid seen earlier in the
    stream, or already applied to ``db``, is rejected as ``duplicate-txid``,
    which makes re-ingesting a dump a no-op on the database. Operations the
    database refuses (update of an unknown name, etc.) count as rejected.
    """
    report = IngestReport()
    pending: list[tuple[int, NameOperation]] = []
    seen: set[str] = set()

    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            op = parse_dump_line(line)
        except DumpError as exc:
            report.rejects.append((lineno, exc.reason))
            continue
        if op.txid in seen or db.has_txid(op.txid):
            report.rejects.append((lineno, "duplicate-txid"))
            continue
        seen.add(op.txid)
        pending.append((lineno, op))

    pending.sort(key=lambda item: item[1].order)
    with db.writer():
        for lineno, op in pending:
            outcome = db.apply(op)
            if outcome.rejected:
                report.rejects.append((lineno, outcome.reason))
                continue
            report.accepted += 1
            lo, hi = report.height_range or (op.height, op.height)
            report.height_range = (min(lo, op.height), max(hi, op.height))

    report.rejects.sort()
    report.rejected = len(report.rejects)
    if report.rejected:
        log.info("ingest rejected %d line(s)", report.rejected)
    return report
