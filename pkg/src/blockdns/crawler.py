"""SLD x TLD sweep against a resolver gateway's REST endpoint.

Results are appended to an NDJSON journal as they complete, so an
interrupted sweep resumes where it stopped. Only HTTP status and redirect
targets are ever captured from landing pages.
"""

from __future__ import annotations

import http.client
import ipaddress
import json
import logging
import os
import socket
import threading
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence
from urllib.parse import quote, urlsplit

from .analytics import UNMAPPED_COUNTRY, GeoTable, ranked

log = logging.getLogger(__name__)

PRIVATE_NETS = tuple(ipaddress.ip_network(n) for n in (
    "10.0.0.0/8", "172.16.0.0/12", "192.168.0.0/16", "127.0.0.0/8", "169.254.0.0/16",
    "::1/128", "fc00::/7", "fe80::/10",
))
PROBE_BODY_LIMIT = 4096


class EndpointUnreachable(RuntimeError):
    pass


def classify_ip(ip: str) -> str:
    addr = ipaddress.ip_address(ip)
    return "private" if any(addr in net for net in PRIVATE_NETS) else "public"


def generate_candidates(slds: Sequence[str], tlds: Sequence[str]) -> list[str]:
    """Cross product ``sld.tld`` in SLD-major order, without duplicates."""
    if not slds or not tlds:
        raise ValueError("both SLD and TLD lists must be non-empty")
    slds = list(dict.fromkeys(s.strip().lower().strip(".") for s in slds if s.strip()))
    tlds = list(dict.fromkeys(t.strip().lower().strip(".") for t in tlds if t.strip()))
    return list(dict.fromkeys(f"{s}.{t}" for s in slds for t in tlds))


@dataclass
class CrawlResult:
    candidate: str
    registered: bool = False
    ips: list[str] = field(default_factory=list)
    ip_classes: list[str] = field(default_factory=list)
    status: Optional[str] = None
    http: Optional[dict] = None
    error: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "CrawlResult":
        return cls(**json.loads(line))


class RateLimiter:
    """Spaces acquisitions at least ``1/rate`` seconds apart across threads."""

    def __init__(self, rate: Optional[float]):
        self.interval = 1.0 / rate if rate else 0.0
        self._next = 0.0
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if not self.interval:
            return
        with self._lock:
            now = time.monotonic()
            slot = max(now, self._next)
            self._next = slot + self.interval
        delay = slot - time.monotonic()
        if delay > 0:
            time.sleep(delay)


class Journal:
    """Append-only NDJSON of :class:`CrawlResult`; appends are serialised."""

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._fh = None

    def load(self) -> dict[str, CrawlResult]:
        if not self.path.exists():
            return {}
        data = self.path.read_bytes()
        end = data.rfind(b"\n") + 1
        if end != len(data):
            # drop a torn final line left by an interrupted write
            with open(self.path, "r+b") as fh:
                fh.truncate(end)
        done = {}
        for line in data[:end].decode().splitlines():
            if line.strip():
                r = CrawlResult.from_json(line)
                done[r.candidate] = r
        return done

    def append(self, result: CrawlResult) -> None:
        with self._lock:
            if self._fh is None:
                self._fh = open(self.path, "a")
            self._fh.write(result.to_json() + "\n")
            self._fh.flush()

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None


def http_probe(fqdn: str, ip: str, timeout: float = 5.0, port: int = 80) -> dict:
    """One ``GET /`` to ``ip`` with ``Host: fqdn``; redirects are reported, never followed."""
    conn = http.client.HTTPConnection(ip, port, timeout=timeout)
    try:
        conn.request("GET", "/", headers={"Host": fqdn, "User-Agent": "blockdns-probe"})
        resp = conn.getresponse()
        resp.read(PROBE_BODY_LIMIT)
        location = resp.getheader("Location") if 300 <= resp.status < 400 else None
        return {"status": resp.status, "location": location}
    except (OSError, http.client.HTTPException) as exc:
        return {"error": f"probe-error: {exc.__class__.__name__}"}
    finally:
        conn.close()


class _Client:
    """Keep-alive REST client, one connection per worker thread."""

    def __init__(self, endpoint: str, timeout: float):
        parts = urlsplit(endpoint)
        if parts.scheme not in ("http", ""):
            raise ValueError(f"unsupported endpoint scheme {parts.scheme!r}")
        self.host = parts.hostname or "127.0.0.1"
        self.port = parts.port or 80
        self.base = parts.path.rstrip("/")
        self.timeout = timeout
        self._local = threading.local()

    def _conn(self) -> http.client.HTTPConnection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = http.client.HTTPConnection(self.host, self.port, timeout=self.timeout)
            self._local.conn = conn
        return conn

    def _drop(self) -> None:
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            conn.close()
        self._local.conn = None

    def get(self, path: str) -> tuple[int, bytes]:
        for attempt in (0, 1):
            conn = self._conn()
            reused = conn.sock is not None
            try:
                conn.request("GET", self.base + path)
                resp = conn.getresponse()
                return resp.status, resp.read()
            except (http.client.RemoteDisconnected, ConnectionResetError, BrokenPipeError):
                self._drop()
                if not reused or attempt:
                    raise
            except BaseException:
                self._drop()
                raise
        raise AssertionError("unreachable")


def _is_local(endpoint: str) -> bool:
    host = urlsplit(endpoint).hostname or ""
    if host == "localhost":
        return True
    try:
        return ipaddress.ip_address(host).is_loopback
    except ValueError:
        return False


def crawl(candidates: Sequence[str], endpoint: str, *, concurrency: int = 8, rate_limit: Optional[float] = None,
          timeout: float = 5.0, journal: Optional[str | os.PathLike] = None, probe: bool = False,
          probe_timeout: float = 5.0, probe_port: int = 80, allow_external: bool = False,
          abort_after: int = 10, on_result: Optional[Callable[[CrawlResult], None]] = None) -> list[CrawlResult]:
    """Resolve every candidate through ``endpoint`` (``http://host:port``).

    At most ``concurrency`` requests are in flight and at most ``rate_limit``
    are started per second. Per-candidate failures are recorded on the
    result. If ``abort_after`` consecutive connection attempts are refused,
    the sweep stops with :class:`EndpointUnreachable`; the journal keeps
    everything finished so far and a rerun resumes from it.
    """
    if not allow_external and not _is_local(endpoint):
        raise ValueError(f"{endpoint} is not a loopback endpoint; pass allow_external=True to crawl it")
    jr = Journal(journal) if journal else None
    done = jr.load() if jr else {}
    todo = iter([c for c in dict.fromkeys(candidates) if c not in done])
    client = _Client(endpoint, timeout)
    limiter = RateLimiter(rate_limit)
    lock = threading.Lock()
    state = {"refused": 0, "abort": False}
    held: list[CrawlResult] = []
    results: dict[str, CrawlResult] = dict(done)

    def record(result: CrawlResult) -> None:
        if jr:
            jr.append(result)
        results[result.candidate] = result
        if on_result:
            on_result(result)

    def one(candidate: str) -> Optional[CrawlResult]:
        result = CrawlResult(candidate)
        try:
            status, body = client.get(f"/resolve?name={quote(candidate, safe='')}&type=ANY")
        except ConnectionRefusedError:
            return None
        except socket.timeout:
            result.error = "timeout"
            return result
        except (OSError, http.client.HTTPException) as exc:
            result.error = f"transport: {exc.__class__.__name__}"
            return result
        if status != 200:
            result.error = f"http-{status}"
            return result
        try:
            payload = json.loads(body)
            result.status = payload["status"]
            answers = payload.get("answers") or {}
            ips = list(answers.get("a", [])) + list(answers.get("aaaa", []))
        except (ValueError, KeyError, TypeError):
            result.error = "bad-response"
            return result
        result.registered = result.status in ("ok", "no_address_data")
        if result.registered:
            result.ips = ips
            result.ip_classes = [classify_ip(ip) for ip in ips]
            if probe and ips:
                result.http = http_probe(candidate, ips[0], probe_timeout, probe_port)
        return result

    def worker() -> None:
        while True:
            with lock:
                if state["abort"]:
                    return
                candidate = next(todo, None)
            if candidate is None:
                return
            limiter.acquire()
            result = one(candidate)
            with lock:
                if result is None:
                    state["refused"] += 1
                    held.append(CrawlResult(candidate, error="connection-refused"))
                    if state["refused"] >= abort_after:
                        state["abort"] = True
                    continue
                state["refused"] = 0
                pending, held[:] = list(held), []
                pending.append(result)
                for r in pending:
                    record(r)

    threads = [threading.Thread(target=worker, daemon=True) for _ in range(max(1, concurrency))]
    try:
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    finally:
        if jr:
            jr.close()
    if state["abort"]:
        raise EndpointUnreachable(f"{endpoint}: {state['refused']} consecutive connection refusals; "
                                  f"{len(results)} results kept")
    for r in held:
        record(r)
    return [results[c] for c in dict.fromkeys(candidates) if c in results]


@dataclass
class CrawlSummary:
    candidates: int = 0
    registered: int = 0
    total_ips: int = 0
    private_ips: int = 0
    public_ips: int = 0
    unique_public_ips: int = 0
    errors: int = 0
    per_ip: list[tuple[str, int]] = field(default_factory=list)
    per_country: dict[str, int] = field(default_factory=dict)
    per_country_unique_ip: dict[str, int] = field(default_factory=dict)
    http_status: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_ip"] = [list(x) for x in self.per_ip]
        return d


def aggregate_crawl(results: Iterable[CrawlResult], geo: Optional[GeoTable] = None) -> CrawlSummary:
    """Registration, address and country tallies; countries count public resolutions."""
    s = CrawlSummary()
    per_ip: Counter = Counter()
    public: list[str] = []
    statuses: Counter = Counter()
    for r in results:
        s.candidates += 1
        s.errors += r.error is not None
        if not r.registered:
            continue
        s.registered += 1
        for ip, cls in zip(r.ips, r.ip_classes):
            s.total_ips += 1
            per_ip[ip] += 1
            if cls == "private":
                s.private_ips += 1
            else:
                s.public_ips += 1
                public.append(ip)
        if r.http:
            statuses[str(r.http.get("status", "error"))] += 1
    s.unique_public_ips = len(set(public))
    s.per_ip = ranked(per_ip)
    s.http_status = dict(ranked(statuses))
    if geo is not None:
        s.per_country = dict(ranked(Counter(geo.lookup(ip) or UNMAPPED_COUNTRY for ip in public)))
        s.per_country_unique_ip = dict(ranked(Counter(geo.lookup(ip) or UNMAPPED_COUNTRY for ip in set(public))))
    return s
