"""DNS-over-UDP and REST front ends for the resolver gateway."""

from __future__ import annotations

import json
import logging
import socketserver
import threading
from dataclasses import dataclass, field
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional
from urllib.parse import parse_qs, urlsplit

from ..namedb import NameDbView
from .routing import (
    DEFAULT_ROUTING,
    GatewayUnavailable,
    QType,
    ResolutionResult,
    RoutingTable,
    resolve,
    resolve_exact,
)
from .wire import (
    DEFAULT_TTL,
    Rcode,
    WireError,
    decode_query,
    encode_error,
    encode_response,
    formerr_for,
    unsupported_reason,
)

log = logging.getLogger(__name__)


class SnapshotHolder:
    """Holds the database view served to requests; ingest swaps it between requests."""

    def __init__(self, view: Optional[NameDbView] = None):
        self._view = view
        self._lock = threading.Lock()

    def get(self) -> Optional[NameDbView]:
        with self._lock:
            return self._view

    def swap(self, view: Optional[NameDbView]) -> None:
        with self._lock:
            self._view = view


@dataclass
class Gateway:
    source: Callable[[], Optional[NameDbView]]
    routing: RoutingTable = DEFAULT_ROUTING
    ttl: int = DEFAULT_TTL
    formerr: bool = True  # answer undecodable packets with FORMERR instead of dropping
    at_height: Optional[int] = None
    stats: dict = field(default_factory=lambda: {"queries": 0, "errors": 0})

    def resolve(self, fqdn: str, qtype: QType) -> ResolutionResult:
        return resolve(fqdn, qtype, self.source(), self.at_height, self.routing)

    def resolve_exact(self, name: str, qtype: QType) -> ResolutionResult:
        return resolve_exact(name, qtype, self.source(), self.at_height, self.routing)

    def handle_packet(self, packet: bytes) -> Optional[bytes]:
        """Response bytes for one UDP datagram, or ``None`` to stay silent."""
        self.stats["queries"] += 1
        try:
            query = decode_query(packet)
        except WireError as exc:
            log.debug("undecodable packet: %s", exc)
            return formerr_for(packet) if self.formerr else None
        if query.is_response:
            return None
        rcode = unsupported_reason(query)
        if rcode is not None:
            return encode_error(query, rcode)
        try:
            result = self.resolve(query.fqdn, QType(query.qtype))
        except GatewayUnavailable:
            return encode_error(query, Rcode.SERVFAIL)
        except Exception:
            self.stats["errors"] += 1
            log.exception("resolution failed for %r", query.fqdn)
            return encode_error(query, Rcode.SERVFAIL)
        return encode_response(query, result, self.ttl, self.routing.unknown_tld)

    def handle_rest(self, path: str) -> tuple[int, dict]:
        """HTTP status and JSON body for a REST request path."""
        parts = urlsplit(path)
        if parts.path != "/resolve":
            return HTTPStatus.NOT_FOUND, {"error": f"unknown path {parts.path}"}
        params = parse_qs(parts.query, keep_blank_values=True, errors="surrogateescape")
        names = params.get("name")
        if not names or not names[0]:
            return HTTPStatus.BAD_REQUEST, {"error": "missing required parameter 'name'"}
        qtype_name = params.get("type", ["A"])[0].upper()
        if qtype_name not in QType.__members__:
            return HTTPStatus.BAD_REQUEST, {"error": f"unsupported type {qtype_name!r}; use A, AAAA or ANY"}
        exact = params.get("exact", ["0"])[0]
        if exact not in ("0", "1"):
            return HTTPStatus.BAD_REQUEST, {"error": "exact must be 0 or 1"}
        name = names[0]
        qtype = QType[qtype_name]
        try:
            if exact == "1":
                result = self.resolve_exact(name, qtype)
            else:
                result = self.resolve(name.encode("utf-8", "surrogateescape").lower().decode("utf-8", "surrogateescape"), qtype)
        except GatewayUnavailable as exc:
            return HTTPStatus.SERVICE_UNAVAILABLE, {"error": str(exc)}
        body = result.to_dict()
        body["name"] = name.encode("utf-8", "backslashreplace").decode("ascii", "backslashreplace")
        body["type"] = qtype_name
        return HTTPStatus.OK, body


class _UdpHandler(socketserver.BaseRequestHandler):
    def handle(self):
        packet, sock = self.request
        try:
            reply = self.server.gateway.handle_packet(packet)
        except Exception:
            log.exception("unhandled error answering %s", self.client_address)
            return
        if reply is not None:
            sock.sendto(reply, self.client_address)


class DnsServer(socketserver.ThreadingUDPServer):
    daemon_threads = False
    block_on_close = True  # server_close() drains in-flight requests

    def __init__(self, address: tuple[str, int], gateway: Gateway):
        self.gateway = gateway
        super().__init__(address, _UdpHandler)


class _RestHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "blockdns"
    disable_nagle_algorithm = True  # headers and body go out in separate writes

    def do_GET(self):
        try:
            status, body = self.server.gateway.handle_rest(self.path)
        except Exception:
            log.exception("unhandled error for %s", self.path)
            status, body = HTTPStatus.INTERNAL_SERVER_ERROR, {"error": "internal error"}
        payload = json.dumps(body, sort_keys=True).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)


class RestServer(ThreadingHTTPServer):
    daemon_threads = False
    block_on_close = True

    def __init__(self, address: tuple[str, int], gateway: Gateway):
        self.gateway = gateway
        super().__init__(address, _RestHandler)


class _Running:
    """A server running on a background thread."""

    def __init__(self, server: socketserver.BaseServer):
        self.server = server
        self.thread = threading.Thread(target=server.serve_forever, kwargs={"poll_interval": 0.1}, daemon=True)
        self.thread.start()

    @property
    def address(self) -> tuple[str, int]:
        return self.server.server_address[:2]

    def stop(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()


def serve_dns(bind: tuple[str, int], gateway: Gateway) -> _Running:
    """Start a UDP DNS server on ``bind``; raises ``OSError`` if the address is taken."""
    return _Running(DnsServer(bind, gateway))


def serve_rest(bind: tuple[str, int], gateway: Gateway) -> _Running:
    """Start the REST endpoint ``GET /resolve?name=&type=&exact=`` on ``bind``."""
    return _Running(RestServer(bind, gateway))
