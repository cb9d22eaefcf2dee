"""Blockchain-TLD resolver gateway: routing, DNS wire codec, UDP and REST servers."""

from .routing import (
    DEFAULT_ROUTING,
    GatewayUnavailable,
    QType,
    ResolutionResult,
    RoutingTable,
    Status,
    UnknownTld,
    resolve,
    resolve_exact,
    route_tld,
)
from .server import Gateway, SnapshotHolder, serve_dns, serve_rest
from .wire import Rcode, WireError, decode_query, encode_response

__all__ = [
    "DEFAULT_ROUTING", "Gateway", "GatewayUnavailable", "QType", "Rcode", "ResolutionResult",
    "RoutingTable", "SnapshotHolder", "Status", "UnknownTld", "WireError", "decode_query",
    "encode_response", "resolve", "resolve_exact", "route_tld", "serve_dns", "serve_rest",
]
