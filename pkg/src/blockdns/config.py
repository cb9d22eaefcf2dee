"""YAML configuration with line-anchored validation errors.

Every path is resolved relative to the config file's directory. Inputs
must be readable at load time; the database path only needs a writable
parent, because ``ingest`` creates it.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Any, Optional

import yaml

from .gateway.routing import DEFAULT_ROUTING, RoutingTable, UnknownTld
from .namedb import ExpiryPolicy

ENV_CONFIG = "BLOCKDNS_CONFIG"


class ConfigError(ValueError):
    def __init__(self, source: str, line: Optional[int], message: str):
        self.source, self.line, self.message = source, line, message
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")


@dataclass
class ServerConfig:
    dns: Optional[tuple[str, int]] = None
    rest: Optional[tuple[str, int]] = None
    ttl: int = 300
    formerr: bool = True
    drain_timeout: float = 5.0
    reload_interval: float = 0.0


@dataclass
class CrawlConfig:
    endpoint: str = "http://127.0.0.1:8053"
    concurrency: int = 8
    rate_limit: Optional[float] = None
    timeout: float = 5.0
    probe: bool = False
    allow_external: bool = False


@dataclass
class Config:
    source: str = "<defaults>"
    db: Optional[Path] = None
    policy: Optional[ExpiryPolicy] = None  # None: use the policy stored in the snapshot
    routing: RoutingTable = DEFAULT_ROUTING
    tld_list: Optional[Path] = None
    geo: Optional[Path] = None
    top_sites: Optional[Path] = None
    server: ServerConfig = field(default_factory=ServerConfig)
    crawl: CrawlConfig = field(default_factory=CrawlConfig)


def parse_bind(text: str) -> tuple[str, int]:
    """``host:port`` (``[v6]:port`` for IPv6) to a bind tuple."""
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit() or not 0 <= int(port) <= 65535:
        raise ValueError(f"expected host:port, got {text!r}")
    return host.strip("[]") or "127.0.0.1", int(port)


def _line(node: yaml.Node) -> int:
    return node.start_mark.line + 1


class _Reader:
    def __init__(self, source: str, base: Path):
        self.source = source
        self.base = base

    def fail(self, node: Optional[yaml.Node], message: str):
        raise ConfigError(self.source, _line(node) if node is not None else None, message)

    def mapping(self, node: yaml.Node, allowed: set[str], what: str) -> dict[str, tuple[yaml.Node, yaml.Node]]:
        if not isinstance(node, yaml.MappingNode):
            self.fail(node, f"{what} must be a mapping")
        out = {}
        for k, v in node.value:
            key = k.value if isinstance(k, yaml.ScalarNode) else None
            if key not in allowed:
                self.fail(k, f"unknown key {key!r} in {what}; expected one of {sorted(allowed)}")
            if key in out:
                self.fail(k, f"duplicate key {key!r}")
            out[key] = (k, v)
        return out

    def scalar(self, node: yaml.Node, kind: type, what: str) -> Any:
        if not isinstance(node, yaml.ScalarNode):
            self.fail(node, f"{what} must be a scalar")
        value = yaml.safe_load(yaml.serialize(node))
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if value is None and kind is not bool:
            return None
        if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
            self.fail(node, f"{what} must be {kind.__name__}, got {value!r}")
        return value

    def path(self, node: yaml.Node, what: str, must_exist: bool = True) -> Path:
        p = Path(self.scalar(node, str, what))
        p = p if p.is_absolute() else self.base / p
        if must_exist:
            if not p.is_file() or not os.access(p, os.R_OK):
                self.fail(node, f"{what}: {p} is not a readable file")
        elif not p.parent.is_dir():
            self.fail(node, f"{what}: directory {p.parent} does not exist")
        return p

    def positive(self, node: yaml.Node, kind: type, what: str, allow_zero: bool = False):
        value = self.scalar(node, kind, what)
        if value is not None and (value < 0 or (value == 0 and not allow_zero)):
            self.fail(node, f"{what} must be {'non-negative' if allow_zero else 'positive'}")
        return value


def load_config(path: str | os.PathLike) -> Config:
    path = Path(path)
    source = str(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(source, None, f"cannot read config: {exc.strerror}") from None
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(source, mark.line + 1 if mark else None, f"invalid YAML: {exc.problem}") from None
    cfg = Config(source=source)
    if root is None:
        return cfg
    r = _Reader(source, path.parent)
    top = r.mapping(root, {"db", "policy", "routing", "tld_list", "geo", "top_sites", "server", "crawl"},
                    "top level")

    if "db" in top:
        cfg.db = r.path(top["db"][1], "db", must_exist=False)
    for key in ("tld_list", "geo", "top_sites"):
        if key in top:
            setattr(cfg, key, r.path(top[key][1], key))

    if "policy" in top:
        m = r.mapping(top["policy"][1], {"namecoin_horizon", "emercoin_default_days"}, "policy")
        kwargs = {k: r.positive(v, int, f"policy.{k}") for k, (_, v) in m.items()}
        cfg.policy = ExpiryPolicy(**kwargs)

    if "routing" in top:
        m = r.mapping(top["routing"][1], {"routes", "unknown_tld"}, "routing")
        routes = dict(DEFAULT_ROUTING.routes)
        unknown = DEFAULT_ROUTING.unknown_tld
        if "routes" in m:
            node = m["routes"][1]
            if not isinstance(node, yaml.MappingNode):
                r.fail(node, "routing.routes must map TLD to chain")
            for k, v in node.value:
                tld = r.scalar(k, str, "routing TLD")
                chain = r.scalar(v, str, f"routing.routes.{tld}")
                if chain is None:
                    routes.pop(tld.lower(), None)
                elif chain not in ("namecoin", "emercoin"):
                    r.fail(v, f"routing.routes.{tld}: unknown chain {chain!r}")
                else:
                    routes[tld.lower()] = chain
        if "unknown_tld" in m:
            node = m["unknown_tld"][1]
            value = r.scalar(node, str, "routing.unknown_tld")
            try:
                unknown = UnknownTld(value)
            except ValueError:
                r.fail(node, f"routing.unknown_tld must be one of {[u.value for u in UnknownTld]}")
        try:
            cfg.routing = RoutingTable(MappingProxyType(routes), unknown)
        except ValueError as exc:
            r.fail(top["routing"][1], str(exc))

    if "server" in top:
        m = r.mapping(top["server"][1], {"dns", "rest", "ttl", "formerr", "drain_timeout", "reload_interval"},
                      "server")
        s = cfg.server
        for key in ("dns", "rest"):
            if key in m:
                node = m[key][1]
                try:
                    setattr(s, key, parse_bind(r.scalar(node, str, f"server.{key}")))
                except ValueError as exc:
                    r.fail(node, f"server.{key}: {exc}")
        if "ttl" in m:
            s.ttl = r.positive(m["ttl"][1], int, "server.ttl", allow_zero=True)
        if "formerr" in m:
            s.formerr = r.scalar(m["formerr"][1], bool, "server.formerr")
        if "drain_timeout" in m:
            s.drain_timeout = r.positive(m["drain_timeout"][1], float, "server.drain_timeout")
        if "reload_interval" in m:
            s.reload_interval = r.positive(m["reload_interval"][1], float, "server.reload_interval", allow_zero=True)

    if "crawl" in top:
        m = r.mapping(top["crawl"][1], {"endpoint", "concurrency", "rate_limit", "timeout", "probe",
                                        "allow_external"}, "crawl")
        c = cfg.crawl
        if "endpoint" in m:
            c.endpoint = r.scalar(m["endpoint"][1], str, "crawl.endpoint")
        if "concurrency" in m:
            c.concurrency = r.positive(m["concurrency"][1], int, "crawl.concurrency")
        if "rate_limit" in m:
            c.rate_limit = r.positive(m["rate_limit"][1], float, "crawl.rate_limit")
        if "timeout" in m:
            c.timeout = r.positive(m["timeout"][1], float, "crawl.timeout")
        for key in ("probe", "allow_external"):
            if key in m:
                setattr(c, key, r.scalar(m[key][1], bool, f"crawl.{key}"))
    return cfg


def resolve_config(explicit: Optional[str]) -> Config:
    """Config from ``--config``, else ``$BLOCKDNS_CONFIG``, else defaults."""
    path = explicit or os.environ.get(ENV_CONFIG)
    return load_config(path) if path else Config()
