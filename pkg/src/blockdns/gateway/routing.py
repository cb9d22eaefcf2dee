"""TLD routing and name resolution against the chain name database."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from types import MappingProxyType
from typing import Mapping, Optional

from ..ingest import Chain
from ..namedb import NameDbView, NameRecord
from ..nvs import NAMESPACE_OTHER, DnsRecordSet, to_bytes

DEFAULT_ROUTES = {
    "bit": Chain.NAMECOIN.value,
    "coin": Chain.EMERCOIN.value,
    "emc": Chain.EMERCOIN.value,
    "lib": Chain.EMERCOIN.value,
    "bazar": Chain.EMERCOIN.value,
}


class QType(IntEnum):
    A = 1
    AAAA = 28
    ANY = 255


class UnknownTld(str, Enum):
    NXDOMAIN = "nxdomain"
    REFUSE = "refuse"


class Status(str, Enum):
    OK = "ok"
    NXDOMAIN = "nxdomain"
    UNSUPPORTED_TLD = "unsupported_tld"
    NO_ADDRESS_DATA = "no_address_data"


class GatewayUnavailable(RuntimeError):
    """The name database cannot be read; distinct from a negative answer."""


@dataclass(frozen=True)
class RoutingTable:
    routes: Mapping[str, str] = field(default_factory=lambda: MappingProxyType(dict(DEFAULT_ROUTES)))
    unknown_tld: UnknownTld = UnknownTld.NXDOMAIN

    def __post_init__(self):
        chains = {c.value for c in Chain}
        for tld, chain in self.routes.items():
            if chain not in chains:
                raise ValueError(f"route {tld!r} -> {chain!r}: unknown chain backend")
            if tld != tld.lower() or "." in tld or not tld:
                raise ValueError(f"route key {tld!r} must be a single lowercase label")

    def with_overrides(self, overrides: Mapping[str, Optional[str]], unknown_tld: Optional[UnknownTld] = None) -> "RoutingTable":
        """New table with ``overrides`` applied; a ``None`` target removes a TLD."""
        routes = dict(self.routes)
        for tld, chain in overrides.items():
            if chain is None:
                routes.pop(tld, None)
            else:
                routes[tld] = chain
        return RoutingTable(MappingProxyType(routes), unknown_tld or self.unknown_tld)


DEFAULT_ROUTING = RoutingTable()


def route_tld(fqdn: str, routing: RoutingTable = DEFAULT_ROUTING) -> Optional[str]:
    """Chain backend for ``fqdn``'s final label, or ``None`` when unsupported."""
    name = fqdn[:-1] if fqdn.endswith(".") else fqdn
    if "." not in name:
        return None
    return routing.routes.get(name.rsplit(".", 1)[1])


@dataclass(frozen=True)
class ResolutionResult:
    status: Status
    answers: DnsRecordSet = DnsRecordSet()
    collision: bool = False
    source: Optional[tuple[str, bytes, int]] = None

    def to_dict(self) -> dict:
        src = None
        if self.source is not None:
            chain, raw, height = self.source
            src = {"chain": chain, "raw_name": raw.decode("utf-8", "backslashreplace"), "height": height}
        return {"status": self.status.value, "answers": self.answers.to_dict(),
                "collision": self.collision, "source": src}


def _answers(records: DnsRecordSet, qtype: QType) -> DnsRecordSet:
    if qtype is QType.A:
        return DnsRecordSet(a=records.a)
    if qtype is QType.AAAA:
        return DnsRecordSet(aaaa=records.aaaa)
    return DnsRecordSet(records.a, records.aaaa, records.ns, records.txt)


def _served(record: NameRecord, qtype: QType, collision: bool) -> ResolutionResult:
    answers = _answers(record.records, qtype)
    status = Status.NO_ADDRESS_DATA if answers.is_empty() else Status.OK
    return ResolutionResult(status, answers, collision, (record.chain, record.raw_name, record.registered_height))


def _check(db: Optional[NameDbView]) -> NameDbView:
    if db is None:
        raise GatewayUnavailable("no name database loaded")
    return db


def resolve(fqdn: str, qtype: QType, db: Optional[NameDbView], at_height: Optional[int] = None,
            routing: RoutingTable = DEFAULT_ROUTING) -> ResolutionResult:
    """Resolve a lowercase FQDN; under a case/whitespace collision the earliest registration is served."""
    chain = route_tld(fqdn, routing)
    if chain is None:
        return ResolutionResult(Status.UNSUPPORTED_TLD)
    db = _check(db)
    name = fqdn[:-1] if fqdn.endswith(".") else fqdn
    matches = [r for r in db.lookup_fqdn(name, at_height) if r.chain == chain and r.namespace != NAMESPACE_OTHER]
    if not matches:
        return ResolutionResult(Status.NXDOMAIN)
    return _served(matches[0], qtype, len(matches) > 1)


def exact_raw_name(name: str, routing: RoutingTable = DEFAULT_ROUTING) -> tuple[str, bytes]:
    """Chain and raw name addressed by a case-preserved dotted name.

    Routed TLDs map to their chain's namespace; any other TLD is looked up
    in the Emercoin ``dns:`` namespace, the only one that admits foreign TLDs.
    """
    name = name[:-1] if name.endswith(".") else name
    chain = route_tld(name.lower(), routing)
    if chain == Chain.NAMECOIN.value:
        return chain, b"d/" + to_bytes(name.rsplit(".", 1)[0])
    return Chain.EMERCOIN.value, b"dns:" + to_bytes(name)


def resolve_exact(name: str, qtype: QType, db: Optional[NameDbView], at_height: Optional[int] = None,
                  routing: RoutingTable = DEFAULT_ROUTING) -> ResolutionResult:
    """Byte-exact lookup with no case folding; reaches case-variant chain entries."""
    db = _check(db)
    chain, raw = exact_raw_name(name, routing)
    if chain == Chain.NAMECOIN.value and raw == b"d/":
        return ResolutionResult(Status.NXDOMAIN)
    record = db.lookup_exact(chain, raw, at_height)
    if record is None:
        return ResolutionResult(Status.NXDOMAIN)
    return _served(record, qtype, False)
