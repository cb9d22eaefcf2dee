"""Name-value storage parsing: names to FQDNs, values to DNS record sets.

Everything here is a pure function of its inputs. Raw names and values are
``bytes`` because chain data is not guaranteed to be valid UTF-8; text views
are produced with ``surrogateescape`` so no byte is ever lost.
"""

from __future__ import annotations

import ipaddress
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

NAMESPACE_NAMECOIN = "d"
NAMESPACE_EMERCOIN = "dns"
NAMESPACE_OTHER = "other"

_PREFIXES = {
    "namecoin": (b"d/", NAMESPACE_NAMECOIN),
    "emercoin": (b"dns:", NAMESPACE_EMERCOIN),
}


class InvalidName(ValueError):
    pass


def to_text(raw: bytes) -> str:
    return raw.decode("utf-8", "surrogateescape")


def to_bytes(text: str) -> bytes:
    return text.encode("utf-8", "surrogateescape")


def display(raw: bytes) -> str:
    """Printable rendering of raw bytes, for reports and logs."""
    return raw.decode("utf-8", "backslashreplace")


def _dedup(items: Iterable[str]) -> tuple[str, ...]:
    return tuple(dict.fromkeys(items))


@dataclass(frozen=True)
class DnsRecordSet:
    """Typed resolution data extracted from a name's value.

    ``extras`` keeps tokens the grammar does not recognise (sale notes,
    e-mail addresses, I2P links); ``warnings`` records dropped items.
    """

    a: tuple[str, ...] = ()
    aaaa: tuple[str, ...] = ()
    ns: tuple[str, ...] = ()
    txt: tuple[str, ...] = ()
    extras: tuple[str, ...] = ()
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @property
    def has_address(self) -> bool:
        return bool(self.a or self.aaaa)

    def is_empty(self) -> bool:
        return not (self.a or self.aaaa or self.ns or self.txt)

    def to_dict(self) -> dict:
        return {"a": list(self.a), "aaaa": list(self.aaaa), "ns": list(self.ns), "txt": list(self.txt)}


EMPTY_RECORDS = DnsRecordSet()


def name_to_fqdn(chain: str, raw_name: bytes) -> tuple[str, str]:
    """Map a chain name to ``(fqdn, namespace_tag)``.

    ``d/<sld>`` on Namecoin becomes ``<sld>.bit``; ``dns:<name>`` on Emercoin
    becomes ``<name>``. Anything else is tagged ``other`` and kept only for
    analytics. ASCII lowercasing is the only normalisation applied.
    """
    if not raw_name:
        raise InvalidName("empty name")
    prefix, tag = _PREFIXES.get(chain, (None, None))
    if prefix is not None and raw_name.startswith(prefix):
        rest = raw_name[len(prefix):]
        if not rest:
            raise InvalidName(f"empty SLD after {prefix.decode()!r}")
        folded = to_text(rest.lower())
        if tag == NAMESPACE_NAMECOIN:
            return f"{folded}.bit", tag
        return folded, tag
    return to_text(raw_name.lower()), NAMESPACE_OTHER


def strip_namespace(raw_name: bytes, chain: Optional[str] = None) -> bytes:
    """Drop the chain's DNS namespace prefix; without ``chain`` either prefix is dropped."""
    prefixes = [_PREFIXES[chain][0]] if chain in _PREFIXES else [p for p, _ in _PREFIXES.values()]
    for prefix in prefixes:
        if raw_name.startswith(prefix):
            return raw_name[len(prefix):]
    return raw_name


# --- value grammars -------------------------------------------------------


def _ipv4(item: str) -> Optional[str]:
    try:
        return str(ipaddress.IPv4Address(item))
    except ValueError:
        return None


def _ipv6(item: str) -> Optional[str]:
    try:
        return ipaddress.IPv6Address(item).compressed
    except ValueError:
        return None


def parse_emercoin_value(value: bytes) -> DnsRecordSet:
    """Parse an EmerDNS value of the form ``A=ip,ip|AAAA=ip6|NS=host|TXT=text``.

    Keys are matched case-insensitively. Unknown keys and tokens without
    ``=`` go to ``extras`` verbatim; invalid addresses are dropped one by
    one with a warning.
    """
    text = to_text(value)
    a: list[str] = []
    aaaa: list[str] = []
    ns: list[str] = []
    txt: list[str] = []
    extras: list[str] = []
    warnings: list[str] = []

    for token in text.split("|"):
        if not token.strip():
            continue
        key, sep, payload = token.partition("=")
        key = key.strip().upper()
        if not sep or key not in ("A", "AAAA", "NS", "TXT"):
            extras.append(token)
            continue
        for item in payload.split(","):
            item = item.strip()
            if not item:
                continue
            if key == "A":
                ip = _ipv4(item)
                if ip is None:
                    warnings.append(f"invalid A item {item[:64]!r}")
                else:
                    a.append(ip)
            elif key == "AAAA":
                ip = _ipv6(item)
                if ip is None:
                    warnings.append(f"invalid AAAA item {item[:64]!r}")
                else:
                    aaaa.append(ip)
            elif key == "NS":
                ns.append(item.lower())
            else:
                txt.append(item)

    if not (a or aaaa or ns or txt) and text.strip():
        warnings.append("no recognised records in value")
    return DnsRecordSet(_dedup(a), _dedup(aaaa), _dedup(ns), _dedup(txt), tuple(extras), tuple(warnings))


def serialize_emercoin_value(records: DnsRecordSet) -> bytes:
    """Inverse of :func:`parse_emercoin_value` for the recognised keys."""
    parts = []
    for key, items in (("A", records.a), ("AAAA", records.aaaa), ("NS", records.ns), ("TXT", records.txt)):
        if items:
            parts.append(f"{key}={','.join(items)}")
    return to_bytes("|".join(parts))


def _as_list(node) -> Optional[list]:
    if isinstance(node, str):
        return [node]
    if isinstance(node, list):
        return node
    return None


def _collect_ips(obj: dict, warnings: list[str], where: str) -> tuple[list[str], list[str]]:
    a: list[str] = []
    aaaa: list[str] = []
    for key, parse, out in (("ip", _ipv4, a), ("ip6", _ipv6, aaaa)):
        if key not in obj:
            continue
        items = _as_list(obj[key])
        if items is None:
            warnings.append(f"{where}{key}: expected string or list")
            continue
        for item in items:
            ip = parse(item) if isinstance(item, str) else None
            if ip is None:
                warnings.append(f"{where}{key}: invalid item {str(item)[:64]!r}")
            else:
                out.append(ip)
    return a, aaaa


def _load_namecoin_object(value: bytes, warnings: list[str]) -> Optional[dict]:
    try:
        obj = json.loads(value.decode("utf-8"))
    except (UnicodeDecodeError, ValueError, RecursionError):
        warnings.append("value is not a JSON object")
        return None
    if not isinstance(obj, dict):
        warnings.append("value is not a JSON object")
        return None
    return obj


def _parse_namecoin(value: bytes) -> tuple[DnsRecordSet, dict[str, DnsRecordSet]]:
    warnings: list[str] = []
    obj = _load_namecoin_object(value, warnings)
    if obj is None:
        return DnsRecordSet(warnings=tuple(warnings)), {}

    a, aaaa = _collect_ips(obj, warnings, "")
    ns: list[str] = []
    if "ns" in obj:
        items = _as_list(obj["ns"])
        if items is None:
            warnings.append("ns: expected string or list")
        else:
            ns = [item.strip().lower() for item in items if isinstance(item, str) and item.strip()]
    extras: list[str] = []
    if isinstance(obj.get("alias"), str):
        extras.append(f"alias={obj['alias']}")

    subs: dict[str, DnsRecordSet] = {}
    mapping = obj.get("map")
    if mapping is not None and not isinstance(mapping, dict):
        warnings.append("map: expected object")
        mapping = None
    for label, entry in (mapping or {}).items():
        if isinstance(entry, str):
            entry = {"ip": entry}
        if not isinstance(entry, dict):
            warnings.append(f"map.{label[:32]}: expected object")
            continue
        sub_a, sub_aaaa = _collect_ips(entry, warnings, f"map.{label[:32]}.")
        if label == "":
            # the empty sublabel addresses the name itself
            a.extend(sub_a)
            aaaa.extend(sub_aaaa)
        else:
            subs[label.lower()] = DnsRecordSet(_dedup(sub_a), _dedup(sub_aaaa))

    top = DnsRecordSet(_dedup(a), _dedup(aaaa), _dedup(ns), (), tuple(extras), tuple(warnings))
    return top, subs


def parse_namecoin_value(value: bytes) -> DnsRecordSet:
    """Parse a Namecoin ``d/`` JSON value (keys ``ip``, ``ip6``, ``ns``, ``alias``, ``map``)."""
    return _parse_namecoin(value)[0]


def namecoin_subdomains(value: bytes) -> dict[str, DnsRecordSet]:
    """Record sets for the sublabels listed in a Namecoin value's ``map``."""
    return _parse_namecoin(value)[1]


def parse_value(chain: str, value: bytes) -> DnsRecordSet:
    if chain == "namecoin":
        return parse_namecoin_value(value)
    return parse_emercoin_value(value)


# --- lexical features -----------------------------------------------------


def load_tld_list(path: Optional[Path] = None) -> frozenset[str]:
    """Read a TLD list file (one suffix per line, ``#`` comments)."""
    if path is None:
        text = resources.files("blockdns").joinpath("data/tlds.txt").read_text()
    else:
        text = Path(path).read_text()
    tlds = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip().lower().strip(".")
        if line:
            tlds.add(line)
    return frozenset(tlds)


@dataclass(frozen=True)
class LexicalProfile:
    length: int
    has_capitals: bool
    has_whitespace: bool
    is_punycode: bool
    embedded_tld: Optional[str]
    shannon_entropy: float


def shannon_entropy(data: bytes) -> float:
    if not data:
        return 0.0
    n = len(data)
    h = -sum(c / n * math.log2(c / n) for c in Counter(data).values())
    return max(h, 0.0)


def sld_of(raw_name: bytes, chain: Optional[str] = None) -> bytes:
    """The registered label: the label left of the final one, or the whole name."""
    labels = strip_namespace(raw_name, chain).split(b".")
    if len(labels) >= 2:
        return labels[-2]
    return labels[0]


def lexical_profile(raw_name: bytes, known_tlds: frozenset[str] | set[str],
                    chain: Optional[str] = None) -> LexicalProfile:
    """Anomaly flags for a raw name, computed before any case folding.

    With ``chain`` only that chain's namespace prefix is stripped.
    """
    stripped = strip_namespace(raw_name, chain)
    text = to_text(stripped)
    sld = sld_of(raw_name, chain)
    labels = text.split(".")
    embedded = None
    if len(labels) >= 2 and labels[-1].lower() in known_tlds:
        embedded = labels[-1].lower()
    return LexicalProfile(
        length=len(to_text(sld)),
        has_capitals=any(c.isupper() for c in text),
        has_whitespace=any(c.isspace() for c in text),
        is_punycode=any(label[:4].lower() == "xn--" for label in labels),
        embedded_tld=embedded,
        shannon_entropy=shannon_entropy(sld),
    )


# --- sale offers ----------------------------------------------------------

_FOR_SALE = re.compile(rb"for sale", re.IGNORECASE)
_DOLLAR_AMOUNT = re.compile(rb"\$\d|\d\$")


@dataclass(frozen=True)
class SaleMatch:
    strict: bool
    loose: bool
    markers: tuple[tuple[str, str], ...]

    def __bool__(self) -> bool:
        return self.strict


def _excerpt(value: bytes, start: int, end: int, pad: int = 24) -> str:
    return display(value[max(0, start - pad):end + pad])


def is_sale_offer(record) -> SaleMatch:
    """Detect sale advertisements in a record's value (or raw value bytes).

    Strict: case-insensitive ``for sale`` or a ``$`` touching a digit.
    Loose additionally accepts any ``$``.
    """
    value = record if isinstance(record, (bytes, bytearray)) else record.value
    markers = []
    m = _FOR_SALE.search(value)
    if m:
        markers.append(("for-sale", _excerpt(value, m.start(), m.end())))
    m = _DOLLAR_AMOUNT.search(value)
    if m:
        markers.append(("dollar-amount", _excerpt(value, m.start(), m.end())))
    strict = bool(markers)
    loose = strict
    if not strict:
        pos = value.find(b"$")
        if pos >= 0:
            markers.append(("dollar-sign", _excerpt(value, pos, pos + 1)))
            loose = True
    return SaleMatch(strict, loose, tuple(markers))
