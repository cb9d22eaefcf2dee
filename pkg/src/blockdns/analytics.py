"""Measurement battery over a name database snapshot.

Each operation takes an iterable of :class:`~blockdns.namedb.NameRecord` and
returns plain counts, so results can be compared against independent
counting scripts. :func:`build_report` assembles them into a
:class:`StatsReport`; :func:`write_report` emits JSON, aligned text, CSV and a
manifest. Output is a pure function of the records and configuration.
"""

from __future__ import annotations

import csv
import io
import ipaddress
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .namedb import NameRecord
from .nvs import NAMESPACE_OTHER, display, is_sale_offer, lexical_profile
from .timeutil import month_bucket

UNMAPPED_COUNTRY = "??"
LEXICAL_CLASSES = ("embedded_com", "punycode", "capitals", "whitespace")


def ranked(counts: dict, k: Optional[int] = None) -> list[tuple]:
    """Entries sorted by count descending, then key ascending."""
    items = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return items if k is None else items[:k]


# --- geo table ------------------------------------------------------------


class GeoTable:
    """CIDR -> country map with longest-prefix lookup."""

    def __init__(self, entries: Iterable[tuple[str, str]] = ()):
        self._nets: dict[tuple[int, int], dict[int, str]] = defaultdict(dict)
        for cidr, country in entries:
            self.add(cidr, country)

    def add(self, cidr: str, country: str) -> None:
        net = ipaddress.ip_network(cidr.strip(), strict=False)
        self._nets[(net.version, net.prefixlen)][int(net.network_address)] = country.strip().upper()

    @classmethod
    def from_csv(cls, source: str | Path | Iterable[str]) -> "GeoTable":
        """Parse ``cidr,country`` lines; a header row and ``#`` comments are skipped."""
        if isinstance(source, (str, Path)):
            lines = Path(source).read_text().splitlines()
        else:
            lines = list(source)
        table = cls()
        for lineno, row in enumerate(csv.reader(line for line in lines), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if lineno == 1 and row[0].strip().lower() == "cidr":
                continue
            if len(row) < 2:
                raise ValueError(f"geo table line {lineno}: expected 'cidr,country'")
            try:
                table.add(row[0], row[1])
            except ValueError as exc:
                raise ValueError(f"geo table line {lineno}: {exc}") from None
        return table

    def lookup(self, ip: str) -> Optional[str]:
        try:
            addr = ipaddress.ip_address(ip)
        except ValueError:
            return None
        width = addr.max_prefixlen
        value = int(addr)
        for version, plen in sorted((k for k in self._nets if k[0] == addr.version), key=lambda k: -k[1]):
            masked = value >> (width - plen) << (width - plen) if plen else 0
            country = self._nets[(version, plen)].get(masked)
            if country is not None:
                return country
        return None


# --- operations -----------------------------------------------------------


def _resolvable(records: Iterable[NameRecord]) -> Iterable[NameRecord]:
    return (r for r in records if r.namespace != NAMESPACE_OTHER)


def sld_length(record: NameRecord) -> int:
    return lexical_profile(record.raw_name, frozenset(), record.chain).length


def length_distribution(records: Iterable[NameRecord], active_only: bool = False) -> dict[int, int]:
    """SLD length (characters, before case folding) -> number of names."""
    counts = Counter(sld_length(r) for r in records if r.active or not active_only)
    return dict(sorted(counts.items()))


def final_label(fqdn: str) -> str:
    return fqdn.rsplit(".", 1)[-1]


def tld_distribution(records: Iterable[NameRecord]) -> dict[str, int]:
    """Final label of each name that resolves to at least one address, counted verbatim."""
    counts = Counter(final_label(r.fqdn) for r in _resolvable(records) if r.records.has_address)
    return dict(ranked(counts))


def top_registrants(records: Iterable[NameRecord], k: int = 10) -> list[tuple[str, int]]:
    return ranked(Counter(r.owner for r in records), k)


def ip_concentration(records: Iterable[NameRecord], k: Optional[int] = 15) -> list[tuple[str, int]]:
    """Names per A-record address; a name with several addresses counts toward each."""
    counts: Counter = Counter()
    for r in _resolvable(records):
        for ip in r.records.a:
            counts[ip] += 1
    return ranked(counts, k)


def lexical_anomaly_report(records: Iterable[NameRecord], known_tlds: frozenset[str]) -> dict[str, int]:
    """Names firing each anomaly class; classes overlap."""
    counts = dict.fromkeys(LEXICAL_CLASSES, 0)
    for r in records:
        p = lexical_profile(r.raw_name, known_tlds, r.chain)
        counts["embedded_com"] += p.embedded_tld == "com"
        counts["punycode"] += p.is_punycode
        counts["capitals"] += p.has_capitals
        counts["whitespace"] += p.has_whitespace
    return counts


@dataclass
class SaleReport:
    strict: int = 0
    loose: int = 0
    markers: dict[str, int] = field(default_factory=dict)
    listing: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"strict": self.strict, "loose": self.loose, "markers": self.markers, "listing": self.listing}


def sale_offers(records: Iterable[NameRecord]) -> SaleReport:
    report = SaleReport()
    markers: Counter = Counter()
    for r in records:
        m = is_sale_offer(r.value)
        if not m.loose:
            continue
        report.loose += 1
        report.strict += m.strict
        markers.update(rule for rule, _ in m.markers)
        report.listing.append({
            "chain": r.chain,
            "name": display(r.raw_name),
            "strict": m.strict,
            "markers": [{"rule": rule, "excerpt": ex} for rule, ex in m.markers],
        })
    report.markers = dict(sorted(markers.items()))
    report.listing.sort(key=lambda e: (not e["strict"], e["chain"], e["name"]))
    return report


def split_domain(domain: str, suffixes: frozenset[str]) -> Optional[tuple[str, str]]:
    """``(sld, suffix)`` by longest known suffix; unknown suffixes fall back to the final label."""
    labels = domain.lower().strip(".").split(".")
    if len(labels) < 2:
        return None
    for i in range(1, len(labels)):
        suffix = ".".join(labels[i:])
        if suffix in suffixes:
            return labels[i - 1], suffix
    return labels[-2], labels[-1]


@dataclass
class AlexaReport:
    matches: int = 0
    unique_slds: int = 0
    listing: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"matches": self.matches, "unique_slds": self.unique_slds, "listing": self.listing}


def load_domain_list(path: str | Path) -> list[str]:
    out = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        # accept "rank,domain" rows as published in top-site lists
        out.append(line.rsplit(",", 1)[-1].strip())
    return out


def alexa_correlation(records: Iterable[NameRecord], alexa_list: Sequence[str],
                      known_tlds: frozenset[str]) -> AlexaReport:
    """Chain names whose SLD equals the SLD of a listed domain, grouped by SLD."""
    targets = set()
    for domain in alexa_list:
        split = split_domain(domain, known_tlds)
        if split:
            targets.add(split[0])
    variants: dict[str, list[str]] = defaultdict(list)
    for r in _resolvable(records):
        split = split_domain(r.fqdn, known_tlds)
        if split and split[0] in targets:
            variants[split[0]].append(split[1])
    report = AlexaReport(sum(len(v) for v in variants.values()), len(variants))
    for sld, count in ranked({s: len(v) for s, v in variants.items()}):
        report.listing.append({"sld": sld, "count": count, "tlds": sorted(variants[sld])})
    return report


def registration_timeline(records: Iterable[NameRecord], known_tlds: Optional[frozenset[str]] = None,
                          com_only: bool = False) -> dict[str, int]:
    """Registrations per UTC calendar month; re-registrations count again.

    With ``com_only`` only names carrying an embedded ``.com`` are counted.
    """
    counts: Counter = Counter()
    for r in records:
        if com_only and lexical_profile(r.raw_name, known_tlds or frozenset(), r.chain).embedded_tld != "com":
            continue
        for e in r.history:
            if e.op.value == "register":
                counts[month_bucket(e.time)] += 1
    return dict(sorted(counts.items()))


def resolved_ips(records: Iterable[NameRecord]) -> list[str]:
    """Every (name, A address) pair as a flat list; one entry per resolution."""
    return [ip for r in _resolvable(records) for ip in r.records.a]


def country_distribution(ips: Iterable[str], geo: GeoTable) -> dict[str, int]:
    counts = Counter(geo.lookup(ip) or UNMAPPED_COUNTRY for ip in ips)
    return dict(ranked(counts))


# --- report ---------------------------------------------------------------


@dataclass
class StatsReport:
    record_count: int
    length_histogram: dict[int, int]
    tld_counts: dict[str, int]
    top_registrants: list[tuple[str, int]]
    ip_counts: list[tuple[str, int]]
    lexical_counts: dict[str, int]
    sale_offers: SaleReport
    alexa_matches: Optional[AlexaReport]
    timeline: dict[str, int]
    timeline_com: dict[str, int]
    country_counts: Optional[dict[str, dict[str, int]]]
    policy_echo: dict
    chains: dict[str, "StatsReport"] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "record_count": self.record_count,
            "length_histogram": {str(k): v for k, v in self.length_histogram.items()},
            "tld_counts": self.tld_counts,
            "top_registrants": [list(x) for x in self.top_registrants],
            "ip_counts": [list(x) for x in self.ip_counts],
            "lexical_counts": self.lexical_counts,
            "sale_offers": self.sale_offers.to_dict(),
            "alexa_matches": self.alexa_matches.to_dict() if self.alexa_matches else None,
            "timeline": self.timeline,
            "timeline_com": self.timeline_com,
            "country_counts": self.country_counts,
            "policy_echo": self.policy_echo,
        }
        if self.chains:
            out["chains"] = {c: r.to_dict() for c, r in sorted(self.chains.items())}
        return out


def build_report(records: Iterable[NameRecord], known_tlds: frozenset[str], *,
                 alexa: Optional[Sequence[str]] = None, geo: Optional[GeoTable] = None,
                 policy_echo: Optional[dict] = None, top_k: int = 10, ip_top_k: int = 15,
                 per_chain: bool = True) -> StatsReport:
    records = list(records)
    country = None
    if geo is not None:
        ips = resolved_ips(records)
        country = {
            "per_resolution": country_distribution(ips, geo),
            "per_unique_ip": country_distribution(sorted(set(ips)), geo),
        }
    report = StatsReport(
        record_count=len(records),
        length_histogram=length_distribution(records),
        tld_counts=tld_distribution(records),
        top_registrants=top_registrants(records, top_k),
        ip_counts=ip_concentration(records, ip_top_k),
        lexical_counts=lexical_anomaly_report(records, known_tlds),
        sale_offers=sale_offers(records),
        alexa_matches=alexa_correlation(records, alexa, known_tlds) if alexa is not None else None,
        timeline=registration_timeline(records),
        timeline_com=registration_timeline(records, known_tlds, com_only=True),
        country_counts=country,
        policy_echo=dict(policy_echo or {}),
    )
    if per_chain:
        for chain in sorted({r.chain for r in records}):
            report.chains[chain] = build_report(
                [r for r in records if r.chain == chain], known_tlds, alexa=alexa, geo=geo,
                policy_echo=policy_echo, top_k=top_k, ip_top_k=ip_top_k, per_chain=False)
    return report


def _table(title: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    rows = [[str(c) for c in row] for row in rows]
    widths = [max([len(h)] + [len(r[i]) for r in rows]) for i, h in enumerate(header)]
    fmt = lambda row: "  ".join(c.rjust(w) if c.lstrip("-").isdigit() else c.ljust(w)
                               for c, w in zip(row, widths)).rstrip()
    lines = [title, fmt(header), fmt(["-" * w for w in widths])]
    lines += [fmt(r) for r in rows] or ["(none)"]
    return "\n".join(lines) + "\n"


def render_text(report: StatsReport, scope: str = "all chains") -> str:
    parts = [f"== {scope}: {report.record_count} records ==\n"]
    parts.append(_table("Lexical anomalies", ["class", "names"], report.lexical_counts.items()))
    parts.append(_table("Top registrants", ["address", "names"], report.top_registrants))
    parts.append(_table("TLDs resolving to an address", ["tld", "names"],
                        [(repr(t) if t != t.strip() or not t else t, n) for t, n in report.tld_counts.items()]))
    parts.append(_table("Top addresses", ["ip", "names"], report.ip_counts))
    s = report.sale_offers
    parts.append(_table("Sale offers", ["rule", "names"],
                        [("strict total", s.strict), ("loose total", s.loose)] + list(s.markers.items())))
    if report.alexa_matches is not None:
        a = report.alexa_matches
        parts.append(_table(f"Top-list correlation: {a.matches} names, {a.unique_slds} SLDs",
                            ["sld", "names", "tlds"], [(e["sld"], e["count"], ",".join(e["tlds"]))
                                                       for e in a.listing[:20]]))
    if report.country_counts is not None:
        for unit, counts in report.country_counts.items():
            parts.append(_table(f"Countries ({unit.replace('_', ' ')})", ["country", "count"], counts.items()))
    parts.append(_table("SLD length", ["length", "names"], report.length_histogram.items()))
    for chain, sub in sorted(report.chains.items()):
        parts.append(render_text(sub, chain))
    if report.policy_echo and scope == "all chains":
        parts.append("policy: " + json.dumps(report.policy_echo, sort_keys=True) + "\n")
    return "\n".join(parts)


def _csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_report(report: StatsReport, outdir: str | Path) -> dict:
    """Write every table of ``report`` under ``outdir`` and return the manifest."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "report.json": json.dumps(report.to_dict(), indent=2, sort_keys=True, ensure_ascii=True) + "\n",
        "report.txt": render_text(report),
        "length.csv": _csv(["length", "names"], report.length_histogram.items()),
        "timeline.csv": _csv(["month", "registrations"], report.timeline.items()),
        "timeline_com.csv": _csv(["month", "registrations"], report.timeline_com.items()),
    }
    for chain, sub in sorted(report.chains.items()):
        files[f"length_{chain}.csv"] = _csv(["length", "names"], sub.length_histogram.items())
        files[f"timeline_{chain}.csv"] = _csv(["month", "registrations"], sub.timeline.items())
    tables = {
        "lexical_counts": "report.json", "top_registrants": "report.json", "tld_counts": "report.json",
        "ip_counts": "report.json", "sale_offers": "report.json", "alexa_matches": "report.json",
        "country_counts": "report.json", "length_histogram": "length.csv", "timeline": "timeline.csv",
        "timeline_com": "timeline_com.csv",
    }
    manifest = {"files": sorted(files) + ["manifest.json"], "tables": tables, "config": report.policy_echo}
    files["manifest.json"] = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    for name, text in files.items():
        (out / name).write_text(text)
    return manifest
