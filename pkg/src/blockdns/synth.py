"""Deterministic synthetic name-operation dumps.

Live chain snapshots are large and not redistributable, so these
generators build dumps with a known shape: ``measurement_shape`` seeds
registrant, TLD, address and lexical magnitudes observed on Namecoin and
Emercoin, ``crawl_world`` rebuilds the top-site x
TLD sweep, and ``random_dump`` produces arbitrary-size corpora for
cross-checking analytics against counting oracles.
"""

from __future__ import annotations

import hashlib
import ipaddress
import json
import random
from dataclasses import dataclass, field
from typing import Optional

from .ingest import Chain, NameOperation, Op, format_dump_line

BASE58 = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"
T2014 = 1388534400  # 2014-01-01T00:00:00Z
T2019_10 = 1569888000  # 2019-10-01T00:00:00Z

NAMECOIN_TOP = [
    ("MyZTAGS74akZBiqYPKuvD3zGCfL8tGmXpz", 3754),
    ("MwyGuUCawVzCcCSoNJpWjN1Kcioq7TNM92", 2213),
    ("N256bGgH4E84P8fcEcLs4m1YCXYZb6nzAm", 1690),
    ("MwkmRsY2kVjgXp2x4j9LY9fwtvXdMSaLjj", 64),
    ("NJ6HHqGu9mmW25XgyGoj7V6hPoCSkQLnQ6", 64),
    ("N8sV3CJsQo83GRKw5qyBECCiFwvp1XQ2Nu", 16),
    ("NBHBXLtbRLFqHRmgTufzL1aZ3ztqHyLmXH", 16),
    ("MzB1bm2QDmqpmAKeaRPev4QxAxTWj1kZRi", 14),
    ("NEm1R3yMmvGckDCa9Tt9XY8Yor3tEVfReb", 14),
    ("NKesEinH7phBMdu3XT5KTw5eQtRoXnxhT6", 10),
]

EMERCOIN_TOP = [
    ("ETkxi1X1CeX2QDSWp3CDmuDj7jJZtftfNF", 3565),
    ("EKzDF4RAHat8tWdQGbvR9zm7PJrHcth7Rm", 2688),
    ("EQADxQhroZwGnQAyirFtNbwwjoykciFqv3", 253),
    ("EYBExDLR3aqZunRj6NuyRC9TXt8NHKKXWZ", 196),
    ("ENnpjY8YQr5rvKNc1TY6kkBwsDZXwmEiY2", 150),
    ("EWwX61CW9TorzZ7Dy1dmnfKYPxz7dBMGxJ", 137),
    ("EaQkdxCMPVzMXtTFqYaQxV7wQ1qqLy8aXF", 58),
    ("ELRNsgvTbV83MyPdD5ACf1xyemLFV7Sued", 53),
    ("ESCWovPDaX55KCpX3bdkKWqbH4zBEiwNrd", 47),
    ("EZKCa2ELZpPoNPFQrsHQXszFLrPEf9Q5vJ", 44),
]

# TLDs of names resolving to an address, both chains. "coin " (trailing
# space) stands in for the second, visually identical "coin" row.
TLD_TABLE = [
    ("coin", 1261), ("bit", 1045), ("lib", 1017), ("bazar", 998), ("emc", 861), ("i2p", 19),
    ("neo", 14), ("com", 8), ("onion", 3), ("cn", 3), ("coin ", 2), ("eth", 2), ("enc", 1),
    ("org", 1), ("$", 1), ("oz", 1), ("*", 1), ("bbs", 1), ("news", 1), ("ua", 1),
    ("luxsocks", 1), ("mayun", 1), ("years", 1), ("pi", 1), ("aaatttaaa", 1), ("io", 1),
    ("liib", 1), ("linux", 1), ("net", 1), ("ln", 1), ("in", 1), ("9988", 1), ("kib", 1),
    ("fashion", 1), ("woshiwo321", 1), ("name", 1), ("www", 1), ("cion", 1), ("mec", 1),
    ("su", 1), ("biz", 1), ("1010", 1),
]

IP_TABLE = [
    ("192.243.100.192", 1957), ("144.76.12.6", 448), ("202.108.22.5", 402), ("192.227.233.13", 340),
    ("178.128.220.134", 144), ("185.31.209.8", 88), ("178.32.148.152", 67), ("92.63.101.1", 53),
    ("78.107.255.15", 53), ("192.241.241.153", 45), ("202.108.8.82", 45), ("81.2.247.158", 45),
    ("94.242.60.7", 37), ("185.61.138.167", 32), ("46.29.251.130", 29),
]

LEXICAL_TABLE = {"embedded_com": 44, "punycode": 1261, "capitals": 316, "whitespace": 35}

SALE_FOR_SALE = 567
SALE_FOR_SALE_WITH_PRICE = 60
SALE_PRICE_ONLY = 64
SALE_BARE_DOLLAR = 7

ALEXA_MATCHES = 1045
ALEXA_UNIQUE = 328

# Extreme Emercoin registrations: (height, time, days) reaching years 5014 and 12012.
LONG_LEASES = [(200590, 1464739200, 1_095_000), (380209, 1547510400, 3_650_000)]

COUNTRY_TABLE = [
    ("DE", 238), ("US", 146), ("CN", 20), ("FR", 12), ("RU", 9), ("CA", 5), ("SG", 3), ("GB", 2),
    ("NL", 2), ("SC", 2), ("AT", 1), ("HK", 1), ("IT", 1), ("SE", 1), ("TW", 1),
]

CRAWL_TLDS = [
    "bit", "coin", "emc", "lib", "bazar",
    "bbs", "chan", "cyb", "dyn", "epic", "geek", "gopher", "indy", "libre", "neo",
    "null", "o", "oss", "oz", "parody", "pirate", "free", "fur", "ku", "te",
]


def txid_for(*parts) -> str:
    return hashlib.sha256("\x1f".join(map(str, parts)).encode()).hexdigest()


def address(rng: random.Random, prefix: str) -> str:
    return prefix + "".join(rng.choice(BASE58) for _ in range(33))


@dataclass
class DumpBuilder:
    """Accumulates operations with unique txids and monotone per-chain heights."""

    ops: list[NameOperation] = field(default_factory=list)
    heights: dict = field(default_factory=lambda: {Chain.NAMECOIN: 400_000, Chain.EMERCOIN: 100_000})

    def add(self, chain: Chain, op: Op, name: bytes, value: bytes, owner: str, time: int,
            expiry_days: Optional[int] = None, height: Optional[int] = None) -> NameOperation:
        if height is None:
            self.heights[chain] += 1
            height = self.heights[chain]
        o = NameOperation(chain, op, name, value, owner, height, time,
                          txid_for(chain.value, len(self.ops), name, height), expiry_days)
        self.ops.append(o)
        return o

    def lines(self) -> list[str]:
        return [format_dump_line(o) for o in self.ops]


def _namecoin_value(ips: list[str]) -> bytes:
    if not ips:
        return b"{}"
    return json.dumps({"ip": ips[0] if len(ips) == 1 else ips}).encode()


def _emercoin_value(ips: list[str], txt: str = "") -> bytes:
    parts = []
    if ips:
        parts.append("A=" + ",".join(ips))
    if txt:
        parts.append("TXT=" + txt)
    return "|".join(parts).encode()


def _filler_ips(n: int) -> list[str]:
    base = int(ipaddress.IPv4Address("45.0.0.1"))
    return [str(ipaddress.IPv4Address(base + 256 * i)) for i in range(n)]


def measurement_shape(seed: int = 2019) -> DumpBuilder:
    """Dump whose analytics reproduce the observed top-N magnitudes exactly."""
    rng = random.Random(seed)
    b = DumpBuilder()
    span = T2019_10 - T2014

    def when() -> int:
        return T2014 + rng.randrange(span)

    small_owner_serial = iter(range(10**9))

    def small_owner(prefix: str) -> str:
        # deterministic small holders; each owns at most three names
        n = next(small_owner_serial)
        return address(random.Random(f"{seed}-{prefix}-{n // 3}"), prefix)

    # resolving names: fixed TLD table, addresses drawn from the top-15 table + unique fillers
    resolving_total = sum(n for _, n in TLD_TABLE)
    top_slots = [ip for ip, n in IP_TABLE for _ in range(n)]
    pool = top_slots + _filler_ips(resolving_total - len(top_slots))
    rng.shuffle(pool)
    ip_iter = iter(pool)

    for tld, count in TLD_TABLE:
        for i in range(count):
            ip = next(ip_iter)
            t = when()
            if tld == "bit":
                b.add(Chain.NAMECOIN, Op.REGISTER, f"d/res{i}".encode(), _namecoin_value([ip]),
                      small_owner("N"), t)
            else:
                label = f"res{i}" if tld != "com" else f"brandish{i}"
                b.add(Chain.EMERCOIN, Op.REGISTER, f"dns:{label}.{tld}".encode(), _emercoin_value([ip]),
                      small_owner("E"), t, expiry_days=rng.choice([365, 730, 3650]))

    # whales: large non-resolving portfolios
    words = ["sex", "porn", "stream", "hack", "bank", "shop", "casino", "crypto"]
    for w, (owner, count) in enumerate(NAMECOIN_TOP):
        for i in range(count):
            b.add(Chain.NAMECOIN, Op.REGISTER, f"d/{words[i % len(words)]}{w}x{i}".encode(), b"{}", owner, when())
    emer_tlds = ["coin", "emc", "lib", "bazar"]
    for w, (owner, count) in enumerate(EMERCOIN_TOP):
        for i in range(count):
            b.add(Chain.EMERCOIN, Op.REGISTER, f"dns:{words[i % len(words)]}{w}y{i}.{emer_tlds[i % 4]}".encode(),
                  b"TXT=parked", owner, when(), expiry_days=3650)

    # lexical anomalies (Emercoin). Resolving ".com" and "coin " names above already
    # contribute 8 embedded .com names and 2 whitespace names.
    for i in range(LEXICAL_TABLE["embedded_com"] - 8):
        b.add(Chain.EMERCOIN, Op.REGISTER, f"dns:lookalike{i}.com".encode(), b"TXT=mirror", small_owner("E"), when())
    for i in range(LEXICAL_TABLE["punycode"]):
        b.add(Chain.EMERCOIN, Op.REGISTER, f"dns:xn--80a{i}b.coin".encode(), b"TXT=idn", small_owner("E"), when())
    for i in range(LEXICAL_TABLE["capitals"]):
        b.add(Chain.EMERCOIN, Op.REGISTER, f"dns:Cap{i}Site.coin".encode(), b"TXT=caps", small_owner("E"), when())
    for i in range(LEXICAL_TABLE["whitespace"] - 2):
        b.add(Chain.EMERCOIN, Op.REGISTER, f"dns:spa ce{i}.emc".encode(), b"TXT=space", small_owner("E"), when())

    # sale advertisements
    for i in range(SALE_FOR_SALE):
        note = f"this domain is for sale, contact seller{i}@mail.example"
        if i < SALE_FOR_SALE_WITH_PRICE:
            note += f" price ${600 + 300 * i}"
        b.add(Chain.EMERCOIN, Op.REGISTER, f"dns:offer{i}.bazar".encode(), note.encode(), small_owner("E"), when())
    for i in range(SALE_PRICE_ONLY):
        b.add(Chain.EMERCOIN, Op.REGISTER, f"dns:priced{i}.coin".encode(),
              f"TXT=buy now {20000 - 100 * i}$".encode(), small_owner("E"), when())
    for i in range(SALE_BARE_DOLLAR):
        b.add(Chain.EMERCOIN, Op.REGISTER, f"dns:money{i}.emc".encode(), b"TXT=$$$ make money",
              small_owner("E"), when())

    # top-site squatting: 328 SLDs over 1045 chain names
    four = ALEXA_MATCHES - 3 * ALEXA_UNIQUE
    for s in range(ALEXA_UNIQUE):
        variants = ["coin", "emc", "bit"] + (["lib"] if s < four else [])
        for tld in variants:
            sld = f"topsite{s:04d}"
            if tld == "bit":
                b.add(Chain.NAMECOIN, Op.REGISTER, f"d/{sld}".encode(), b"{}", small_owner("N"), when())
            else:
                b.add(Chain.EMERCOIN, Op.REGISTER, f"dns:{sld}.{tld}".encode(), b"TXT=squat",
                      small_owner("E"), when())

    # thousand-year leases
    for height, t, days in LONG_LEASES:
        b.add(Chain.EMERCOIN, Op.REGISTER, f"dns:forever{height}.emc".encode(), b"TXT=eternal",
              small_owner("E"), t, expiry_days=days, height=height)

    b.ops.sort(key=lambda o: (o.chain.value, o.height, o.txid))
    return b


def top_site_list(n_listed: int = 1000) -> list[str]:
    """Synthetic top-site list whose first ``ALEXA_UNIQUE`` SLDs are squatted by :func:`measurement_shape`."""
    return [f"topsite{i:04d}.com" for i in range(n_listed)]


@dataclass
class CrawlWorld:
    slds: list[str]
    tlds: list[str]
    dump: DumpBuilder
    registered: dict[str, list[str]]
    geo_csv: list[str]


def crawl_world(seed: int = 464) -> CrawlWorld:
    """1000 SLDs x 25 TLDs with 464 registered names and 465 resolved addresses.

    21 resolutions are private, 444 public over 55 distinct public addresses
    (one serving 220 names, another 81), spread over 15 countries.
    """
    rng = random.Random(seed)
    slds = [f"top{i:04d}" for i in range(1000)]
    chain_tlds = CRAWL_TLDS[:5]
    combos = [(s, t) for s in slds for t in chain_tlds]
    rng.shuffle(combos)
    chosen = combos[:464]

    # public addresses per country: (per-address counts)
    plan = {
        "DE": [220] + [2] * 9, "US": [81] + [5] * 13, "CN": [4] * 5, "FR": [3] * 4, "RU": [3] * 3,
        "CA": [1] * 5, "SG": [1] * 3, "GB": [1, 1], "NL": [1, 1], "SC": [1, 1],
        "AT": [1], "HK": [1], "IT": [1], "SE": [1], "TW": [1],
    }
    geo_csv = ["cidr,country"]
    events: list[str] = []
    for k, (country, counts) in enumerate(plan.items()):
        net = ipaddress.IPv4Network(f"{31 + k}.{40 + k}.0.0/16")
        geo_csv.append(f"{net},{country}")
        for j, c in enumerate(counts):
            events += [str(net.network_address + 256 * j + 10)] * c
    private = [f"10.0.{i}.1" for i in range(11)] + [f"192.168.{i}.20" for i in range(10)]

    rng.shuffle(events)
    # dual-address record takes two distinct public addresses
    first = events.pop(0)
    second = next(e for e in events if e != first)
    events.remove(second)
    assignments = [[first, second]] + [[ip] for ip in events + private]
    rng.shuffle(assignments)
    assert len(assignments) == len(chosen)

    b = DumpBuilder()
    registered = {}
    for (sld, tld), ips in zip(chosen, assignments):
        owner = address(random.Random(f"{seed}-{sld}"), "N" if tld == "bit" else "E")
        if tld == "bit":
            b.add(Chain.NAMECOIN, Op.REGISTER, f"d/{sld}".encode(), _namecoin_value(ips), owner, T2019_10 - 86400)
        else:
            b.add(Chain.EMERCOIN, Op.REGISTER, f"dns:{sld}.{tld}".encode(), _emercoin_value(ips), owner,
                  T2019_10 - 86400, expiry_days=3650)
        registered[f"{sld}.{tld}"] = ips
    return CrawlWorld(slds, list(CRAWL_TLDS), b, registered, geo_csv)


def random_dump(n_names: int = 10_000, seed: int = 0) -> DumpBuilder:
    """Random corpus over both chains with updates, deletes, re-registrations,
    case/whitespace variants, sale notes and malformed values.

    Every operation is valid under the default expiry policy, so all of
    them apply cleanly regardless of input order.
    """
    rng = random.Random(seed)
    b = DumpBuilder()
    owners = {c: [address(rng, p) for _ in range(max(1, n_names // 40))]
              for c, p in ((Chain.NAMECOIN, "N"), (Chain.EMERCOIN, "E"))}
    # a few heavy owners so rankings have a clear head
    heavy = {c: owners[c][:3] for c in owners}
    tlds = ["coin", "emc", "lib", "bazar", "com", "bit", "i2p", "neo", "org", "co.uk", "$", "coin "]
    ips = [f"{rng.randrange(1, 224)}.{rng.randrange(256)}.{rng.randrange(256)}.{rng.randrange(1, 255)}"
           for _ in range(max(4, n_names // 8))]
    alexa_slds = [f"brand{i}" for i in range(60)]
    letters = "abcdefghijklmnopqrstuvwxyz0123456789"

    def label() -> str:
        roll = rng.random()
        if roll < 0.1:
            base = rng.choice(alexa_slds)
        else:
            base = "".join(rng.choice(letters) for _ in range(rng.choice([1, 2, 3, 3, 4, 5, 6, 8, 12])))
        roll = rng.random()
        if roll < 0.05:
            base = base.capitalize() if base[0].isalpha() else "X" + base
        elif roll < 0.08:
            base = base[:1] + " " + base[1:]
        elif roll < 0.13:
            base = "xn--" + base
        return base

    def value(chain: Chain) -> bytes:
        roll = rng.random()
        picks = rng.sample(ips, rng.choice([1, 1, 1, 2]))
        if chain is Chain.NAMECOIN:
            if roll < 0.4:
                return _namecoin_value(picks)
            if roll < 0.5:
                return json.dumps({"ip6": "2001:db8::" + format(rng.randrange(1, 65535), "x")}).encode()
            if roll < 0.55:
                return b"not-json"
            if roll < 0.6:
                return f"for sale ${rng.randrange(100, 50000)}".encode()
            return b"{}"
        if roll < 0.45:
            return _emercoin_value(picks)
        if roll < 0.5:
            return f"A={picks[0]}|TXT=for sale, mail me".encode()
        if roll < 0.55:
            return f"FOR SALE price {rng.randrange(100, 9999)}$".encode()
        if roll < 0.58:
            return b"TXT=costs $ a lot"
        if roll < 0.62:
            return b"A=999.1.1.1,not-an-ip"
        if roll < 0.65:
            return "AAAA=2001:db8::1|NS=ns1.example.bit".encode()
        return b"TXT=" + label().encode()

    t0 = T2014
    names_made = 0
    used = set()
    while names_made < n_names:
        chain = Chain.NAMECOIN if rng.random() < 0.45 else Chain.EMERCOIN
        if chain is Chain.NAMECOIN:
            raw = f"d/{label()}".encode()
        else:
            raw = f"dns:{label()}.{rng.choice(tlds)}".encode()
        if rng.random() < 0.03:
            raw = f"id/{label()}".encode()
        if (chain, raw) in used:
            continue
        used.add((chain, raw))
        pool = heavy[chain] if rng.random() < 0.15 else owners[chain]
        owner = rng.choice(pool)
        names_made += 1
        # a name's whole life sits in one short window of blocks, well inside expiry
        h = b.heights[chain] + 1
        t = t0 + (h - 100_000) * 600 if chain is Chain.EMERCOIN else t0 + (h - 400_000) * 600
        days = 3650 if chain is Chain.EMERCOIN else None
        b.add(chain, Op.REGISTER, raw, value(chain), owner, t, days, height=h)
        life = [Op.UPDATE] * rng.choice([0, 0, 1, 2])
        if rng.random() < 0.08:
            life.append(Op.DELETE)
            if rng.random() < 0.5:
                life.append(Op.REGISTER)
        step = 0
        for op in life:
            step += rng.randrange(1, 50)
            new_owner = owner if rng.random() < 0.9 else rng.choice(owners[chain])
            val = b"" if op is Op.DELETE else value(chain)
            b.add(chain, op, raw, val, new_owner, t + step * 600, days if op is not Op.DELETE else None,
                  height=h + step)
            owner = new_owner
        b.heights[chain] = h + step
    return b
