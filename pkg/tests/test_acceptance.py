"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
Set BLOCKDNS_FUZZ_SECONDS to shorten the fuzz run locally (default 60).
"""

import json
import os
import random
import struct
import time
import tracemalloc

import oracles
import pytest
from conftest import ACCEPTANCE_RESULTS, FIXTURES, gateway_lines, make_db, op_line

from blockdns import synth
from blockdns.analytics import GeoTable, build_report
from blockdns.crawler import aggregate_crawl, crawl, generate_candidates
from blockdns.gateway import Gateway, serve_rest
from blockdns.ingest import DumpError, ingest_stream, parse_dump_line
from blockdns.namedb import NameDb
from blockdns.nvs import is_sale_offer, lexical_profile, load_tld_list, namecoin_subdomains, parse_value

TLDS = load_tld_list()

FUZZ_SECONDS = float(os.environ.get("BLOCKDNS_FUZZ_SECONDS", "60"))
FUZZ_MEMORY_CAP = 32 * 1024 * 1024
NAME_CAP, VALUE_CAP = 255, 20 * 1024


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    n, title = marker.args
    state = {"detail": ""}
    yield state
    failed = request.node.rep_call.failed if hasattr(request.node, "rep_call") else True
    ACCEPTANCE_RESULTS.append(f"criterion {n} {'FAIL' if failed else 'PASS'}: {title} {state['detail']}".rstrip())


def report_json(records, **kw) -> str:
    return json.dumps(build_report([r for r in records if not r.deleted], TLDS, **kw).to_dict(), sort_keys=True)


@pytest.mark.criterion(1, "10k-record analytics equal counting oracles")
def test_oracle_equivalence(criterion):
    lines = synth.random_dump(10_000, seed=1).lines()
    alexa = [f"brand{i}.com" for i in range(30)] + [f"brand{i}.co.uk" for i in range(30, 60)]
    geo_rows = [(f"{a}.0.0.0/8", f"C{a % 7}") for a in range(1, 224, 3)] + \
               [(f"{a}.128.0.0/9", f"X{a % 3}") for a in range(1, 224, 5)]

    t0 = time.perf_counter()
    db = NameDb()
    assert ingest_stream(lines, db).rejected == 0
    recs = [r for r in db.snapshot().records() if not r.deleted]
    rep = build_report(recs, TLDS, alexa=alexa, geo=GeoTable(geo_rows), per_chain=False).to_dict()
    elapsed = time.perf_counter() - t0

    scope = oracles.in_scope(lines)
    assert len(db.snapshot()) == len(oracles.replay(lines)) == 10_000
    assert rep["record_count"] == len(scope)
    assert {int(k): v for k, v in rep["length_histogram"].items()} == oracles.length_histogram(scope)
    assert rep["tld_counts"] == oracles.tld_counts(scope)
    assert rep["top_registrants"] == oracles.registrants(scope, 10)
    assert rep["ip_counts"] == oracles.ip_counts(scope, 15)
    assert rep["lexical_counts"] == oracles.lexical(scope, TLDS)
    assert (rep["sale_offers"]["strict"], rep["sale_offers"]["loose"]) == oracles.sale(scope)
    assert (rep["alexa_matches"]["matches"], rep["alexa_matches"]["unique_slds"]) == oracles.alexa(scope, alexa, TLDS)
    assert rep["timeline"] == oracles.timeline(scope)
    assert rep["timeline_com"] == oracles.timeline(scope, TLDS, com_only=True)
    assert rep["country_counts"]["per_resolution"] == oracles.countries(scope, geo_rows)
    assert rep["country_counts"]["per_unique_ip"] == oracles.countries(scope, geo_rows, unique=True)
    # the fixture must exercise every table
    assert all(rep["lexical_counts"].values()) and rep["sale_offers"]["strict"] and rep["alexa_matches"]["matches"]
    criterion["detail"] = f"(10000 records, {len(scope)} live, {elapsed:.2f}s)"
    assert elapsed < 10


@pytest.mark.criterion(2, "measurement-shaped fixture reproduces the reported tables")
def test_measurement_shape(criterion):
    db = NameDb()
    assert ingest_stream(synth.measurement_shape().lines(), db).rejected == 0
    recs = [r for r in db.snapshot().records() if not r.deleted]
    rep = build_report(recs, TLDS, alexa=synth.top_site_list()).to_dict()
    nmc, emc = rep["chains"]["namecoin"], rep["chains"]["emercoin"]

    assert [c for _, c in nmc["top_registrants"]] == [3754, 2213, 1690, 64, 64, 16, 16, 14, 14, 10]
    assert nmc["top_registrants"][0][0] == "MyZTAGS74akZBiqYPKuvD3zGCfL8tGmXpz"
    assert [c for _, c in emc["top_registrants"]] == [3565, 2688, 253, 196, 150, 137, 58, 53, 47, 44]
    assert emc["top_registrants"][0][0] == "ETkxi1X1CeX2QDSWp3CDmuDj7jJZtftfNF"
    assert rep["ip_counts"][:4] == [["192.243.100.192", 1957], ["144.76.12.6", 448], ["202.108.22.5", 402],
                                    ["192.227.233.13", 340]]
    assert [c for _, c in rep["ip_counts"]] == [1957, 448, 402, 340, 144, 88, 67, 53, 53, 45, 45, 45, 37, 32, 29]
    assert list(rep["tld_counts"].items())[:6] == [("coin", 1261), ("bit", 1045), ("lib", 1017), ("bazar", 998),
                                                   ("emc", 861), ("i2p", 19)]
    assert rep["lexical_counts"] == {"embedded_com": 44, "punycode": 1261, "capitals": 316, "whitespace": 35}
    assert rep["sale_offers"]["markers"]["for-sale"] == 567
    assert rep["sale_offers"]["markers"]["dollar-amount"] > 100
    assert (rep["alexa_matches"]["matches"], rep["alexa_matches"]["unique_slds"]) == (1045, 328)
    years = {oracle_year(r.expires_at.at) for r in recs if r.chain == "emercoin"}
    assert {5014, 12012} <= years
    criterion["detail"] = "(registrants, IPs, TLDs, lexical, sale, A1K, extreme leases)"


@pytest.mark.criterion(3, "crawl of 25,000 candidates finds 464 names and 465 addresses")
def test_crawl_experiment(criterion, tmp_path):
    world = synth.crawl_world()
    view = make_db(world.dump.lines()).snapshot()
    candidates = generate_candidates(world.slds, world.tlds)
    assert len(candidates) == 25_000
    t0 = time.perf_counter()
    with serve_rest(("127.0.0.1", 0), Gateway(lambda: view)) as srv:
        results = crawl(candidates, "http://%s:%d" % srv.address, concurrency=16, rate_limit=5000,
                        journal=tmp_path / "journal.ndjson")
    elapsed = time.perf_counter() - t0
    summary = aggregate_crawl(results, GeoTable.from_csv(world.geo_csv))
    rows = [line.split(",") for line in world.geo_csv[1:]]
    want = oracles.crawl_from_journal((tmp_path / "journal.ndjson").read_text().splitlines(), rows)

    assert summary.candidates == want["candidates"] == 25_000
    assert summary.registered == want["registered"] == 464
    assert summary.total_ips == want["total_ips"] == 465
    assert sum(1 for r in results if len(r.ips) == 2) == 1
    assert (summary.private_ips, summary.public_ips) == (21, 444)
    assert sum(summary.per_country.values()) == summary.public_ips
    assert summary.per_country == want["per_country"]
    assert summary.errors == 0
    criterion["detail"] = f"({elapsed:.1f}s)"
    assert elapsed < 60


@pytest.mark.criterion(4, "wire goldens are bit-exact and 10k absent names get NXDOMAIN")
def test_wire_conformance(criterion):
    view = make_db(gateway_lines()).snapshot()
    gw = Gateway(lambda: view)
    cases = ["foo_a", "nxdomain", "nodata", "notimp", "formerr", "formerr_truncated", "unsupported_tld", "dual_any"]
    wire = FIXTURES / "wire"
    for case in cases:
        assert gw.handle_packet((wire / f"{case}_q.bin").read_bytes()) == (wire / f"{case}.bin").read_bytes(), case
    down = Gateway(lambda: None)
    assert down.handle_packet((wire / "servfail_q.bin").read_bytes()) == (wire / "servfail.bin").read_bytes()

    big = make_db(synth.random_dump(2_000, seed=3).lines()).snapshot()
    gw = Gateway(lambda: big)
    rng = random.Random(10_000)
    known = {r.fqdn for r in big.records()}
    deviations = 0
    tlds = ["bit", "coin", "emc", "lib", "bazar"]
    for i in range(10_000):
        label = "".join(rng.choice("abcdefghijklmnopqrstuvwxyz0123456789-") for _ in range(rng.randint(1, 40)))
        name = f"{label}.{tlds[i % 5]}"
        if name in known:
            continue
        qid = rng.randrange(0x10000)
        question = b"".join(bytes([len(p)]) + p.encode() for p in name.split(".")) + b"\0" + struct.pack(">HH", 1, 1)
        query = struct.pack(">HHHHHH", qid, 0x0100, 1, 0, 0, 0) + question
        expected = struct.pack(">HHHHHH", qid, 0x8503, 1, 0, 0, 0) + question
        deviations += gw.handle_packet(query) != expected
    criterion["detail"] = f"({len(cases) + 1} goldens, {deviations} sweep deviations)"
    assert deviations == 0


@pytest.mark.criterion(5, "permuted ingestion and snapshot reload give byte-identical reports")
def test_determinism_and_replay(criterion, tmp_path):
    seeds = [random.SystemRandom().randrange(2**32) for _ in range(2)]
    for trial, seed in enumerate(seeds):
        lines = synth.random_dump(3_000, seed=seed).lines()
        base = make_db(lines)
        reference = report_json(base.snapshot().records())

        shuffled = list(lines)
        random.Random(seed).shuffle(shuffled)
        assert report_json(make_db(shuffled).snapshot().records()) == reference, f"permutation, seed {seed}"

        path = tmp_path / f"snap{trial}.db"
        base.snapshot().save(path)
        assert report_json(NameDb.load(path).snapshot().records()) == reference, f"reload, seed {seed}"

        cut = len(lines) // 2
        ordered = sorted(lines, key=lambda ln: (json.loads(ln)["height"], json.loads(ln)["txid"]))
        half = make_db(ordered[:cut])
        half.snapshot().save(path)
        resumed = NameDb.load(path)
        assert ingest_stream(ordered[cut:], resumed).rejected == 0
        assert report_json(resumed.snapshot().records()) == reference, f"split replay, seed {seed}"
    criterion["detail"] = f"(seeds {seeds[0]}, {seeds[1]})"


def oracle_year(unix_seconds: int) -> int:
    """Proleptic Gregorian year by walking whole years from 1970."""
    days = unix_seconds // 86400
    year = 1970
    while True:
        length = 366 if (year % 4 == 0 and year % 100 != 0) or year % 400 == 0 else 365
        if days < length:
            return year
        days -= length
        year += 1


@pytest.mark.criterion(6, "expiry boundaries, including the year-5014 and year-12012 leases")
def test_expiry_boundaries(criterion):
    view = make_db([op_line(name="d/edge", height=1000),
                    op_line(name="d/renewed", height=1000),
                    op_line(op="update", name="d/renewed", value='{"ip":"1.1.1.1"}', height=20_000)]).snapshot()
    assert view.lookup_exact("namecoin", b"d/edge", at_height=36_999) is not None
    assert view.lookup_exact("namecoin", b"d/edge", at_height=37_000) is None
    assert view.lookup_exact("namecoin", b"d/renewed", at_height=55_999) is not None
    assert view.lookup_exact("namecoin", b"d/renewed", at_height=56_000) is None

    t0 = 1_500_000_000
    view = make_db([op_line("emercoin", name="dns:a.coin", time=t0, height=10, expiry_days=30),
                    op_line("emercoin", name="dns:b.coin", time=t0, height=11)]).snapshot()
    assert view.lookup_exact("emercoin", b"dns:a.coin", at_time=t0 + 30 * 86400 - 1) is not None
    assert view.lookup_exact("emercoin", b"dns:a.coin", at_time=t0 + 30 * 86400) is None
    assert view.lookup_exact("emercoin", b"dns:b.coin", at_time=t0 + 365 * 86400 - 1) is not None
    assert view.lookup_exact("emercoin", b"dns:b.coin", at_time=t0 + 365 * 86400) is None

    years = []
    for i, (height, registered, days) in enumerate(synth.LONG_LEASES):
        name = f"dns:long{i}.coin"
        view = make_db([op_line("emercoin", name=name, time=registered, height=height, expiry_days=days)]).snapshot()
        at = registered + days * 86400
        rec = view.lookup_exact("emercoin", name.encode())
        assert rec.expires_at.at == at
        assert view.lookup_exact("emercoin", name.encode(), at_time=at - 1) is not None
        assert view.lookup_exact("emercoin", name.encode(), at_time=at) is None
        years.append(oracle_year(at))
    assert years == [5014, 12012]
    criterion["detail"] = f"(lease years {years[0]}, {years[1]})"


def _fuzz_line(rng: random.Random) -> str:
    chain = rng.choice(["namecoin", "emercoin", "bogus"])
    name = rng.choice([b"d/", b"dns:", b""]) + rng.randbytes(rng.randint(0, NAME_CAP + 4))
    value = rng.randbytes(rng.choice([0, 8, 64, 512, VALUE_CAP - 1, VALUE_CAP + 1]))
    obj = {"chain": chain, "op": rng.choice(["register", "update", "delete"]),
           "name": name.decode("utf-8", "surrogateescape"), "value": value.decode("utf-8", "surrogateescape"),
           "owner": "o", "height": rng.randint(-1, 10**6), "time": rng.randint(0, 2**40),
           "txid": rng.randbytes(32).hex()}
    if rng.random() < 0.2:
        obj["expiry_days"] = rng.randint(0, 10**7)
    text = json.dumps(obj)
    if rng.random() < 0.1:
        cut = rng.randint(0, len(text))
        text = text[:cut]
    return text


@pytest.mark.criterion(7, "fuzzing names, values and packets: no crashes, bounded memory")
def test_fuzz(criterion):
    rng = random.Random(7)
    goldens = [p.read_bytes() for p in (FIXTURES / "wire").glob("*_q.bin")]
    view = make_db(gateway_lines()).snapshot()
    gw = Gateway(lambda: view)
    iterations = 0
    tracemalloc.start()
    try:
        db = NameDb()
        deadline = time.monotonic() + FUZZ_SECONDS
        while time.monotonic() < deadline:
            line = _fuzz_line(rng)
            try:
                op = parse_dump_line(line)
            except DumpError:
                op = None
            if op is not None:
                assert len(op.raw_name) <= NAME_CAP and len(op.value) <= VALUE_CAP
                db.apply(op)
                parse_value(op.chain.value, op.value)
                lexical_profile(op.raw_name, TLDS, op.chain.value)
            blob = rng.randbytes(rng.randint(0, 2048))
            parse_value("namecoin", blob)
            parse_value("emercoin", blob)
            namecoin_subdomains(blob)
            is_sale_offer(blob)
            lexical_profile(blob, TLDS)
            packet = bytearray(rng.choice(goldens))
            for _ in range(rng.randint(0, 6)):
                if packet:
                    packet[rng.randrange(len(packet))] = rng.randrange(256)
            if rng.random() < 0.3:
                packet = bytearray(rng.randbytes(rng.randint(0, 600)))
            out = gw.handle_packet(bytes(packet))
            assert out is None or len(out) <= 512
            iterations += 1
            if len(db) > 2_000:
                db = NameDb()
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    criterion["detail"] = f"({iterations} iterations in {FUZZ_SECONDS:.0f}s, peak {peak / 2**20:.1f} MiB)"
    assert peak < FUZZ_MEMORY_CAP
