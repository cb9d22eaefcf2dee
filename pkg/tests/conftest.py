import hashlib
import json
import sys
from pathlib import Path

import pytest

from blockdns.ingest import ingest_stream
from blockdns.namedb import NameDb

FIXTURES = Path(__file__).parent / "fixtures"
sys.path.insert(0, str(Path(__file__).parent))
ACCEPTANCE_RESULTS: list[str] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(line)


def op_line(chain="namecoin", op="register", name="d/foo", value="", owner="N1owner", height=1, time=1_500_000_000,
            txid=None, **extra) -> str:
    obj = dict(chain=chain, op=op, name=name, value=value, owner=owner, height=height, time=time,
               txid=txid or hashlib.sha256(repr((chain, op, name, height, value)).encode()).hexdigest())
    obj.update(extra)
    return json.dumps(obj)


def make_db(lines, **kw) -> NameDb:
    db = NameDb(**kw)
    report = ingest_stream(lines, db)
    assert report.rejected == 0, report.rejects
    return db


def gateway_lines() -> list[str]:
    """The database the wire goldens were recorded against."""
    return [
        op_line(name="d/foo", value='{"ip":"1.2.3.4"}', height=1),
        op_line(name="d/DuAl", value='{"ip":["5.6.7.8","9.10.11.12"],"ip6":"2001:db8::1"}', height=2),
        op_line(name="d/shop", value='{"ip":"1.1.1.1"}', height=3),
        op_line(name="d/Shop", value='{"ip":"2.2.2.2"}', height=4),
        op_line(name="d/parked", value="{}", height=5),
        op_line("emercoin", name="dns:GoOgle.com", value="A=6.6.6.6", height=10),
        op_line("emercoin", name="dns:google.com", value="A=7.7.7.7", height=11),
        op_line("emercoin", name="dns:shop.bazar", value="A=8.8.8.8|TXT=" + "t" * 300, height=12),
        op_line("emercoin", name="dns:big.coin", value="A=" + ",".join(f"10.0.{i // 250}.{i % 250 + 1}"
                                                                       for i in range(40)), height=13),
    ]


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def mini_lines() -> list[str]:
    return (FIXTURES / "mini_emer.ndjson").read_text().splitlines()
