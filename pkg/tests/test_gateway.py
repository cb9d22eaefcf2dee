import http.client
import json
import socket
import struct
from types import MappingProxyType

import dns.flags
import dns.message
import dns.query
import dns.rcode
import pytest
from conftest import FIXTURES, gateway_lines, make_db, op_line

from blockdns.gateway import (
    DEFAULT_ROUTING,
    Gateway,
    GatewayUnavailable,
    QType,
    RoutingTable,
    SnapshotHolder,
    Status,
    UnknownTld,
    WireError,
    decode_query,
    resolve,
    resolve_exact,
    route_tld,
    serve_dns,
    serve_rest,
)
from blockdns.gateway.wire import Rcode, encode_response

WIRE = FIXTURES / "wire"


@pytest.fixture(scope="module")
def view():
    return make_db(gateway_lines()).snapshot()


@pytest.fixture
def gateway(view):
    return Gateway(lambda: view)


def test_default_routes():
    assert dict(DEFAULT_ROUTING.routes) == {"bit": "namecoin", "coin": "emercoin", "emc": "emercoin",
                                            "lib": "emercoin", "bazar": "emercoin"}


@pytest.mark.parametrize("fqdn, chain", [("okturtles.bit", "namecoin"), ("shop.bazar", "emercoin"),
                                         ("example.org", None), ("bit", None), ("x.bit.", "namecoin")])
def test_route_tld(fqdn, chain):
    assert route_tld(fqdn) == chain


def test_routing_overrides_and_validation():
    table = DEFAULT_ROUTING.with_overrides({"neo": "emercoin", "lib": None}, UnknownTld.REFUSE)
    assert route_tld("a.neo", table) == "emercoin" and route_tld("a.lib", table) is None
    with pytest.raises(ValueError):
        RoutingTable(MappingProxyType({"x": "bitcoin"}))
    with pytest.raises(ValueError):
        RoutingTable(MappingProxyType({"X": "namecoin"}))


def test_resolve_ok(view):
    r = resolve("foo.bit", QType.A, view)
    assert r.status is Status.OK and r.answers.a == ("1.2.3.4",) and not r.collision
    assert r.source == ("namecoin", b"d/foo", 1)


def test_resolve_nxdomain_and_unsupported(view):
    assert resolve("absent.bit", QType.A, view).status is Status.NXDOMAIN
    assert resolve("example.org", QType.A, view).status is Status.UNSUPPORTED_TLD


def test_resolve_no_address_data(view):
    assert resolve("foo.bit", QType.AAAA, view).status is Status.NO_ADDRESS_DATA
    assert resolve("parked.bit", QType.ANY, view).status is Status.NO_ADDRESS_DATA


def test_collision_earliest_wins(view):
    r = resolve("shop.bit", QType.A, view)
    assert r.status is Status.OK and r.answers.a == ("1.1.1.1",) and r.collision


def test_resolve_unavailable():
    with pytest.raises(GatewayUnavailable):
        resolve("foo.bit", QType.A, None)
    # unsupported TLDs never touch the database
    assert resolve("x.org", QType.A, None).status is Status.UNSUPPORTED_TLD


def test_resolve_exact(view):
    assert resolve_exact("GoOgle.com", QType.A, view).answers.a == ("6.6.6.6",)
    assert resolve_exact("google.com", QType.A, view).answers.a == ("7.7.7.7",)
    assert resolve_exact("Shop.bit", QType.A, view).answers.a == ("2.2.2.2",)
    assert resolve_exact("SHOP.bit", QType.A, view).status is Status.NXDOMAIN
    # foreign TLDs stay unreachable through folded resolution
    assert resolve("google.com", QType.A, view).status is Status.UNSUPPORTED_TLD


def test_resolve_is_referentially_stable(view):
    assert resolve("shop.bit", QType.ANY, view) == resolve("shop.bit", QType.ANY, view)


# --- wire goldens -----------------------------------------------------------

GOLDEN = ["foo_a", "nxdomain", "nodata", "notimp", "formerr", "formerr_truncated", "unsupported_tld", "dual_any"]


@pytest.mark.parametrize("case", GOLDEN)
def test_golden_bytes(gateway, case):
    query = (WIRE / f"{case}_q.bin").read_bytes()
    assert gateway.handle_packet(query) == (WIRE / f"{case}.bin").read_bytes()


def test_golden_servfail():
    gw = Gateway(lambda: None)
    assert gw.handle_packet((WIRE / "servfail_q.bin").read_bytes()) == (WIRE / "servfail.bin").read_bytes()


def test_golden_responses_parse_independently():
    for case in GOLDEN + ["servfail"]:
        msg = dns.message.from_wire((WIRE / f"{case}.bin").read_bytes())
        assert msg.flags & dns.flags.QR


def test_decode_errors():
    for bad in (b"", b"\x12", b"\x00" * 11, b"\x00" * 600):
        with pytest.raises(WireError):
            decode_query(bad)
    pointer = struct.pack(">HHHHHH", 1, 0, 1, 0, 0, 0) + b"\xc0\x0c\x00\x01\x00\x01"
    with pytest.raises(WireError):
        decode_query(pointer)


def test_qdcount_two_is_notimp(gateway):
    q = struct.pack(">HHHHHH", 7, 0x0100, 2, 0, 0, 0) + b"\x03foo\x03bit\x00\x00\x01\x00\x01" * 2
    resp = gateway.handle_packet(q)
    assert struct.unpack(">HHHHHH", resp[:12]) == (7, 0x8000 | 0x0100 | 4, 0, 0, 0, 0)


def test_opcode_and_class_notimp(gateway):
    q = struct.pack(">HHHHHH", 8, 2 << 11, 1, 0, 0, 0) + b"\x03foo\x03bit\x00\x00\x01\x00\x01"
    assert gateway.handle_packet(q)[3] & 0xF == Rcode.NOTIMP
    q = struct.pack(">HHHHHH", 9, 0, 1, 0, 0, 0) + b"\x03foo\x03bit\x00\x00\x01\x00\x03"
    assert gateway.handle_packet(q)[3] & 0xF == Rcode.NOTIMP


def test_responses_are_dropped(gateway):
    q = (WIRE / "foo_a.bin").read_bytes()
    assert gateway.handle_packet(q) is None


def test_formerr_can_be_disabled(view):
    gw = Gateway(lambda: view, formerr=False)
    assert gw.handle_packet((WIRE / "formerr_truncated_q.bin").read_bytes()) is None
    assert gw.handle_packet(b"\x01") is None


def test_refuse_unknown_tld(view):
    gw = Gateway(lambda: view, routing=DEFAULT_ROUTING.with_overrides({}, UnknownTld.REFUSE))
    resp = gw.handle_packet((WIRE / "unsupported_tld_q.bin").read_bytes())
    assert resp[3] & 0xF == Rcode.REFUSED


def test_case_folding_on_wire_echoes_question(gateway):
    q = dns.message.make_query("FoO.BiT", "A")
    resp = dns.message.from_wire(gateway.handle_packet(q.to_wire()))
    assert str(resp.question[0].name) == "FoO.BiT."
    assert [str(rr) for rr in resp.answer[0]] == ["1.2.3.4"]


def test_txt_and_ns_in_any(gateway):
    q = dns.message.make_query("shop.bazar", "ANY")
    resp = dns.message.from_wire(gateway.handle_packet(q.to_wire()))
    txt = [rr for rrset in resp.answer for rr in rrset if rrset.rdtype == 16]
    assert [len(s) for s in txt[0].strings] == [255, 45]


def test_truncation_sets_tc(gateway):
    q = dns.message.make_query("big.coin", "A")
    raw = gateway.handle_packet(q.to_wire())
    assert len(raw) <= 512
    resp = dns.message.from_wire(raw)
    assert resp.flags & dns.flags.TC
    assert 0 < sum(len(r) for r in resp.answer) < 40


def test_wire_roundtrip_matches_resolve(gateway, view):
    for name, qtype in [("foo.bit", "A"), ("dual.bit", "ANY"), ("dual.bit", "AAAA"), ("absent.bit", "A"),
                        ("parked.bit", "A"), ("x.org", "A"), ("shop.bit", "A")]:
        result = resolve(name, QType[qtype], view)
        resp = dns.message.from_wire(gateway.handle_packet(dns.message.make_query(name, qtype).to_wire()))
        expect_rcode = {Status.OK: 0, Status.NO_ADDRESS_DATA: 0, Status.NXDOMAIN: 3, Status.UNSUPPORTED_TLD: 3}
        assert resp.rcode() == expect_rcode[result.status]
        ips = sorted(str(rr) for rrset in resp.answer for rr in rrset if rrset.rdtype in (1, 28))
        assert ips == sorted(result.answers.a + result.answers.aaaa)


def test_encode_response_default_ttl(view):
    q = decode_query((WIRE / "foo_a_q.bin").read_bytes())
    raw = encode_response(q, resolve("foo.bit", QType.A, view), ttl=60)
    assert dns.message.from_wire(raw).answer[0].ttl == 60


# --- live servers -------------------------------------------------------------

def test_udp_server(gateway):
    with serve_dns(("127.0.0.1", 0), gateway) as srv:
        host, port = srv.address
        resp = dns.query.udp(dns.message.make_query("foo.bit", "A"), host, port=port, timeout=2)
        assert resp.rcode() == dns.rcode.NOERROR and str(resp.answer[0][0]) == "1.2.3.4"
        # garbage does not kill the server
        with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
            s.settimeout(2)
            s.sendto(b"\xab\xcd\x01", (host, port))
            reply, _ = s.recvfrom(512)
            assert reply[:2] == b"\xab\xcd" and reply[3] & 0xF == Rcode.FORMERR
        resp = dns.query.udp(dns.message.make_query("absent.bit", "A"), host, port=port, timeout=2)
        assert resp.rcode() == dns.rcode.NXDOMAIN


def test_udp_bind_conflict(gateway):
    with serve_dns(("127.0.0.1", 0), gateway) as srv:
        with pytest.raises(OSError):
            serve_dns(srv.address, gateway)


def _get(conn, path):
    conn.request("GET", path)
    resp = conn.getresponse()
    return resp.status, json.loads(resp.read())


def test_rest_server(gateway):
    with serve_rest(("127.0.0.1", 0), gateway) as srv:
        conn = http.client.HTTPConnection(*srv.address, timeout=5)
        status, body = _get(conn, "/resolve?name=foo.bit")
        assert status == 200 and body["status"] == "ok" and body["answers"]["a"] == ["1.2.3.4"]
        assert set(body) >= {"status", "answers", "collision", "source"}
        status, body = _get(conn, "/resolve?name=GoOgle.com&exact=1")
        assert status == 200 and body["status"] == "ok" and body["answers"]["a"] == ["6.6.6.6"]
        status, body = _get(conn, "/resolve?name=SHOP.bit&type=any")
        assert body["collision"] is True and body["answers"]["a"] == ["1.1.1.1"]
        assert _get(conn, "/resolve")[0] == 400
        assert _get(conn, "/resolve?name=")[0] == 400
        assert _get(conn, "/resolve?name=foo.bit&type=MX")[0] == 400
        assert _get(conn, "/resolve?name=foo.bit&exact=yes")[0] == 400
        assert _get(conn, "/nope")[0] == 404
        status, body = _get(conn, "/resolve?name=foo.bit")  # connection still usable after errors
        assert status == 200
        conn.close()


def test_rest_unavailable_is_503():
    holder = SnapshotHolder()
    with serve_rest(("127.0.0.1", 0), Gateway(holder.get)) as srv:
        conn = http.client.HTTPConnection(*srv.address, timeout=5)
        assert _get(conn, "/resolve?name=foo.bit")[0] == 503
        holder.swap(make_db([op_line(value='{"ip":"1.2.3.4"}')]).snapshot())
        assert _get(conn, "/resolve?name=foo.bit")[1]["status"] == "ok"
        conn.close()


def test_nxdomain_sweep_small(gateway):
    for i in range(500):
        q = dns.message.make_query(f"absent-{i}.{['bit', 'coin', 'emc', 'lib', 'bazar'][i % 5]}", "A")
        assert dns.message.from_wire(gateway.handle_packet(q.to_wire())).rcode() == dns.rcode.NXDOMAIN
