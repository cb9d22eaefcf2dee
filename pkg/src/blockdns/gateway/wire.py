"""RFC 1035 message framing for the served subset (one IN question; A, AAAA, ANY).

Responses echo the question exactly as received and point answer owner
names at it with a compression pointer (``0xC00C``). No EDNS0, no TCP: if a
response would exceed 512 bytes, trailing answers are dropped and TC is set.
"""

from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional

from .routing import QType, ResolutionResult, Status, UnknownTld

HEADER = struct.Struct(">HHHHHH")
MAX_UDP = 512
DEFAULT_TTL = 300
CLASS_IN = 1

TYPE_A = 1
TYPE_NS = 2
TYPE_TXT = 16
TYPE_AAAA = 28

FLAG_QR = 0x8000
FLAG_AA = 0x0400
FLAG_TC = 0x0200
FLAG_RD = 0x0100


class Rcode(IntEnum):
    NOERROR = 0
    FORMERR = 1
    SERVFAIL = 2
    NXDOMAIN = 3
    NOTIMP = 4
    REFUSED = 5


class WireError(ValueError):
    pass


@dataclass(frozen=True)
class Question:
    qname: bytes  # dotted, case preserved as received
    qtype: int
    qclass: int
    raw: bytes  # question section bytes exactly as received

    @property
    def fqdn(self) -> str:
        return self.qname.lower().decode("utf-8", "surrogateescape")


@dataclass(frozen=True)
class Query:
    id: int
    flags: int
    qdcount: int
    question: Optional[Question]

    @property
    def opcode(self) -> int:
        return (self.flags >> 11) & 0xF

    @property
    def is_response(self) -> bool:
        return bool(self.flags & FLAG_QR)

    @property
    def fqdn(self) -> Optional[str]:
        return self.question.fqdn if self.question else None

    @property
    def qtype(self) -> Optional[int]:
        return self.question.qtype if self.question else None


def _read_name(packet: bytes, offset: int) -> tuple[bytes, int]:
    labels = []
    total = 0
    while True:
        if offset >= len(packet):
            raise WireError("truncated name")
        length = packet[offset]
        if length & 0xC0:
            raise WireError("compressed or extended label in question")
        offset += 1
        if length == 0:
            break
        if offset + length > len(packet):
            raise WireError("truncated label")
        labels.append(packet[offset:offset + length])
        total += length + 1
        if total > 254:
            raise WireError("name longer than 255 bytes")
        offset += length
    return b".".join(labels), offset


def decode_query(packet: bytes) -> Query:
    """Parse the header and, when exactly one is present, the question.

    Raises :class:`WireError` for packets that cannot be framed at all.
    """
    if len(packet) < HEADER.size:
        raise WireError(f"packet too short ({len(packet)} bytes)")
    if len(packet) > MAX_UDP:
        raise WireError(f"packet longer than {MAX_UDP} bytes")
    qid, flags, qdcount, _an, _ns, _ar = HEADER.unpack_from(packet)
    question = None
    if qdcount == 1 or (qdcount > 1 and len(packet) > HEADER.size):
        start = HEADER.size
        qname, offset = _read_name(packet, start)
        if offset + 4 > len(packet):
            raise WireError("truncated question")
        qtype, qclass = struct.unpack_from(">HH", packet, offset)
        question = Question(qname, qtype, qclass, packet[start:offset + 4])
    return Query(qid, flags, qdcount, question)


def _header(qid: int, flags: int, rcode: int, qd: int, an: int) -> bytes:
    return HEADER.pack(qid, flags | rcode, qd, an, 0, 0)


def _encode_name(name: str) -> Optional[bytes]:
    out = b""
    for label in name.rstrip(".").split("."):
        raw = label.encode("utf-8", "surrogateescape")
        if not raw or len(raw) > 63:
            return None
        out += bytes([len(raw)]) + raw
    out += b"\x00"
    return out if len(out) <= 255 else None


def _rr(rtype: int, ttl: int, rdata: bytes) -> bytes:
    return struct.pack(">HHHIH", 0xC00C, rtype, CLASS_IN, ttl, len(rdata)) + rdata


def _answer_rrs(result: ResolutionResult, ttl: int) -> list[bytes]:
    rrs = [_rr(TYPE_A, ttl, ipaddress.IPv4Address(ip).packed) for ip in result.answers.a]
    rrs += [_rr(TYPE_AAAA, ttl, ipaddress.IPv6Address(ip).packed) for ip in result.answers.aaaa]
    for host in result.answers.ns:
        rdata = _encode_name(host)
        if rdata is not None:
            rrs.append(_rr(TYPE_NS, ttl, rdata))
    for text in result.answers.txt:
        raw = text.encode("utf-8", "surrogateescape")
        chunks = [raw[i:i + 255] for i in range(0, len(raw), 255)] or [b""]
        rrs.append(_rr(TYPE_TXT, ttl, b"".join(bytes([len(c)]) + c for c in chunks)))
    return rrs


def encode_error(query: Query, rcode: Rcode, echo_question: bool = True) -> bytes:
    flags = FLAG_QR | (query.flags & (0xF << 11)) | (query.flags & FLAG_RD)
    if echo_question and query.question is not None and query.qdcount == 1:
        return _header(query.id, flags, rcode, 1, 0) + query.question.raw
    return _header(query.id, flags, rcode, 0, 0)


def encode_response(query: Query, result: ResolutionResult, ttl: int = DEFAULT_TTL,
                    unknown_tld: UnknownTld = UnknownTld.NXDOMAIN) -> bytes:
    """Wire response for a resolved single-question query."""
    flags = FLAG_QR | (query.flags & FLAG_RD)
    rrs: list[bytes] = []
    if result.status is Status.UNSUPPORTED_TLD:
        rcode = Rcode.REFUSED if unknown_tld is UnknownTld.REFUSE else Rcode.NXDOMAIN
    elif result.status is Status.NXDOMAIN:
        rcode = Rcode.NXDOMAIN
        flags |= FLAG_AA
    else:
        rcode = Rcode.NOERROR
        flags |= FLAG_AA
        if result.status is Status.OK:
            rrs = _answer_rrs(result, ttl)

    question = query.question.raw
    room = MAX_UDP - HEADER.size - len(question)
    kept: list[bytes] = []
    for rr in rrs:
        if len(rr) > room:
            flags |= FLAG_TC
            break
        kept.append(rr)
        room -= len(rr)
    return _header(query.id, flags, rcode, 1, len(kept)) + question + b"".join(kept)


SUPPORTED_QTYPES = frozenset(int(q) for q in QType)


def unsupported_reason(query: Query) -> Optional[Rcode]:
    """Rcode for queries outside the served subset, or ``None`` if servable."""
    if query.qdcount == 0 or query.question is None:
        return Rcode.FORMERR
    if query.opcode != 0 or query.qdcount > 1:
        return Rcode.NOTIMP
    if query.question.qclass != CLASS_IN or query.question.qtype not in SUPPORTED_QTYPES:
        return Rcode.NOTIMP
    return None


def formerr_for(packet: bytes) -> Optional[bytes]:
    """Header-only FORMERR for an undecodable packet, if it carries an id."""
    if len(packet) < 2:
        return None
    qid = struct.unpack_from(">H", packet)[0]
    flags = FLAG_QR
    if len(packet) >= 4:
        flags |= struct.unpack_from(">H", packet, 2)[0] & ((0xF << 11) | FLAG_RD)
    return _header(qid, flags, Rcode.FORMERR, 0, 0)
