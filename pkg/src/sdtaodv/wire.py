"""Protocol messages and their canonical binary / JSON-lines encodings.

Frame layout (little-endian)::

    [len: u16][type: u8][body ...]

``len`` counts the bytes after itself (type tag plus body). Node ids are u16,
trust values are u16 fixed point (``round_half_up(v * 65535)``), durations
are u32 milliseconds and timestamps u64 microseconds.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from typing import Iterator, Tuple, Union

TRUST_SCALE = 65535
NO_NODE = 0xFFFF
MAX_TRUST_ERROR = 0.5 / TRUST_SCALE

T_RREQ = 0x01
T_RREP = 0x02
T_RERR = 0x03
T_TOPO = 0x04
T_HELLO = 0x05
T_PACKET_IN = 0x06
T_FLOW_MOD = 0x07
T_DATA = 0x08


class MalformedMessage(ValueError):
    pass


def _check_trust(value: float, what: str = "trust") -> None:
    if not 0.0 <= value <= 1.0 or math.isnan(value):
        raise ValueError(f"{what} must lie in [0, 1], got {value}")


def trust_to_fixed(value: float) -> int:
    return int(math.floor(value * TRUST_SCALE + 0.5))


def fixed_to_trust(raw: int) -> float:
    return raw / TRUST_SCALE


def quantize_trust(value: float) -> float:
    return fixed_to_trust(trust_to_fixed(value))


def _ms(seconds: float) -> int:
    return int(math.floor(seconds * 1000 + 0.5))


def _us(seconds: float) -> int:
    return int(math.floor(seconds * 1_000_000 + 0.5))


# ---------------------------------------------------------------------------
# message types


@dataclass(frozen=True)
class TRreq:
    rreq_id: int
    hop_count: int
    source_addr: int
    source_seq: int
    dest_addr: int
    dest_seq: int
    packet_trust: float = 1.0

    def __post_init__(self) -> None:
        _check_trust(self.packet_trust, "packet_trust")


@dataclass(frozen=True)
class TRrep:
    hop_count: int
    source_addr: int
    source_seq: int
    dest_addr: int
    dest_seq: int
    packet_trust: float = 1.0
    lifetime: float = 6.0

    def __post_init__(self) -> None:
        _check_trust(self.packet_trust, "packet_trust")
        if self.lifetime <= 0:
            raise ValueError("lifetime must be positive")


@dataclass(frozen=True)
class Rerr:
    unreachable: Tuple[Tuple[int, int], ...]

    def __post_init__(self) -> None:
        if not self.unreachable:
            raise ValueError("RERR must list at least one destination")


@dataclass(frozen=True)
class TopologyRequest:
    packet_id: int
    controller_addr: int
    node_trust_list: Tuple[Tuple[int, int, float], ...] = ()
    topology_list: Tuple[Tuple[int, Tuple[int, ...]], ...] = ()

    def __post_init__(self) -> None:
        ids = [n for n, _ in self.topology_list]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate node in topology_list")
        for _, _, t in self.node_trust_list:
            _check_trust(t)

    def listed(self) -> set:
        return {n for n, _ in self.topology_list}

    def path(self) -> Tuple[int, ...]:
        return tuple(n for n, _ in self.topology_list)


@dataclass(frozen=True)
class Hello:
    node: int


@dataclass(frozen=True)
class PacketIn:
    ingress: int
    payload: Union[TRreq, TRrep]

    def __post_init__(self) -> None:
        if not isinstance(self.payload, (TRreq, TRrep)):
            raise ValueError("PacketIn carries control packets only")


@dataclass(frozen=True)
class FlowTableEntry:
    match_dest: int
    action_next_hop: int
    path_trust: float = 1.0
    idle_timeout: float = 10.0

    def __post_init__(self) -> None:
        _check_trust(self.path_trust, "path_trust")
        if self.idle_timeout <= 0:
            raise ValueError("idle_timeout must be positive")


@dataclass(frozen=True)
class FlowMod:
    target: int
    entries: Tuple[FlowTableEntry, ...] = ()
    # destination of the PacketIn this answers; NO_NODE when unsolicited
    reply_to: int = NO_NODE


@dataclass(frozen=True)
class DataPacket:
    src: int
    dst: int
    seq: int
    size: int
    created_at: float = 0.0

    def __post_init__(self) -> None:
        if self.size <= 0:
            raise ValueError("data packet size must be positive")


Message = Union[TRreq, TRrep, Rerr, TopologyRequest, Hello, PacketIn, FlowMod, DataPacket]
CONTROL_TYPES = (TRreq, TRrep, Rerr, TopologyRequest, Hello, PacketIn, FlowMod)

# ---------------------------------------------------------------------------
# binary codec

_RREQ = struct.Struct("<IBHIHIH")
_RREP = struct.Struct("<BHIHIHI")
_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_HDR = struct.Struct("<HB")
_RERR_ENT = struct.Struct("<HI")
_TOPO_HDR = struct.Struct("<IHHH")
_NTL_ENT = struct.Struct("<HHH")
_FM_HDR = struct.Struct("<HHB")
_FM_ENT = struct.Struct("<HHHI")
_DATA = struct.Struct("<HHIHQ")


def _body(msg: Message) -> Tuple[int, bytes]:
    if isinstance(msg, TRreq):
        return T_RREQ, _RREQ.pack(
            msg.rreq_id,
            msg.hop_count,
            msg.source_addr,
            msg.source_seq,
            msg.dest_addr,
            msg.dest_seq,
            trust_to_fixed(msg.packet_trust),
        )
    if isinstance(msg, TRrep):
        return T_RREP, _RREP.pack(
            msg.hop_count,
            msg.source_addr,
            msg.source_seq,
            msg.dest_addr,
            msg.dest_seq,
            trust_to_fixed(msg.packet_trust),
            _ms(msg.lifetime),
        )
    if isinstance(msg, Rerr):
        parts = [_U8.pack(len(msg.unreachable))]
        parts += [_RERR_ENT.pack(d, s) for d, s in msg.unreachable]
        return T_RERR, b"".join(parts)
    if isinstance(msg, TopologyRequest):
        parts = [
            _TOPO_HDR.pack(
                msg.packet_id,
                msg.controller_addr,
                len(msg.node_trust_list),
                len(msg.topology_list),
            )
        ]
        parts += [_NTL_ENT.pack(r, s, trust_to_fixed(t)) for r, s, t in msg.node_trust_list]
        for node, nbrs in msg.topology_list:
            parts.append(struct.pack(f"<HB{len(nbrs)}H", node, len(nbrs), *nbrs))
        return T_TOPO, b"".join(parts)
    if isinstance(msg, Hello):
        return T_HELLO, _U16.pack(msg.node)
    if isinstance(msg, PacketIn):
        return T_PACKET_IN, _U16.pack(msg.ingress) + encode(msg.payload)
    if isinstance(msg, FlowMod):
        parts = [_FM_HDR.pack(msg.target, msg.reply_to, len(msg.entries))]
        parts += [
            _FM_ENT.pack(
                e.match_dest, e.action_next_hop, trust_to_fixed(e.path_trust), _ms(e.idle_timeout)
            )
            for e in msg.entries
        ]
        return T_FLOW_MOD, b"".join(parts)
    if isinstance(msg, DataPacket):
        return T_DATA, _DATA.pack(msg.src, msg.dst, msg.seq, msg.size, _us(msg.created_at))
    raise TypeError(f"cannot encode {type(msg).__name__}")


def encode(msg: Message) -> bytes:
    tag, body = _body(msg)
    return _HDR.pack(len(body) + 1, tag) + body


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, st: struct.Struct) -> tuple:
        end = self.pos + st.size
        if end > len(self.buf):
            raise MalformedMessage("truncated message body")
        out = st.unpack_from(self.buf, self.pos)
        self.pos = end
        return out

    def take_fmt(self, fmt: str) -> tuple:
        return self.take(struct.Struct(fmt))

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise MalformedMessage(f"{len(self.buf) - self.pos} trailing bytes")


def _parse(tag: int, body: bytes) -> Message:
    r = _Reader(body)
    try:
        if tag == T_RREQ:
            a = r.take(_RREQ)
            msg = TRreq(*a[:6], packet_trust=fixed_to_trust(a[6]))
        elif tag == T_RREP:
            a = r.take(_RREP)
            msg = TRrep(*a[:5], packet_trust=fixed_to_trust(a[5]), lifetime=a[6] / 1000)
        elif tag == T_RERR:
            (n,) = r.take(_U8)
            msg = Rerr(tuple(r.take(_RERR_ENT) for _ in range(n)))
        elif tag == T_TOPO:
            pid, ctrl, n_trust, n_topo = r.take(_TOPO_HDR)
            ntl = []
            for _ in range(n_trust):
                rep, sub, raw = r.take(_NTL_ENT)
                ntl.append((rep, sub, fixed_to_trust(raw)))
            topo = []
            for _ in range(n_topo):
                node, k = r.take_fmt("<HB")
                topo.append((node, tuple(r.take_fmt(f"<{k}H"))))
            msg = TopologyRequest(pid, ctrl, tuple(ntl), tuple(topo))
        elif tag == T_HELLO:
            msg = Hello(*r.take(_U16))
        elif tag == T_PACKET_IN:
            (ingress,) = r.take(_U16)
            inner = decode(body[r.pos :])
            r.pos = len(body)
            msg = PacketIn(ingress, inner)
        elif tag == T_FLOW_MOD:
            target, reply_to, n = r.take(_FM_HDR)
            entries = []
            for _ in range(n):
                d, nh, raw, ms = r.take(_FM_ENT)
                entries.append(FlowTableEntry(d, nh, fixed_to_trust(raw), ms / 1000))
            msg = FlowMod(target, tuple(entries), reply_to)
        elif tag == T_DATA:
            src, dst, seq, size, us = r.take(_DATA)
            msg = DataPacket(src, dst, seq, size, us / 1_000_000)
        else:
            raise MalformedMessage(f"unknown message tag 0x{tag:02X}")
    except MalformedMessage:
        raise
    except ValueError as exc:
        raise MalformedMessage(str(exc)) from exc
    r.done()
    return msg


def decode(buf: bytes) -> Message:
    """Decode exactly one framed message."""
    buf = bytes(buf)
    if len(buf) < _HDR.size:
        raise MalformedMessage("message shorter than header")
    length, tag = _HDR.unpack_from(buf)
    if length < 1 or _U16.size + length != len(buf):
        raise MalformedMessage(f"length header {length} does not match {len(buf) - 2} bytes")
    return _parse(tag, buf[_HDR.size :])


def iter_decode(stream: bytes) -> Iterator[Message]:
    """Split a byte stream of back-to-back frames using the length headers."""
    pos = 0
    while pos < len(stream):
        if pos + 2 > len(stream):
            raise MalformedMessage("truncated length header")
        (length,) = _U16.unpack_from(stream, pos)
        end = pos + 2 + length
        if end > len(stream):
            raise MalformedMessage("truncated frame")
        yield decode(stream[pos:end])
        pos = end


def encoded_size(msg: Message) -> int:
    if isinstance(msg, DataPacket):
        return _HDR.size + _DATA.size + msg.size
    return len(encode(msg))


# ---------------------------------------------------------------------------
# trace form


def to_record(msg: Message) -> dict:
    rec = {"type": type(msg).__name__}
    rec.update(asdict(msg))
    if isinstance(msg, PacketIn):
        rec["payload"] = to_record(msg.payload)
    return rec


def to_trace_line(msg: Message, **extra) -> str:
    rec = dict(extra)
    rec["msg"] = to_record(msg)
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


_BY_NAME = {
    c.__name__: c for c in (TRreq, TRrep, Rerr, TopologyRequest, Hello, PacketIn, FlowMod, DataPacket)
}


def from_record(rec: dict) -> Message:
    rec = dict(rec)
    kind = rec.pop("type")
    if kind == "PacketIn":
        return PacketIn(rec["ingress"], from_record(rec["payload"]))
    if kind == "FlowMod":
        ents = tuple(FlowTableEntry(**e) for e in rec["entries"])
        return FlowMod(rec["target"], ents, rec["reply_to"])
    if kind == "Rerr":
        return Rerr(tuple(tuple(x) for x in rec["unreachable"]))
    if kind == "TopologyRequest":
        return TopologyRequest(
            rec["packet_id"],
            rec["controller_addr"],
            tuple(tuple(x) for x in rec["node_trust_list"]),
            tuple((n, tuple(nb)) for n, nb in rec["topology_list"]),
        )
    try:
        return _BY_NAME[kind](**rec)
    except KeyError:
        raise MalformedMessage(f"unknown trace type {kind!r}") from None
