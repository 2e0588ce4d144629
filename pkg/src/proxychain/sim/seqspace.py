"""32-bit TCP sequence arithmetic, segment headers and offload translation."""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace

SEQ_MOD = 1 << 32
SEQ_MASK = SEQ_MOD - 1

FLAG_FIN = 0x01
FLAG_SYN = 0x02
FLAG_PSH = 0x08
FLAG_ACK = 0x10


def seq_add(a: int, n: int) -> int:
    return (a + n) & SEQ_MASK


def seq_diff(a: int, b: int) -> int:
    """Signed distance a - b in sequence space, in [-2**31, 2**31)."""
    d = (a - b) & SEQ_MASK
    return d - SEQ_MOD if d >= 1 << 31 else d


def seq_lt(a: int, b: int) -> bool:
    return seq_diff(a, b) < 0


@dataclass(frozen=True, slots=True)
class TcpSegment:
    """Header fields the simulator and the switch care about.

    ``sent_at`` and ``retransmit`` are simulator bookkeeping and are not
    part of the header or the checksum.
    """

    seq: int
    ack: int
    window: int = 0
    flags: int = FLAG_ACK
    payload: bytes = b""
    src_port: int = 0
    dst_port: int = 0
    src_ip: int = 0
    dst_ip: int = 0
    checksum: int = 0
    sent_at: float = 0.0
    retransmit: bool = False

    def header_bytes(self, checksum: int = 0) -> bytes:
        # 20-byte header, data offset 5; window truncated to 16 bits as if scaled.
        return struct.pack("!HHIIBBHHH", self.src_port, self.dst_port, self.seq, self.ack,
                           5 << 4, self.flags, self.window & 0xFFFF, checksum, 0)


def _ones_complement_sum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\0"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return total


def tcp_checksum(seg: TcpSegment) -> int:
    """Internet checksum over the IPv4 pseudo-header, TCP header and payload."""
    tcp_len = 20 + len(seg.payload)
    pseudo = struct.pack("!IIBBH", seg.src_ip, seg.dst_ip, 0, 6, tcp_len)
    return ~_ones_complement_sum(pseudo + seg.header_bytes() + seg.payload) & 0xFFFF


def with_checksum(seg: TcpSegment) -> TcpSegment:
    return replace(seg, checksum=tcp_checksum(seg))


def _csum_adjust32(csum: int, old: int, new: int) -> int:
    """Incremental update for one changed 32-bit field (RFC 1624, eqn. 3)."""
    total = (~csum & 0xFFFF)
    for shift in (16, 0):
        total += (~(old >> shift) & 0xFFFF) + ((new >> shift) & 0xFFFF)
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


@dataclass(frozen=True)
class SeqTranslation:
    """Offsets that splice two proxied connections into one.

    ``delta_fwd`` maps sequence numbers of data flowing from the upstream
    end-point into the downstream connection's space; ``delta_rev`` does the
    same for the opposite data direction.
    """

    delta_fwd: int = 0
    delta_rev: int = 0

    def __post_init__(self):
        object.__setattr__(self, "delta_fwd", self.delta_fwd & SEQ_MASK)
        object.__setattr__(self, "delta_rev", self.delta_rev & SEQ_MASK)

    @classmethod
    def splice(cls, up_rcv_nxt: int, down_snd_nxt: int, down_rcv_nxt: int,
               up_snd_nxt: int) -> "SeqTranslation":
        """Build from the proxy's wire-level state on both connections.

        ``up_*`` are the proxy's receive/send pointers on the upstream
        connection, ``down_*`` the ones on the downstream connection, taken
        once both are drained.
        """
        return cls(down_snd_nxt - up_rcv_nxt, up_snd_nxt - down_rcv_nxt)

    def inverse(self) -> "SeqTranslation":
        return SeqTranslation(-self.delta_fwd, -self.delta_rev)

    @property
    def is_identity(self) -> bool:
        return self.delta_fwd == 0 and self.delta_rev == 0


FORWARD = "forward"
REVERSE = "reverse"


def translate_segment(seg: TcpSegment, t: SeqTranslation, direction: str) -> TcpSegment:
    """Shift seq by this direction's delta and ack by the opposite one.

    The checksum is patched incrementally; the payload is not touched.
    """
    if direction == FORWARD:
        d_seq, d_ack = t.delta_fwd, t.delta_rev
    elif direction == REVERSE:
        d_seq, d_ack = t.delta_rev, t.delta_fwd
    else:
        raise ValueError(f"direction must be {FORWARD!r} or {REVERSE!r}")
    seq = seq_add(seg.seq, d_seq)
    ack = seq_add(seg.ack, -d_ack)
    csum = _csum_adjust32(seg.checksum, seg.seq, seq)
    csum = _csum_adjust32(csum, seg.ack, ack)
    return replace(seg, seq=seq, ack=ack, checksum=csum)


def untranslate_segment(seg: TcpSegment, t: SeqTranslation, direction: str) -> TcpSegment:
    return translate_segment(seg, t.inverse(), direction)
