"""Links and a segment-level TCP end-point (slow start, RTO, go-back-N)."""
from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import replace

from .engine import EventLoop, Timer
from .seqspace import FLAG_ACK, TcpSegment, seq_add, seq_diff

UNLIMITED_WINDOW = 1 << 40
MAX_RTO = 60_000.0


class Pipe:
    """One direction of a link: FIFO, optional serialization rate and loss.

    ``bandwidth`` is in bytes per ms (None = unlimited). Only data-bearing
    segments are subject to loss. With a finite rate, coalesced trains are
    cut into ``mss``-sized segments before serialization.
    """

    def __init__(self, loop: EventLoop, delay: float, bandwidth: float | None = None,
                 loss: float = 0.0, rng: random.Random | None = None, mss: int = 1460,
                 name: str = ""):
        if delay <= 0:
            raise ValueError("link delay must be positive")
        if not 0 <= loss < 1:
            raise ValueError("loss must be in [0, 1)")
        if bandwidth is not None and bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        self.loop = loop
        self.delay = delay
        self.bandwidth = bandwidth
        self.loss = loss
        self.rng = rng or random.Random(0)
        self.mss = mss
        self.name = name
        self.extra_delay = 0.0
        self.sink = None
        self.busy_until = 0.0
        self._last_arrival = 0.0
        self.sent = 0
        self.dropped = 0

    @property
    def coalesces(self) -> bool:
        return self.bandwidth is None and self.loss == 0

    def send(self, seg: TcpSegment) -> None:
        if self.bandwidth is not None and len(seg.payload) > self.mss:
            for piece in _split(seg, self.mss):
                self._send_one(piece)
        else:
            self._send_one(seg)

    def _send_one(self, seg: TcpSegment) -> None:
        self.sent += 1
        if self.loss and seg.payload and self.rng.random() < self.loss:
            self.dropped += 1
            return
        now = self.loop.now
        if self.bandwidth is not None and seg.payload:
            start = max(now, self.busy_until)
            self.busy_until = start + len(seg.payload) / self.bandwidth
            depart = self.busy_until
        else:
            depart = now
        arrival = max(depart + self.delay + self.extra_delay, self._last_arrival)
        self._last_arrival = arrival
        self.loop.at(arrival, self.sink, seg)


def _split(seg: TcpSegment, mss: int):
    data = seg.payload
    for off in range(0, len(data), mss):
        yield replace(seg, seq=seq_add(seg.seq, off), payload=data[off:off + mss])


class StreamBuffer:
    """Byte queue addressed by absolute stream offset."""

    def __init__(self):
        self._buf = bytearray()
        self.start = 0  # absolute offset of _buf[0]

    @property
    def end(self) -> int:
        return self.start + len(self._buf)

    def __len__(self) -> int:
        return len(self._buf)

    def append(self, data: bytes) -> None:
        self._buf += data

    def read(self, offset: int, n: int) -> bytes:
        lo = offset - self.start
        return bytes(self._buf[lo:lo + n])

    def consume_to(self, offset: int) -> None:
        k = offset - self.start
        if k > 0:
            del self._buf[:k]
            self.start = offset


class SimTcpConn:
    """One end-point of a simulated TCP connection.

    Stream positions are kept as absolute byte offsets and converted to
    32-bit wire sequence numbers at the edge, so a middlebox that rewrites
    seq/ack fields is transparent to the end-point.
    """

    def __init__(self, loop: EventLoop, name: str, *, isn_local: int, isn_remote: int,
                 icw: int = 10, mss: int = 1460, rwnd: int | None = None,
                 ssthresh: float = math.inf, min_rto: float = 200.0,
                 rto_granularity: float = 0.0, initial_rto: float = 1000.0,
                 coalesce: bool = True):
        self.loop = loop
        self.name = name
        self.isn_local = isn_local
        self.isn_remote = isn_remote
        self.icw = icw
        self.mss = mss
        self.rwnd = rwnd
        self.cwnd = float(icw)
        self.ssthresh = ssthresh
        self.min_rto = min_rto
        self.rto_granularity = rto_granularity
        self.coalesce = coalesce
        self.transmit = None  # set by wiring: callable(TcpSegment)
        self.on_data = None  # callable(bytes) for in-order delivery
        self.backlog = lambda: 0  # app bytes not yet consumed, shrinks our window
        self.on_acked = None  # callable() after snd_una advances

        # sender state
        self.send_buf = StreamBuffer()
        self.snd_una = 0
        self.snd_nxt = 0
        self.high_water = 0
        self.peer_right = UNLIMITED_WINDOW
        self.dupacks = 0
        self.recover = None
        self._sent_log: deque = deque()  # (end_offset, sent_at, retransmitted)
        self.srtt: float | None = None
        self.rttvar: float | None = None
        self.min_rtt = math.inf
        self.rto = initial_rto
        self._timer: Timer | None = None

        # receiver state
        self.rcv_nxt = 0
        self._ooo: dict[int, bytes] = {}
        self._adv_right = 0
        self.frozen_right: int | None = None

        # counters
        self.rto_events = 0
        self.retransmitted_segments = 0
        self.fast_retransmits = 0
        self.spurious_segments = 0  # retransmitted data that had already arrived
        self.packets_in = 0
        self.acked_bytes = 0
        self.rate_rounds: list[tuple[int, bool]] = []
        self._round_start: float | None = None
        self._round_bytes = 0
        self._round_app_limited = False
        self.log_event = None  # callable(event, conn) for tracing

    # -- wire helpers ----------------------------------------------------
    def wire_seq(self, offset: int) -> int:
        return seq_add(self.isn_local, 1 + offset)

    def wire_rcv(self, offset: int) -> int:
        return seq_add(self.isn_remote, 1 + offset)

    @property
    def flight(self) -> int:
        return self.snd_nxt - self.snd_una

    @property
    def unacked_or_unsent(self) -> int:
        return self.send_buf.end - self.snd_una

    # -- application side ------------------------------------------------
    def write(self, data: bytes) -> None:
        if data:
            self.send_buf.append(data)
            self._try_send()

    # -- sending ---------------------------------------------------------
    def _try_send(self) -> None:
        sent_any = False
        while True:
            avail = self.send_buf.end - self.snd_nxt
            cwnd_room = int(self.cwnd) * self.mss - self.flight
            win_room = self.peer_right - self.snd_nxt
            room = min(avail, cwnd_room, win_room)
            if room <= 0:
                if avail <= 0 and cwnd_room > 0:
                    self._round_app_limited = True
                break
            if not self.coalesce:
                room = min(room, self.mss)
            self._emit(self.snd_nxt, room)
            self.snd_nxt += room
            sent_any = True
        if sent_any and self._timer is None:
            self._arm_timer()

    def _emit(self, offset: int, n: int) -> None:
        retx = offset < self.high_water
        if retx:
            self.retransmitted_segments += math.ceil(n / self.mss)
            if self.log_event:
                self.log_event("retransmit", self)
        seg = TcpSegment(seq=self.wire_seq(offset), ack=self.wire_rcv(self.rcv_nxt),
                         window=self._advertise(), flags=FLAG_ACK,
                         payload=self.send_buf.read(offset, n), sent_at=self.loop.now,
                         retransmit=retx)
        self.high_water = max(self.high_water, offset + n)
        self._sent_log.append((offset + n, self.loop.now, retx))
        self.transmit(seg)

    def _arm_timer(self) -> None:
        if self._timer is not None:
            self._timer.cancel()
        self._timer = self.loop.after(self.rto, self._on_rto)

    def _stop_timer(self) -> None:
        if self._timer is not None:
            self._timer.cancel()
            self._timer = None

    def _on_rto(self) -> None:
        self._timer = None
        if self.flight <= 0:
            return
        self.rto_events += 1
        if self.log_event:
            self.log_event("rto", self)
        self.ssthresh = max(self.flight / self.mss / 2, 2.0)
        self.cwnd = 1.0
        self.snd_nxt = self.snd_una  # go-back-N
        self.dupacks = 0
        self.recover = None
        self._sent_log.clear()
        self.rto = min(self.rto * 2, MAX_RTO)
        self._try_send()
        if self._timer is None and self.flight > 0:
            self._arm_timer()

    def _rtt_sample(self, r: float) -> None:
        self.min_rtt = min(self.min_rtt, r)
        if self.srtt is None:
            self.srtt = r
            self.rttvar = r / 2
        else:
            self.rttvar = 0.75 * self.rttvar + 0.25 * abs(self.srtt - r)
            self.srtt = 0.875 * self.srtt + 0.125 * r
        self.rto = min(max(self.min_rto, self.srtt + max(self.rto_granularity, 4 * self.rttvar)),
                       MAX_RTO)

    # -- receiving -------------------------------------------------------
    def receive(self, seg: TcpSegment) -> None:
        self.packets_in += 1
        if seg.payload:
            self._on_data(seg)
        self._on_ack(seg)

    def _on_ack(self, seg: TcpSegment) -> None:
        acked_to = self.snd_una + seq_diff(seg.ack, self.wire_seq(self.snd_una))
        if acked_to < self.snd_una:
            return  # stale
        right = acked_to + seg.window
        window_moved = right != self.peer_right
        self.peer_right = right
        if acked_to > self.snd_nxt:
            # Originals acked after a go-back-N rewind.
            self.snd_nxt = acked_to
        if acked_to > self.snd_una:
            newly = acked_to - self.snd_una
            nseg = math.ceil(newly / self.mss)
            self.snd_una = acked_to
            self.send_buf.consume_to(acked_to)
            self.acked_bytes += newly
            self._take_rtt_sample(acked_to)
            self._account_round(newly)
            self.dupacks = 0
            if self.recover is not None:
                if acked_to >= self.recover:
                    self.recover = None
                    self.cwnd = max(self.ssthresh, 1.0)
                else:
                    self._emit(self.snd_una, min(self.mss, self.snd_nxt - self.snd_una))
            elif self.cwnd < self.ssthresh:
                self.cwnd += nseg
            else:
                self.cwnd += nseg / self.cwnd
            if self.flight > 0:
                self._arm_timer()
            else:
                self._stop_timer()
            if self.on_acked:
                self.on_acked()
        elif (acked_to == self.snd_una and self.flight > 0 and not seg.payload
              and not window_moved):
            self.dupacks += 1
            if self.dupacks == 3 and self.recover is None:
                self.fast_retransmits += 1
                self.recover = self.snd_nxt
                self.ssthresh = max(self.flight / self.mss / 2, 2.0)
                self.cwnd = self.ssthresh
                self._emit(self.snd_una, min(self.mss, self.flight))
        self._try_send()

    def _take_rtt_sample(self, acked_to: int) -> None:
        log = self._sent_log
        sample = None
        karn = False
        while log and log[0][0] <= acked_to:
            _, sent_at, retx = log.popleft()
            karn |= retx
            sample = sent_at
        if sample is not None and not karn:
            self._rtt_sample(self.loop.now - sample)

    def _account_round(self, newly: int) -> None:
        now = self.loop.now
        if self._round_start is None:
            self._round_start = now
        elif math.isfinite(self.min_rtt) and now >= self._round_start + self.min_rtt:
            self.rate_rounds.append((self._round_bytes, self._round_app_limited))
            self._round_start = now
            self._round_bytes = 0
            self._round_app_limited = False
        self._round_bytes += newly

    def _on_data(self, seg: TcpSegment) -> None:
        off = self.rcv_nxt + seq_diff(seg.seq, self.wire_rcv(self.rcv_nxt))
        data = seg.payload
        end = off + len(data)
        if end <= self.rcv_nxt:
            if seg.retransmit:
                self.spurious_segments += math.ceil(len(data) / self.mss)
        else:
            if off < self.rcv_nxt:
                data = data[self.rcv_nxt - off:]
                off = self.rcv_nxt
            if off == self.rcv_nxt:
                self._deliver(data)
                while self.rcv_nxt in self._ooo:
                    self._deliver(self._ooo.pop(self.rcv_nxt))
                # Drop buffered pieces now fully covered.
                for k in [k for k, v in self._ooo.items() if k + len(v) <= self.rcv_nxt]:
                    del self._ooo[k]
            else:
                prev = self._ooo.get(off)
                if prev is None or len(prev) < len(data):
                    self._ooo[off] = data
        self._send_ack()

    def _deliver(self, data: bytes) -> None:
        self.rcv_nxt += len(data)
        if self.on_data:
            self.on_data(data)

    def _advertise(self) -> int:
        if self.rwnd is None:
            right = self.rcv_nxt + UNLIMITED_WINDOW
        else:
            right = self.rcv_nxt + max(0, self.rwnd - self.backlog())
        right = max(right, self._adv_right)
        if self.frozen_right is not None:
            right = min(right, max(self.frozen_right, self.rcv_nxt))
        self._adv_right = right
        return right - self.rcv_nxt

    def window_gain(self) -> int:
        """How far the right edge would move if advertised now."""
        if self.rwnd is None:
            return 0
        right = self.rcv_nxt + max(0, self.rwnd - self.backlog())
        if self.frozen_right is not None:
            right = min(right, self.frozen_right)
        return right - self._adv_right

    def freeze_window(self) -> None:
        """Stop granting new receive window beyond what was already advertised."""
        self.frozen_right = self._adv_right

    def _send_ack(self) -> None:
        self.transmit(TcpSegment(seq=self.wire_seq(self.snd_nxt), ack=self.wire_rcv(self.rcv_nxt),
                                 window=self._advertise(), flags=FLAG_ACK, sent_at=self.loop.now))

    def window_update(self) -> None:
        """Send a pure ACK advertising the current window."""
        self._send_ack()

    @property
    def has_buffered_rx(self) -> bool:
        return bool(self._ooo)


def detect_slowstart_end(conn: SimTcpConn, growth_threshold: float = 1.5) -> bool:
    """True once cwnd has reached ssthresh or per-RTT delivery stops growing.

    Delivery is measured in consecutive windows of one minimum RTT; rounds
    where the sender ran out of data are ignored.
    """
    if conn.cwnd >= conn.ssthresh:
        return True
    rounds = [b for b, app_limited in conn.rate_rounds if not app_limited]
    if len(rounds) < 2 or rounds[-2] <= 0:
        return False
    return rounds[-1] / rounds[-2] < growth_threshold
