"""Chained split-TCP transfers and the proxied-pair offload scenario."""
from __future__ import annotations

import bisect
import csv
import hashlib
import io
import random
from dataclasses import dataclass, field

from ..pareto import ParetoPath
from ..topology import DistanceMatrix
from ..transfer import TransferModel
from .engine import EventLoop
from .offload import OffloadDriver, OffloadMachine, OffloadState, ProxyNode
from .seqspace import SEQ_MASK
from .tcp import Pipe, SimTcpConn

TRACE_COLUMNS = ("time_ms", "event", "conn_id", "cwnd", "goodput_bps", "state")


@dataclass(frozen=True)
class SimLink:
    rtt: float
    bandwidth: float | None = None  # bytes per ms
    loss: float = 0.0

    def __post_init__(self):
        if self.rtt <= 0:
            raise ValueError("link RTT must be positive")
        if not 0 <= self.loss < 1:
            raise ValueError("loss must be in [0, 1)")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")

    @property
    def one_way_delay(self) -> float:
        return self.rtt / 2


def make_payload(size: int, seed: int) -> bytes:
    return random.Random(seed).randbytes(size)


class Sink:
    """Final receiver: hashes the stream and logs cumulative delivery."""

    def __init__(self, loop: EventLoop):
        self.loop = loop
        self._hash = hashlib.sha256()
        self.received = 0
        self.times: list[float] = []
        self.totals: list[int] = []

    def __call__(self, data: bytes) -> None:
        self._hash.update(data)
        self.received += len(data)
        self.times.append(self.loop.now)
        self.totals.append(self.received)

    def hexdigest(self) -> str:
        return self._hash.hexdigest()

    def delivered_by(self, t: float) -> int:
        k = bisect.bisect_right(self.times, t)
        return self.totals[k - 1] if k else 0

    def goodput_bps(self, t0: float, t1: float) -> float:
        if t1 <= t0:
            raise ValueError("empty interval")
        return (self.delivered_by(t1) - self.delivered_by(t0)) * 8 / ((t1 - t0) / 1000)


class Trace:
    """Rows of (time_ms, event, conn_id, cwnd, goodput_bps, state)."""

    def __init__(self, loop: EventLoop, sink: Sink, state=lambda: ""):
        self.loop = loop
        self.sink = sink
        self.state = state
        self.rows: list[tuple] = []
        self._last_t = 0.0
        self._last_bytes = 0

    def event(self, name: str, conn: SimTcpConn | None = None) -> None:
        self.rows.append((round(self.loop.now, 6), name, conn.name if conn else "",
                          round(conn.cwnd, 3) if conn else "", "", self.state()))

    def sample(self, conns) -> None:
        now = self.loop.now
        got = self.sink.received
        bps = (got - self._last_bytes) * 8 / ((now - self._last_t) / 1000) if now > self._last_t else 0.0
        self._last_t, self._last_bytes = now, got
        for c in conns:
            self.rows.append((round(now, 6), "sample", c.name, round(c.cwnd, 3),
                              round(bps, 3), self.state()))

    def start_sampling(self, conns, interval: float) -> None:
        def tick():
            self.sample(conns)
            self.loop.after(interval, tick)
        self.loop.after(interval, tick)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        w.writerows(self.rows)
        return buf.getvalue()


def _connect(loop, a: SimTcpConn, b: SimTcpConn, link: SimLink, rng, mss, name):
    """Two pipes between a and b; returns (a->b, b->a) before sinks are set."""
    ab = Pipe(loop, link.one_way_delay, link.bandwidth, link.loss, rng, mss, f"{name}>")
    ba = Pipe(loop, link.one_way_delay, link.bandwidth, link.loss, rng, mss, f"{name}<")
    a.transmit = ab.send
    b.transmit = ba.send
    return ab, ba


@dataclass
class ChainResult:
    completion_ms: float
    delivered: int
    digest_ok: bool
    events: int
    rto_events: int
    retransmitted_segments: int
    spurious_segments: int
    trace: Trace = field(repr=False)


def run_chain(links: list[SimLink], size: int, m: TransferModel = TransferModel(), *,
              seed: int = 0, handshake: bool = False, max_events: int = 5_000_000,
              min_rto: float = 200.0, sample_interval: float | None = None,
              isn_seed: int | None = None) -> ChainResult:
    """Relay ``size`` bytes over consecutive split-TCP hops.

    Every hop is an independent, already established connection; proxies
    write bytes into the next hop as soon as they arrive in order.
    Completion is measured from the first send at the head to the last
    byte at the tail (plus one RTT per hop when ``handshake`` is set).
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    if not links:
        raise ValueError("a chain needs at least one link")
    loop = EventLoop(max_events)
    rng = random.Random(seed)
    isn_rng = random.Random(seed if isn_seed is None else isn_seed)
    sink = Sink(loop)
    coalesce = all(l.bandwidth is None and l.loss == 0 for l in links)
    senders, receivers = [], []
    for h, link in enumerate(links):
        s = SimTcpConn(loop, f"hop{h}.snd", isn_local=isn_rng.getrandbits(32),
                       isn_remote=isn_rng.getrandbits(32), icw=m.icw, mss=m.mss,
                       min_rto=min_rto, coalesce=coalesce)
        r = SimTcpConn(loop, f"hop{h}.rcv", isn_local=s.isn_remote, isn_remote=s.isn_local,
                       icw=m.icw, mss=m.mss, min_rto=min_rto, coalesce=coalesce)
        ab, ba = _connect(loop, s, r, link, rng, m.mss, f"hop{h}")
        ab.sink, ba.sink = r.receive, s.receive
        senders.append(s)
        receivers.append(r)
    for h in range(len(links) - 1):
        receivers[h].on_data = senders[h + 1].write
    receivers[-1].on_data = sink

    trace = Trace(loop, sink)
    for c in senders:
        c.log_event = trace.event
    if sample_interval:
        trace.start_sampling(senders, sample_interval)

    payload = make_payload(size, seed)
    done = {}

    def check_done(data, inner=sink):
        inner(data)
        if inner.received >= size and "t" not in done:
            done["t"] = loop.now
            loop.stop()
    receivers[-1].on_data = check_done

    start = sum(l.rtt for l in links) if handshake else 0.0
    loop.at(start, senders[0].write, payload)
    trace.rows.append((start, "start", senders[0].name, float(m.icw), "", ""))
    loop.run()
    if "t" not in done:
        raise RuntimeError("transfer did not complete")
    trace.rows.append((round(done["t"], 6), "complete", receivers[-1].name, "", "", ""))
    return ChainResult(
        completion_ms=done["t"],
        delivered=sink.received,
        digest_ok=sink.hexdigest() == hashlib.sha256(payload).hexdigest(),
        events=loop.processed,
        rto_events=sum(c.rto_events for c in senders),
        retransmitted_segments=sum(c.retransmitted_segments for c in senders),
        spurious_segments=sum(c.spurious_segments for c in receivers),
        trace=trace,
    )


def simulate_chain_transfer(chain: ParetoPath, size: int, d: DistanceMatrix,
                            m: TransferModel = TransferModel(), **kw) -> float:
    """Simulated completion time (ms) of ``chain`` on lossless, unlimited links."""
    hops = chain.hops
    if len(hops) < 2:
        raise ValueError("a chain needs at least two nodes")
    for a in hops:
        if not 0 <= a < d.n:
            raise ValueError(f"chain node {a} outside the matrix")
    links = [SimLink(float(d[a, b])) for a, b in zip(hops, hops[1:])]
    return run_chain(links, size, m, **kw).completion_ms


@dataclass(frozen=True)
class OffloadScenario:
    """A sender, one proxy and a receiver; the downstream leg is the bottleneck.

    Windows are in bytes. The defaults give a 100 ms end-to-end RTT split
    50/50 over a 10 Mbit/s bottleneck.
    """

    rtt_up: float = 50.0
    rtt_down: float = 50.0
    bottleneck: float = 1250.0  # bytes per ms
    receiver_window: int | None = None  # default: 1.28 x end-to-end BDP
    proxy_window: int | None = None  # default: twice the receiver window
    size: int = 10_000_000
    icw: int = 10
    mss: int = 1460
    min_rto: float = 10.0
    rto_granularity: float = 20.0
    ramp: bool = True
    ramp_step: float = 10.0
    growth_threshold: float = 1.5
    not_before: float = 3000.0
    measure_window: float = 1000.0
    settle: float = 1000.0
    sample_interval: float = 50.0
    seed: int = 1
    identical_isn: bool = False
    max_events: int = 5_000_000

    @property
    def rwnd_receiver(self) -> int:
        if self.receiver_window is not None:
            return self.receiver_window
        return int(1.28 * self.bottleneck * (self.rtt_up + self.rtt_down))

    @property
    def rwnd_proxy(self) -> int:
        return self.proxy_window if self.proxy_window is not None else 2 * self.rwnd_receiver


@dataclass
class OffloadResult:
    machine: OffloadMachine
    trace: Trace = field(repr=False)
    digest_ok: bool = False
    delivered: int = 0
    completion_ms: float | None = None
    goodput_before_bps: float = 0.0
    goodput_after_bps: float = 0.0
    rto_events: int = 0
    retransmitted_segments: int = 0
    spurious_segments: int = 0
    proxy_segments_after_offload: int = 0
    switched_segments: int = 0
    min_goodput_after_bps: float = 0.0

    @property
    def offload_time(self) -> float | None:
        return self.machine.time_of(OffloadState.OFFLOADED)


def run_offload(sc: OffloadScenario, machine: OffloadMachine | None = None) -> OffloadResult:
    """Proxy a bulk transfer, then offload the proxy mid-stream."""
    loop = EventLoop(sc.max_events)
    rng = random.Random(sc.seed)
    machine = machine or OffloadMachine(ramp=sc.ramp, ramp_step=sc.ramp_step,
                                        growth_threshold=sc.growth_threshold,
                                        not_before=sc.not_before)
    if sc.identical_isn:
        isn_a = isn_b = rng.getrandbits(32)
        isn_p_up, isn_p_down = isn_b, isn_a
    else:
        isn_a, isn_b, isn_p_up, isn_p_down = (rng.getrandbits(32) for _ in range(4))
    common = dict(icw=sc.icw, mss=sc.mss, min_rto=sc.min_rto, rto_granularity=sc.rto_granularity)
    sender = SimTcpConn(loop, "sender", isn_local=isn_a, isn_remote=isn_p_up, **common)
    p_up = SimTcpConn(loop, "proxy.up", isn_local=isn_p_up, isn_remote=isn_a,
                      rwnd=sc.rwnd_proxy, **common)
    p_down = SimTcpConn(loop, "proxy.down", isn_local=isn_p_down, isn_remote=isn_b, **common)
    receiver = SimTcpConn(loop, "receiver", isn_local=isn_b, isn_remote=isn_p_down,
                          rwnd=sc.rwnd_receiver, **common)

    up_link = SimLink(sc.rtt_up)
    down_link = SimLink(sc.rtt_down, sc.bottleneck)
    a_p, p_a = _connect(loop, sender, p_up, up_link, rng, sc.mss, "up")
    p_b, b_p = _connect(loop, p_down, receiver, down_link, rng, sc.mss, "down")

    node = ProxyNode(loop, "proxy", p_up, p_down)
    node.up_pipe_out, node.down_pipe_out = p_a, p_b
    a_p.sink = node.from_upstream
    p_a.sink = sender.receive
    p_b.sink = receiver.receive
    b_p.sink = node.from_downstream

    sink = Sink(loop)
    trace = Trace(loop, sink, state=lambda: machine.state.name)
    payload = make_payload(sc.size, sc.seed)
    done = {}

    def deliver(data):
        sink(data)
        if sink.received >= sc.size and "t" not in done:
            done["t"] = loop.now
            loop.stop()
    receiver.on_data = deliver
    for c in (sender, p_up, p_down, receiver):
        c.log_event = trace.event

    OffloadDriver(loop, node, machine, upstream_sender=sender, downstream_receiver=receiver,
                  rtt_up=sc.rtt_up, rtt_down=sc.rtt_down,
                  log=lambda ev: trace.event(ev, None))
    trace.start_sampling([sender, p_down], sc.sample_interval)
    loop.at(0.0, sender.write, payload)
    loop.run()

    res = OffloadResult(machine=machine, trace=trace, delivered=sink.received,
                        completion_ms=done.get("t"))
    res.digest_ok = (sink.received == sc.size
                     and sink.hexdigest() == hashlib.sha256(payload).hexdigest())
    conns = (sender, p_up, p_down, receiver)
    res.rto_events = sum(c.rto_events for c in conns)
    res.retransmitted_segments = sum(c.retransmitted_segments for c in conns)
    res.spurious_segments = sum(c.spurious_segments for c in conns)
    res.proxy_segments_after_offload = node.proxy_segments_after_offload
    res.switched_segments = node.switched_segments
    t_off = res.offload_time
    t_ss = machine.time_of(OffloadState.SS_ENDED)
    if t_ss is not None:
        res.goodput_before_bps = sink.goodput_bps(t_ss - sc.measure_window, t_ss)
    if t_off is not None:
        t0 = t_off + sc.settle
        res.goodput_after_bps = sink.goodput_bps(t0, t0 + sc.measure_window)
        # Worst 100 ms right after the handoff, to expose a throughput collapse.
        res.min_goodput_after_bps = min(
            sink.goodput_bps(t_off + k * 100.0, t_off + (k + 1) * 100.0) for k in range(10))
    return res


def translation_offsets(res: OffloadResult) -> tuple[int, int]:
    t = res.machine.translation
    return (t.delta_fwd & SEQ_MASK, t.delta_rev & SEQ_MASK) if t else (0, 0)
