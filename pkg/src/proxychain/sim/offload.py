"""Proxy offload: slow-start end, delay ramp, buffer drain, switch handoff."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

from .seqspace import FORWARD, REVERSE, SeqTranslation, TcpSegment, translate_segment
from .tcp import detect_slowstart_end


class OffloadState(IntEnum):
    PROXYING = 0
    SS_ENDED = 1
    DELAY_RAMP = 2
    DRAIN_WAIT = 3
    OFFLOADED = 4


class OffloadError(RuntimeError):
    pass


@dataclass
class OffloadMachine:
    """Per-proxy offload lifecycle.

    ``injected_delay``/``target_delay`` describe the upstream leg, the one
    facing the data sender; the downstream leg ramps towards its own target
    in the same steps.
    """

    ramp: bool = True
    ramp_step: float = 10.0
    growth_threshold: float = 1.5
    not_before: float = 0.0
    poll_interval: float = 1.0
    drain_timeout: float = 30_000.0
    state: OffloadState = OffloadState.PROXYING
    injected_delay: float = 0.0
    target_delay: float = 0.0
    injected_down: float = 0.0
    target_down: float = 0.0
    translation: SeqTranslation | None = None
    transitions: list = field(default_factory=list)  # (time_ms, OffloadState)
    ramp_steps: list = field(default_factory=list)  # (time_ms, injected_up, injected_down)

    def __post_init__(self):
        if self.ramp_step <= 0:
            raise ValueError("ramp_step must be positive")

    def _enter(self, state: OffloadState, now: float) -> None:
        if state <= self.state:
            raise OffloadError(f"state regression {self.state.name} -> {state.name}")
        self.state = state
        self.transitions.append((now, state))

    def time_of(self, state: OffloadState) -> float | None:
        for t, s in self.transitions:
            if s == state:
                return t
        return None


class ProxyNode:
    """A relay between an upstream and a downstream connection.

    Until offload, segments arriving from either side go to the proxy's TCP
    end-points. Afterwards the node acts as a switch: segments only pass
    through the sequence translation and are never handed to the proxy.
    """

    def __init__(self, loop, name: str, up_conn, down_conn):
        self.loop = loop
        self.name = name
        self.up = up_conn  # receives from upstream
        self.down = down_conn  # sends downstream
        self.up.on_data = self.down.write
        self.up.backlog = lambda: self.down.unacked_or_unsent
        self.down.on_acked = self._relay_progress
        self.up_pipe_out = None  # towards upstream neighbour
        self.down_pipe_out = None  # towards downstream neighbour
        self.translation: SeqTranslation | None = None
        self.switched_segments = 0
        self.proxy_segments_after_offload = 0
        self.machine: OffloadMachine | None = None

    def _relay_progress(self) -> None:
        # Relayed bytes were acked downstream: reopen the upstream window
        # once it can grow by a full segment.
        if self.translation is None and self.up.window_gain() >= self.up.mss:
            self.up.window_update()

    @property
    def offloaded(self) -> bool:
        return self.translation is not None

    def from_upstream(self, seg: TcpSegment) -> None:
        if self.translation is not None:
            self.switched_segments += 1
            self.down_pipe_out.send(translate_segment(seg, self.translation, FORWARD))
        else:
            self.up.receive(seg)

    def from_downstream(self, seg: TcpSegment) -> None:
        if self.translation is not None:
            self.switched_segments += 1
            self.up_pipe_out.send(translate_segment(seg, self.translation, REVERSE))
        else:
            self.down.receive(seg)

    # Guard: the proxy's end-points must stay silent once offloaded.
    def _guard(self, conn) -> None:
        inner = conn.receive

        def receive(seg):
            if self.translation is not None:
                self.proxy_segments_after_offload += 1
            inner(seg)
        conn.receive = receive

    def install_guards(self) -> None:
        self._guard(self.up)
        self._guard(self.down)


class OffloadDriver:
    """Runs an OffloadMachine against a ProxyNode inside a simulation."""

    def __init__(self, loop, node: ProxyNode, machine: OffloadMachine, *,
                 upstream_sender, downstream_receiver, rtt_up: float, rtt_down: float,
                 log=None):
        self.loop = loop
        self.node = node
        self.m = machine
        self.sender = upstream_sender
        self.receiver = downstream_receiver
        self.rtt_up = rtt_up
        self.rtt_down = rtt_down
        self.log = log or (lambda event: None)
        node.machine = machine
        node.install_guards()
        self._drain_started = None
        loop.after(machine.poll_interval, self._poll)

    def _poll(self) -> None:
        m, now = self.m, self.loop.now
        if m.state == OffloadState.PROXYING:
            if now >= m.not_before and detect_slowstart_end(self.sender, m.growth_threshold) \
                    and detect_slowstart_end(self.node.down, m.growth_threshold):
                m._enter(OffloadState.SS_ENDED, now)
                self.log("ss_ended")
                self._start_ramp()
                return
        elif m.state == OffloadState.DRAIN_WAIT:
            if self._drained():
                self._handoff()
                return
            if now - self._drain_started > m.drain_timeout:
                raise OffloadError(f"buffers did not drain within {m.drain_timeout} ms")
        self.loop.after(m.poll_interval, self._poll)

    def _start_ramp(self) -> None:
        m = self.m
        # Post-offload RTT is the sum of both legs; each end-point currently
        # sees only its own leg.
        m.target_delay = self.rtt_down
        m.target_down = self.rtt_up
        m._enter(OffloadState.DELAY_RAMP, self.loop.now)
        self.log("delay_ramp")
        if m.ramp:
            self._ramp_step()
        else:
            # The whole increase lands in one jump, at handoff, exactly as
            # an unprepared offload looks to the end-points.
            self._begin_drain()

    def _begin_drain(self) -> None:
        m = self.m
        m._enter(OffloadState.DRAIN_WAIT, self.loop.now)
        self.log("drain_wait")
        self._drain_started = self.loop.now
        self.node.up.freeze_window()
        self.loop.after(m.poll_interval, self._poll)

    def _ramp_step(self) -> None:
        m = self.m
        step = m.ramp_step
        m.injected_delay = min(m.injected_delay + step, m.target_delay)
        m.injected_down = min(m.injected_down + step, m.target_down)
        # Delay the proxy's own output on each leg.
        self.node.up_pipe_out.extra_delay = m.injected_delay
        self.node.down_pipe_out.extra_delay = m.injected_down
        m.ramp_steps.append((self.loop.now, m.injected_delay, m.injected_down))
        self.log("ramp_step")
        if m.injected_delay >= m.target_delay and m.injected_down >= m.target_down:
            self._begin_drain()
        else:
            # One step per RTT as observed by the upstream end-point.
            self.loop.after(self.rtt_up + m.injected_delay, self._ramp_step)

    def _drained(self) -> bool:
        up, down = self.node.up, self.node.down
        return (self.sender.flight == 0
                and self.sender.snd_nxt == up.rcv_nxt
                and not up.has_buffered_rx
                and down.unacked_or_unsent == 0
                and not self.receiver.has_buffered_rx
                and self.receiver.rcv_nxt == down.snd_nxt)

    def _handoff(self) -> None:
        node, m = self.node, self.m
        up, down = node.up, node.down
        t = SeqTranslation.splice(up_rcv_nxt=up.wire_rcv(up.rcv_nxt),
                                  down_snd_nxt=down.wire_seq(down.snd_nxt),
                                  down_rcv_nxt=down.wire_rcv(down.rcv_nxt),
                                  up_snd_nxt=up.wire_seq(up.snd_nxt))
        m.translation = t
        # Injected delay lived in the proxy; the switched path has none.
        node.up_pipe_out.extra_delay = 0.0
        node.down_pipe_out.extra_delay = 0.0
        # Reopen the sender's window on behalf of the downstream end-point,
        # expressed in the downstream connection's sequence space.
        reopen = TcpSegment(seq=down.wire_rcv(down.rcv_nxt), ack=down.wire_seq(down.snd_nxt),
                            window=max(0, down.peer_right - down.snd_una), sent_at=self.loop.now)
        node.translation = t
        m._enter(OffloadState.OFFLOADED, self.loop.now)
        self.log("offloaded")
        node.up_pipe_out.send(translate_segment(reopen, t, REVERSE))
