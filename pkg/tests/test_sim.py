import csv
import io
import random

import pytest

from proxychain.pareto import ParetoPath
from proxychain.sim import EventLoop, SimLink, SimTcpConn, SimulationDiverged, detect_slowstart_end
from proxychain.sim.chain import TRACE_COLUMNS, run_chain, simulate_chain_transfer
from proxychain.sim.scenario import (ChainScenario, ScenarioError, parse_scenario, run_scenario,
                                     with_seed)
from proxychain.sim.seqspace import TcpSegment
from proxychain.sim.tcp import Pipe
from proxychain.topology import DistanceMatrix
from proxychain.transfer import TransferModel, link_chain_time


# -- engine --------------------------------------------------------------
def test_events_fire_in_time_then_insertion_order():
    loop, seen = EventLoop(), []
    loop.at(5, seen.append, "c")
    loop.at(1, seen.append, "a")
    loop.at(5, seen.append, "d")
    loop.at(1, seen.append, "b")
    assert loop.run() == 5
    assert seen == ["a", "b", "c", "d"]


def test_cancel_and_until():
    loop, seen = EventLoop(), []
    t = loop.at(2, seen.append, "x")
    loop.at(3, seen.append, "y")
    loop.at(10, seen.append, "z")
    t.cancel()
    assert loop.pending() == 2
    assert loop.run(until=5) == 5
    assert seen == ["y"]
    with pytest.raises(ValueError):
        loop.at(1, seen.append, "past")


def test_event_cap():
    loop = EventLoop(max_events=100)

    def again():
        loop.after(1, again)
    loop.at(0, again)
    with pytest.raises(SimulationDiverged):
        loop.run()


# -- pipes ---------------------------------------------------------------
def _collect(pipe):
    got = []
    pipe.sink = lambda seg: got.append((pipe.loop.now, seg))
    return got


def test_pipe_fifo_with_delay_change():
    loop = EventLoop()
    p = Pipe(loop, 10.0)
    got = _collect(p)
    loop.at(0, p.send, TcpSegment(1, 0))
    p.extra_delay = 0.0
    loop.at(1, lambda: (setattr(p, "extra_delay", -5.0), p.send(TcpSegment(2, 0))))
    loop.run()
    # A shrinking delay never reorders segments.
    assert [s.seq for _, s in got] == [1, 2]
    assert got[1][0] >= got[0][0]


def test_pipe_bandwidth_serializes_and_splits():
    loop = EventLoop()
    p = Pipe(loop, 5.0, bandwidth=100.0, mss=1000)
    got = _collect(p)
    loop.at(0, p.send, TcpSegment(0, 0, payload=b"x" * 2500))
    loop.run()
    assert [len(s.payload) for _, s in got] == [1000, 1000, 500]
    assert [t for t, _ in got] == [15.0, 25.0, 30.0]
    assert [s.seq for _, s in got] == [0, 1000, 2000]


def test_pipe_loss_spares_pure_acks():
    loop = EventLoop()
    p = Pipe(loop, 1.0, loss=0.5, rng=random.Random(3))
    got = _collect(p)
    for k in range(200):
        p.send(TcpSegment(k, 0, payload=b"d"))
        p.send(TcpSegment(k, 0))
    loop.run()
    assert 50 < p.dropped < 150
    assert sum(1 for _, s in got if not s.payload) == 200


def test_pipe_validation():
    loop = EventLoop()
    with pytest.raises(ValueError):
        Pipe(loop, 0)
    with pytest.raises(ValueError):
        Pipe(loop, 1, loss=1.0)
    with pytest.raises(ValueError):
        Pipe(loop, 1, bandwidth=0)


# -- chains --------------------------------------------------------------
@pytest.mark.parametrize("rtts, size, want", [
    ([50, 50], 450000, 250.0),       # 5 rounds, 2 hops
    ([100], 450000, 450.0),          # direct: 50 + 4 * 100
    ([12.5, 30, 7.5], 14600, 25.0),  # one round
    ([20, 5, 40], 43801, 112.5),     # three rounds
])
def test_chain_matches_model(rtts, size, want):
    res = run_chain([SimLink(r) for r in rtts], size)
    assert res.completion_ms == pytest.approx(want, abs=1e-9)
    assert res.digest_ok and res.delivered == size
    assert res.rto_events == 0 and res.retransmitted_segments == 0


def test_split_beats_direct_over_five_rounds():
    split = run_chain([SimLink(50), SimLink(50)], 450000).completion_ms
    direct = run_chain([SimLink(100)], 450000).completion_ms
    assert direct / split == pytest.approx(450 / 250)


def test_handshake_adds_one_rtt_per_hop():
    base = run_chain([SimLink(10), SimLink(30)], 14600).completion_ms
    hs = run_chain([SimLink(10), SimLink(30)], 14600, handshake=True).completion_ms
    assert hs - base == pytest.approx(40.0)


def test_chain_integrity_under_loss_and_bandwidth():
    links = [SimLink(20, bandwidth=500, loss=0.02), SimLink(30, bandwidth=300, loss=0.01)]
    res = run_chain(links, 300000, seed=4)
    assert res.digest_ok and res.delivered == 300000
    assert res.retransmitted_segments > 0


def test_chain_is_deterministic():
    links = [SimLink(15, bandwidth=400, loss=0.02), SimLink(25)]
    a = run_chain(links, 200000, seed=9, sample_interval=20)
    b = run_chain(links, 200000, seed=9, sample_interval=20)
    assert a.completion_ms == b.completion_ms
    assert a.trace.to_csv() == b.trace.to_csv()


def test_trace_columns():
    res = run_chain([SimLink(10), SimLink(10)], 50000, sample_interval=5)
    rows = list(csv.reader(io.StringIO(res.trace.to_csv())))
    assert tuple(rows[0]) == TRACE_COLUMNS
    events = {r[1] for r in rows[1:]}
    assert {"start", "complete", "sample"} <= events


def test_simulate_chain_transfer():
    d = DistanceMatrix([[0, 10, 50], [10, 0, 10], [50, 10, 0]])
    p = ParetoPath((0, 1, 2), 20.0, 10.0)
    assert simulate_chain_transfer(p, 450000, d) == pytest.approx(link_chain_time([10, 10], 5))
    with pytest.raises(ValueError):
        simulate_chain_transfer(ParetoPath((0, 5), 1.0, 1.0), 10, d)


def test_run_chain_validation():
    with pytest.raises(ValueError):
        run_chain([], 10)
    with pytest.raises(ValueError):
        run_chain([SimLink(10)], 0)


# -- slow-start detection ------------------------------------------------
def _conn(**kw):
    return SimTcpConn(EventLoop(), "c", isn_local=0, isn_remote=0, **kw)


def test_slowstart_end_on_ssthresh():
    c = _conn(ssthresh=10)
    assert detect_slowstart_end(c)


def test_slowstart_end_on_flat_delivery():
    c = _conn()
    c.rate_rounds = [(10, False), (20, False)]
    assert not detect_slowstart_end(c)
    c.rate_rounds.append((24, False))
    assert detect_slowstart_end(c)


def test_slowstart_ignores_app_limited_rounds():
    c = _conn()
    c.rate_rounds = [(10, False), (20, False), (3, True)]
    assert not detect_slowstart_end(c)
    assert not detect_slowstart_end(_conn())


# -- scenarios -----------------------------------------------------------
def test_parse_chain_scenario():
    sc = parse_scenario("kind = chain\nlinks = 10, 20\nsize = 1e5\nbandwidth = 100, none\n"
                        "loss = 0.01\nseed = 3\n")
    assert isinstance(sc, ChainScenario)
    assert [l.rtt for l in sc.links] == [10, 20]
    assert [l.bandwidth for l in sc.links] == [100, None]
    assert [l.loss for l in sc.links] == [0.01, 0.01]
    assert sc.size == 100000 and sc.seed == 3 and not sc.lossless_unlimited
    assert with_seed(sc, 8).seed == 8 and with_seed(sc, None) is sc


@pytest.mark.parametrize("text, fragment", [
    ("links = 10\n", "need"),
    ("links = 10\nsize = 5\ncolour = red\n", "unknown keys"),
    ("kind = teleport\n", "unknown scenario kind"),
    ("links = 10, 20\nsize = 5\nbandwidth = 1, 2, 3\n", "bandwidth"),
    ("links = 10\nsize = lots\n", "lots"),
    ("kind = offload\nramp_speed = 3\n", "unknown keys"),
])
def test_scenario_errors(text, fragment):
    with pytest.raises(ScenarioError, match=fragment):
        parse_scenario(text)


def test_run_chain_scenario_file(data_dir):
    sc = parse_scenario((data_dir / "scenarios" / "split_vs_direct.ini").read_text())
    out = run_scenario(sc)
    assert out.kind == "chain" and not out.failed
    s = out.summary
    assert s["simulated_ms"] == pytest.approx(250.0)
    assert s["speedup"] == pytest.approx(s["model_speedup"])


def test_scenario_model_agreement_flag():
    sc = ChainScenario(links=(SimLink(10),), size=14600, model=TransferModel())
    assert not run_scenario(sc, tolerance=0.0).failed
