import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_mesh
from oracles import all_simple_paths, brute_front, path_stats
from proxychain.pareto import (PathDP, ParetoFront, ParetoPath, bottleneck_value, compute_ab_sets,
                               minimax_path, pareto_baseline, pareto_optimized, shortest_path,
                               sorted_links)
from proxychain.topology import DistanceMatrix

TRIANGLE = DistanceMatrix([[0, 10, 50], [10, 0, 10], [50, 10, 0]])


def rows(front, ij):
    return [(p.max_link, p.length, p.hop_count, p.hops) for p in front[ij]]


def test_triangle_front():
    f = pareto_optimized(TRIANGLE)
    assert [p.hops for p in f[(0, 2)]] == [(0, 1, 2)]
    assert f[(0, 2)][0].length == 20 and f[(0, 2)][0].max_link == 10
    assert [p.hops for p in f[(2, 0)]] == [(2, 1, 0)]
    assert len(f) == 6


def test_two_nodes():
    d = DistanceMatrix([[0, 7], [7, 0]])
    for fn in (pareto_baseline, pareto_optimized):
        f = fn(d)
        assert rows(f, (0, 1)) == [(7.0, 7.0, 2, (0, 1))]
        assert rows(f, (1, 0)) == [(7.0, 7.0, 2, (1, 0))]


def test_ab_sets_two_nodes():
    dp = PathDP(DistanceMatrix([[0, 7], [7, 0]]))
    dp.step_optimized()
    assert compute_ab_sets(dp, 1) == ({1}, {0})


def test_ab_sets_rejects_wrong_stage():
    dp = PathDP(TRIANGLE)
    with pytest.raises(ValueError):
        compute_ab_sets(dp, 1)


@pytest.mark.parametrize("seed", range(40))
def test_matches_exhaustive_enumeration(seed):
    d = random_mesh(seed)
    ref = brute_front(d)
    opt = pareto_optimized(d, check_invariants=True)
    assert pareto_baseline(d, check_invariants=True) == opt
    assert sorted(opt.pairs()) == sorted(ref)
    for ij, want in ref.items():
        assert rows(opt, ij) == want


@pytest.mark.parametrize("seed", range(10))
def test_matches_enumeration_integer_rtts(seed):
    # Integer RTTs create many exact ties between distinct paths.
    d = random_mesh(1000 + seed, integer_rtts=True, rtt_range=(1, 6))
    ref = brute_front(d)
    opt = pareto_optimized(d)
    for ij, want in ref.items():
        assert rows(opt, ij) == want


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 7), st.integers(0, 2**32 - 1), st.booleans())
def test_baseline_equals_optimized_property(n, seed, integer):
    d = random_mesh(seed, n, integer_rtts=integer, rtt_range=(1, 9))
    assert pareto_baseline(d) == pareto_optimized(d)


@pytest.mark.parametrize("seed", range(8))
def test_front_structure(seed):
    d = random_mesh(seed, 12)
    f = pareto_optimized(d)
    for (i, j), entries in f.items():
        maxes = [p.max_link for p in entries]
        lens = [p.length for p in entries]
        assert all(a < b for a, b in zip(maxes, maxes[1:]))
        assert all(a > b for a, b in zip(lens, lens[1:]))
        assert maxes[0] == bottleneck_value(d, i, j)
        assert abs(lens[-1] - d[i, j]) <= 1e-9
        for p in entries:
            assert p.hops[0] == i and p.hops[-1] == j
            assert len(set(p.hops)) == len(p.hops)
            mx, ln = path_stats(d.array, p.hops)
            assert (mx, ln) == (p.max_link, p.length)


@pytest.mark.parametrize("seed", range(6))
def test_ab_sets_disjoint_and_prune_exactly(seed):
    d = random_mesh(seed, 9)
    base, opt = PathDP(d), PathDP(d)
    while not base.done:
        base.step_baseline()
        opt.step_optimized()
        a, b = compute_ab_sets(opt, opt.h)
        assert not a & b
        assert np.array_equal(base.D, opt.D)
        assert np.array_equal(base.H, opt.H)
    assert opt.pair_checks < base.pair_checks
    assert base.front() == opt.front()


def test_links_sorted_by_rtt():
    d = random_mesh(4, 10)
    links = sorted_links(d)
    assert len(links) == 10 * 9 // 2
    assert [l.rtt for l in links] == sorted(l.rtt for l in links)
    assert all(l.a < l.b for l in links)


def test_front_text_roundtrip():
    f = pareto_optimized(random_mesh(2, 8))
    g = ParetoFront.from_text(f.to_text())
    assert g == f
    assert g.total_entries() == f.total_entries()


@pytest.mark.parametrize("text", [
    "pair 0 1 maxlink 1 length 1 hops 2 path 0,2\n",
    "pair 0 1 maxlink 1 length 1 hops 3 path 0,1\n",
    "pair 0 1 maxlink 1\n",
])
def test_front_text_errors(text):
    with pytest.raises(ValueError):
        ParetoFront.from_text(text)


def test_path_validation():
    with pytest.raises(ValueError):
        ParetoPath.from_hops((0,), TRIANGLE)
    with pytest.raises(ValueError):
        ParetoPath.from_hops((0, 1, 0), TRIANGLE)
    p = ParetoPath.from_hops((0, 1, 2), TRIANGLE)
    assert (p.source, p.target, p.hop_count) == (0, 2, 3)
    assert p.reversed().hops == (2, 1, 0)


@pytest.mark.parametrize("seed", range(10))
def test_baselines_against_enumeration(seed):
    d = random_mesh(seed, 7)
    for (i, j), paths in all_simple_paths(d.n).items():
        stats = [path_stats(d.array, p) for p in paths]
        bottleneck = min(mx for mx, _ in stats)
        sp = shortest_path(d, i, j)
        mm = minimax_path(d, i, j)
        assert math.isclose(sp.length, min(ln for _, ln in stats), abs_tol=1e-9)
        assert mm.max_link == bottleneck == bottleneck_value(d, i, j)
        # the minimax path is the shortest among bottleneck-optimal ones
        best = min(ln for mx, ln in stats if mx == bottleneck)
        assert math.isclose(mm.length, best, abs_tol=1e-9)


def test_triangle_baselines():
    assert shortest_path(TRIANGLE, 0, 2).hops == (0, 1, 2)
    assert minimax_path(TRIANGLE, 0, 2).hops == (0, 1, 2)
