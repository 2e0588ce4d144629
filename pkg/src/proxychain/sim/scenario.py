"""Key-value scenario files for the simulate command.

A scenario is a flat ``key = value`` file (``#`` comments allowed)::

    kind = chain
    links = 50, 50          # per-hop RTTs in ms
    size = 450000
    direct_rtt = 100        # optional: also simulate a single direct link
    seed = 7

Offload scenarios use ``kind = offload`` and the field names of
:class:`~proxychain.sim.chain.OffloadScenario`.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

from ..transfer import TransferModel, link_chain_time, rounds_for_size
from .chain import OffloadScenario, SimLink, run_chain, run_offload

_SECTION = "scenario"


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ChainScenario:
    links: tuple[SimLink, ...]
    size: int
    model: TransferModel = TransferModel()
    seed: int = 0
    handshake: bool = False
    direct_rtt: float | None = None
    min_rto: float = 200.0
    max_events: int = 5_000_000
    sample_interval: float | None = None

    @property
    def lossless_unlimited(self) -> bool:
        return all(l.bandwidth is None and l.loss == 0 for l in self.links)


@dataclass
class ScenarioOutcome:
    kind: str
    summary: dict = field(default_factory=dict)
    trace_csv: str = ""
    failed: list = field(default_factory=list)  # names of violated checks


def _floats(raw: str) -> list[float]:
    return [float(x) for x in raw.replace(",", " ").split()]


def _per_link(raw: str | None, k: int, name: str) -> list:
    if raw is None or raw.strip() in ("", "none", "unlimited"):
        return [None] * k
    vals = [None if x in ("none", "unlimited") else float(x)
            for x in raw.replace(",", " ").split()]
    if len(vals) == 1:
        vals *= k
    if len(vals) != k:
        raise ScenarioError(f"{name}: expected 1 or {k} values, got {len(vals)}")
    return vals


def parse_scenario(text: str):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(f"[{_SECTION}]\n" + text)
    except configparser.Error as exc:
        raise ScenarioError(str(exc)) from exc
    s = cp[_SECTION]
    kind = s.get("kind", "chain").strip()
    try:
        if kind == "chain":
            return _chain_from(s)
        if kind == "offload":
            return _offload_from(s)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc)) from exc
    raise ScenarioError(f"unknown scenario kind {kind!r}")


def _chain_from(s) -> ChainScenario:
    known = {"kind", "links", "size", "bandwidth", "loss", "seed", "handshake", "direct_rtt",
             "icw", "mss", "max_rounds", "min_rto", "max_events", "sample_interval"}
    _reject_unknown(s, known)
    if "links" not in s or "size" not in s:
        raise ScenarioError("chain scenarios need 'links' and 'size'")
    rtts = _floats(s["links"])
    if not rtts:
        raise ScenarioError("links: at least one RTT required")
    bws = _per_link(s.get("bandwidth"), len(rtts), "bandwidth")
    losses = [x or 0.0 for x in _per_link(s.get("loss"), len(rtts), "loss")]
    links = tuple(SimLink(r, b, l) for r, b, l in zip(rtts, bws, losses))
    model = TransferModel(s.getint("icw", 10), s.getint("mss", 1460), s.getint("max_rounds", 16))
    direct = s.get("direct_rtt")
    interval = s.get("sample_interval")
    return ChainScenario(links=links, size=int(float(s["size"])), model=model,
                         seed=s.getint("seed", 0), handshake=s.getboolean("handshake", False),
                         direct_rtt=float(direct) if direct else None,
                         min_rto=s.getfloat("min_rto", 200.0),
                         max_events=s.getint("max_events", 5_000_000),
                         sample_interval=float(interval) if interval else None)


def _offload_from(s) -> OffloadScenario:
    fields = {f.name: f for f in dataclasses.fields(OffloadScenario)}
    _reject_unknown(s, set(fields) | {"kind"})
    kw = {}
    for key, raw in s.items():
        if key == "kind":
            continue
        default = fields[key].default
        if isinstance(default, bool):
            kw[key] = s.getboolean(key)
        elif isinstance(default, int) or key in ("receiver_window", "proxy_window"):
            kw[key] = int(float(raw))
        else:
            kw[key] = float(raw)
    return OffloadScenario(**kw)


def _reject_unknown(s, known) -> None:
    extra = sorted(set(s) - set(known))
    if extra:
        raise ScenarioError(f"unknown keys: {', '.join(extra)}")


def with_seed(sc, seed: int | None):
    return sc if seed is None else dataclasses.replace(sc, seed=seed)


def run_scenario(sc, tolerance: float = 0.05) -> ScenarioOutcome:
    if isinstance(sc, ChainScenario):
        return _run_chain_scenario(sc, tolerance)
    if isinstance(sc, OffloadScenario):
        return _run_offload_scenario(sc)
    raise TypeError(f"not a scenario: {type(sc).__name__}")


def _run_chain_scenario(sc: ChainScenario, tolerance: float) -> ScenarioOutcome:
    res = run_chain(list(sc.links), sc.size, sc.model, seed=sc.seed, handshake=sc.handshake,
                    max_events=sc.max_events, min_rto=sc.min_rto,
                    sample_interval=sc.sample_interval)
    r = rounds_for_size(sc.size, sc.model)
    rtts = [l.rtt for l in sc.links]
    model_ms = link_chain_time(rtts, r) + (sum(rtts) if sc.handshake else 0.0)
    out = ScenarioOutcome("chain", trace_csv=res.trace.to_csv())
    out.summary = {
        "hops": len(rtts), "size": sc.size, "rounds": r,
        "simulated_ms": res.completion_ms, "model_ms": model_ms,
        "rel_error": abs(res.completion_ms - model_ms) / model_ms,
        "digest_ok": res.digest_ok, "rto_events": res.rto_events,
        "retransmitted_segments": res.retransmitted_segments, "events": res.events,
    }
    if not res.digest_ok:
        out.failed.append("digest")
    if sc.lossless_unlimited and out.summary["rel_error"] > tolerance:
        out.failed.append("model_agreement")
    if sc.direct_rtt is not None:
        direct = run_chain([SimLink(sc.direct_rtt)], sc.size, sc.model, seed=sc.seed,
                           handshake=sc.handshake, max_events=sc.max_events, min_rto=sc.min_rto)
        direct_model = link_chain_time([sc.direct_rtt], r) + (sc.direct_rtt if sc.handshake else 0.0)
        sim_speedup = direct.completion_ms / res.completion_ms
        model_speedup = direct_model / model_ms
        out.summary.update(direct_ms=direct.completion_ms, direct_model_ms=direct_model,
                           speedup=sim_speedup, model_speedup=model_speedup)
        if sc.lossless_unlimited and abs(sim_speedup - model_speedup) / model_speedup > tolerance:
            out.failed.append("speedup_agreement")
    return out


def _run_offload_scenario(sc: OffloadScenario) -> ScenarioOutcome:
    res = run_offload(sc)
    m = res.machine
    out = ScenarioOutcome("offload", trace_csv=res.trace.to_csv())
    out.summary = {
        "ramp": sc.ramp, "final_state": m.state.name,
        "offload_ms": res.offload_time, "ramp_steps": len(m.ramp_steps),
        "rto_events": res.rto_events, "rto_flag": res.rto_events > 0,
        "spurious_segments": res.spurious_segments,
        "goodput_before_bps": res.goodput_before_bps,
        "goodput_after_bps": res.goodput_after_bps,
        "min_goodput_after_bps": res.min_goodput_after_bps,
        "digest_ok": res.digest_ok,
        "proxy_segments_after_offload": res.proxy_segments_after_offload,
        "completion_ms": res.completion_ms,
    }
    if not res.digest_ok:
        out.failed.append("digest")
    if res.proxy_segments_after_offload:
        out.failed.append("proxy_touched_after_offload")
    return out
