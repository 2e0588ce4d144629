"""proxychain command line: compute, compare, simulate, lookup, controller.

Exit status is 0 on success, 1 when a runtime self-check fails and 2 on
bad input.
"""
from __future__ import annotations

import argparse
import csv
import logging
import queue
import sys
import threading
from pathlib import Path

import numpy as np

from .pareto import TOL, ParetoFront, minimax_path, pareto_baseline, pareto_optimized, shortest_path
from .topology import (DistanceMatrix, TopologyError, build_full_mesh, parse_rocketfuel_latencies,
                       parse_topology)
from .transfer import (ChainLookupTable, TransferModel, build_lookup_table, chain_time,
                       rounds_for_size, select_chain)

EXIT_OK, EXIT_CHECK, EXIT_INPUT = 0, 1, 2

REPORT_COLUMNS = ("src", "dst", "rounds", "pareto_ms", "shortest_ms", "minimax_ms",
                  "improvement_vs_shortest", "improvement_vs_minimax",
                  "pareto_nodes", "shortest_nodes", "minimax_nodes")
CDF_COLUMNS = ("baseline", "rounds", "sample", "cumulative_fraction")


class InputError(Exception):
    pass


def load_matrix(path: str | Path, fmt: str = "auto") -> DistanceMatrix:
    """Read a topology, Rocketfuel latency list or matrix CSV into a full mesh."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    if fmt == "auto":
        first = next((ln.split("#", 1)[0].split() for ln in text.splitlines()
                      if ln.split("#", 1)[0].strip()), [""])
        head = first[0]
        fmt = ("matrix" if head.startswith("n=") else
               "topology" if head in ("node", "link") else "rocketfuel")
    try:
        if fmt == "matrix":
            return DistanceMatrix.from_csv(text)
        g = parse_topology(text) if fmt == "topology" else parse_rocketfuel_latencies(text)
        return build_full_mesh(g)
    except (TopologyError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _model(args) -> TransferModel:
    return TransferModel(args.icw, args.mss, args.max_rounds)


def _improvement(base: float, ours: float) -> float:
    diff = base - ours
    if abs(diff) <= TOL * max(1.0, base):
        return 0.0
    return diff / base


def cmd_compute(args) -> int:
    d = load_matrix(args.topology, args.format)
    front = pareto_optimized(d)
    if args.baseline:
        if pareto_baseline(d) != front:
            print("baseline and optimized fronts differ", file=sys.stderr)
            return EXIT_CHECK
        print("baseline check: fronts identical")
    Path(args.out).write_text(front.to_text())
    s = front.stats
    print(f"nodes={d.n} pairs={len(front)} entries={front.total_entries()} "
          f"pair_checks={s.get('pair_checks', 0)} updates={s.get('updates', 0)}")
    return EXIT_OK


def comparison_rows(d: DistanceMatrix, front: ParetoFront, rounds):
    """One row per (ordered pair, rounds) with the three chain times."""
    baselines = {}
    for i, j in front.pairs():
        baselines[(i, j)] = (shortest_path(d, i, j), minimax_path(d, i, j))
    for r in rounds:
        for (i, j), entries in front.items():
            ours = select_chain(entries, r)
            sp, mm = baselines[(i, j)]
            t, ts, tm = chain_time(ours, r), chain_time(sp, r), chain_time(mm, r)
            yield (i, j, r, t, ts, tm, _improvement(ts, t), _improvement(tm, t),
                   ours.hop_count, sp.hop_count, mm.hop_count)


def cdf(samples) -> list[tuple[float, float]]:
    xs = np.sort(np.asarray(samples, dtype=float))
    n = len(xs)
    return [(float(x), (k + 1) / n) for k, x in enumerate(xs)]


def cmd_compare(args) -> int:
    d = load_matrix(args.topology, args.format)
    try:
        rounds = sorted({int(x) for x in args.rounds.split(",") if x.strip()})
    except ValueError:
        raise InputError(f"bad --rounds {args.rounds!r}") from None
    if not rounds or rounds[0] < 1:
        raise InputError("--rounds needs positive integers")
    front = pareto_optimized(d)
    rows = list(comparison_rows(d, front, rounds))
    out = Path(args.out)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for row in rows:
            w.writerow(row[:3] + tuple(repr(float(x)) for x in row[3:8]) + row[8:])
    cdf_path = out.with_name(out.stem + ".cdf.csv")
    bad = 0
    with cdf_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CDF_COLUMNS)
        for r in rounds:
            sel = [row for row in rows if row[2] == r]
            for name, col in (("shortest", 6), ("minimax", 7)):
                for x, frac in cdf([row[col] for row in sel]):
                    w.writerow((name, r, repr(x), repr(frac)))
            imp_s = np.array([row[6] for row in sel])
            imp_m = np.array([row[7] for row in sel])
            hop_red = np.mean([(row[10] - row[8]) / row[10] for row in sel])
            bad += int((imp_s < 0).sum() + (imp_m < 0).sum())
            if r == 1:
                bad += int((imp_s != 0).sum())
            print(f"r={r} pairs={len(sel)} "
                  f"vs_shortest mean={imp_s.mean():.4f} max={imp_s.max():.4f} nonzero={np.mean(imp_s > 0):.3f} "
                  f"vs_minimax mean={imp_m.mean():.4f} max={imp_m.max():.4f} nonzero={np.mean(imp_m > 0):.3f} "
                  f"hop_reduction_vs_minimax={hop_red:.4f}")
    print(f"report={out} cdf={cdf_path}")
    if bad:
        print(f"{bad} comparison(s) violate dominance", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .sim.scenario import ScenarioError, parse_scenario, run_scenario, with_seed
    try:
        text = Path(args.scenario).read_text()
    except OSError as exc:
        raise InputError(f"{args.scenario}: {exc.strerror}") from exc
    try:
        sc = with_seed(parse_scenario(text), args.seed)
    except ScenarioError as exc:
        raise InputError(f"{args.scenario}: {exc}") from exc
    outcome = run_scenario(sc)
    Path(args.out).write_text(outcome.trace_csv)
    print(f"kind: {outcome.kind}")
    for k, v in outcome.summary.items():
        print(f"{k}: {v}")
    if outcome.summary.get("rto_flag"):
        print("RTO: retransmission timeout observed")
    if outcome.failed:
        print(f"checks failed: {', '.join(outcome.failed)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def load_table(path: str | Path, model: TransferModel) -> ChainLookupTable:
    """A chain table, a front file, or a controller output directory."""
    from .controller import TablePublisher
    p = Path(path)
    try:
        if p.is_dir():
            cur = TablePublisher(p).current_path()
            if cur is None:
                raise InputError(f"{p}: no 'current' pointer")
            p = cur
        text = p.read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    try:
        if any(ln.startswith("pair ") for ln in text.splitlines()):
            return build_lookup_table(ParetoFront.from_text(text), model)
        return ChainLookupTable.from_text(text)
    except (ValueError, KeyError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def cmd_lookup(args) -> int:
    table = load_table(args.table, _model(args))
    if args.size < 1:
        raise InputError("--size must be >= 1")
    try:
        r = rounds_for_size(args.size, table.model)
        chain = table.lookup(args.src, args.dst, r)
    except KeyError:
        raise InputError(f"no entry for pair ({args.src}, {args.dst})") from None
    ms = getattr(chain, "modeled_ms", None)
    if ms is None:
        ms = chain_time(chain, r)
    print(f"chain {','.join(map(str, chain.hops))} rounds {r} modeled_ms {ms:.3f} "
          f"generation {table.generation}")
    return EXIT_OK


def cmd_controller(args) -> int:
    from .controller import (Controller, ControllerError, TablePublisher, _feed_stream,
                             load_daemon_config, start_socket_listener)
    try:
        cfg = load_daemon_config(args.config)
    except ControllerError as exc:
        raise InputError(str(exc)) from exc
    d = load_matrix(cfg.matrix_source)
    try:
        ctl = Controller(d, cfg.controller, cfg.model, TablePublisher(cfg.out_dir))
    except ControllerError as exc:
        raise InputError(str(exc)) from exc
    lines: queue.Queue = queue.Queue()
    server = None
    if cfg.updates == "-":
        threading.Thread(target=_feed_stream, args=(sys.stdin, lines), daemon=True).start()
    elif cfg.updates:
        try:
            fh = open(cfg.updates)
        except OSError as exc:
            raise InputError(f"{cfg.updates}: {exc.strerror}") from exc
        threading.Thread(target=_feed_stream, args=(fh, lines), daemon=True).start()
    if cfg.listen:
        server = start_socket_listener(*cfg.listen, lines)
    stop = threading.Event()
    try:
        cycles = ctl.serve(lines, stop, cfg.max_cycles)
    except KeyboardInterrupt:
        cycles = ctl.generation
    finally:
        if server:
            server.shutdown()
    print(f"generations={ctl.generation} cycles={cycles} updates_seen={ctl.updates_seen} "
          f"updates_applied={ctl.updates_applied} budget_violations={ctl.violations}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="proxychain", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def model_flags(sp):
        sp.add_argument("--icw", type=int, default=10)
        sp.add_argument("--mss", type=int, default=1460)
        sp.add_argument("--max-rounds", type=int, default=16)

    fmt = dict(choices=("auto", "topology", "rocketfuel", "matrix"), default="auto")

    sp = sub.add_parser("compute", help="Pareto fronts for every pair")
    sp.add_argument("--topology", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--baseline", action="store_true", help="also run the baseline DP and compare")
    sp.add_argument("--format", **fmt)
    sp.set_defaults(func=cmd_compute)

    sp = sub.add_parser("compare", help="selected chains vs shortest and minimax")
    sp.add_argument("--topology", required=True)
    sp.add_argument("--rounds", default="1,5,10")
    sp.add_argument("--out", required=True)
    sp.add_argument("--format", **fmt)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("simulate", help="run a scenario file")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--out", required=True, help="trace CSV")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("lookup", help="chain for a transfer")
    sp.add_argument("--table", required=True)
    sp.add_argument("--from", dest="src", type=int, required=True)
    sp.add_argument("--to", dest="dst", type=int, required=True)
    sp.add_argument("--size", type=int, required=True)
    model_flags(sp)
    sp.set_defaults(func=cmd_lookup)

    sp = sub.add_parser("controller", help="ingest updates and publish tables")
    sp.add_argument("--config", required=True)
    sp.set_defaults(func=cmd_controller)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
