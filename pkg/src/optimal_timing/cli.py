"""``optimal-timing`` command line.

Exit codes: 0 success, 2 config or parse error, 3 numerical or training
error, 4 oracle disagreement.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys

import numpy as np

from . import evalharness, oracle, pathgen, stopnet, timing
from .config import load_config, resolve
from .errors import (
    InvalidArgumentError,
    NumericalDegeneracyError,
    NumericalError,
    OracleLimitError,
    ParseError,
    TrainingDivergedError,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3
EXIT_ORACLE = 4

ORACLE_TOL = 1e-12


def _load_histories(cfg, base):
    f = cfg.forecaster
    hists = pathgen.load_history(resolve(base, f.history_file))
    if f.series:
        missing = [s for s in f.series if s not in hists]
        if missing:
            raise InvalidArgumentError(f"series not in history file: {', '.join(missing)}")
        return [hists[s] for s in f.series]
    return list(hists.values())


def generate_paths(cfg, base) -> pathgen.PathSet:
    f = cfg.forecaster
    seed = cfg.resolved_seed()
    if f.kind == "gbm":
        params = [pathgen.GbmParams(f.s0, f.mu, f.sigma)] * f.n_series
        return pathgen.simulate_gbm(params, cfg.n_paths, cfg.horizon, seed)
    if f.kind == "lattice":
        model = oracle.LatticeModel(f.s0, f.u, f.dn, f.p, cfg.horizon)
        return oracle.sample_lattice_paths(model, cfg.n_paths, seed)
    hists = _load_histories(cfg, base)
    parts = []
    for i, h in enumerate(hists):
        if f.kind == "ar":
            parts.append(pathgen.sample_ar_paths(pathgen.fit_ar(h, f.order), h, cfg.n_paths, cfg.horizon, seed, i))
        else:
            parts.append(pathgen.bootstrap_paths(h, f.block_len, cfg.n_paths, cfg.horizon, seed, i))
    paths = pathgen.stack_paths(parts)
    if cfg.normalize:
        _, paths, _ = pathgen.normalize_to_unit(hists, paths)
    return paths


def cmd_generate(args) -> int:
    cfg, base = load_config(args.config)
    paths = generate_paths(cfg, base)
    pathgen.save_paths(paths, args.out)
    print(f"wrote {paths.n_paths} paths x {paths.n_series} series x {paths.horizon} steps to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg, _ = load_config(args.config)
    paths = pathgen.load_paths(args.paths)
    net_cfg = cfg.stopnet.build(cfg.resolved_seed())
    models, traces = [], []
    for i, sid in enumerate(paths.series_ids):
        params, trace = stopnet.train(net_cfg, paths, i)
        models.append(params)
        traces.append(trace)
        print(f"{sid}: loss {trace[0]:.6f} -> {trace[-1]:.6f} over {len(trace) - 1} epochs")
    stopnet.save_models(models, paths.series_ids, args.model_out)
    if args.trace_out:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("series_id", "epoch", "loss"))
        for sid, trace in zip(paths.series_ids, traces):
            for epoch, value in enumerate(trace):
                w.writerow((sid, epoch, repr(value)))
        evalharness.write_text_atomic(args.trace_out, buf.getvalue())
    return EXIT_OK


def format_decision(report: timing.DecisionReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("series_id", "tau_star", "t0", "execution_index", "expected_cost", "cost_weight", "n_paths", "method", "seed"))
    for s in report.series:
        w.writerow(
            (s.series_id, s.tau_star, report.t0, report.t0 + s.tau_star, repr(s.expected_cost), repr(s.weight),
             int(s.stops.size), report.method, report.seed)
        )
    w.writerow(("TOTAL", "", report.t0, "", repr(report.expected_cost), "", "", report.method, report.seed))
    return buf.getvalue()


def format_histogram(report: timing.DecisionReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("series_id", "step", "count"))
    for s in report.series:
        for step, count in enumerate(s.counts(report.horizon), start=1):
            w.writerow((s.series_id, step, int(count)))
    return buf.getvalue()


def cmd_decide(args) -> int:
    ids, models = stopnet.load_models(args.model)
    paths = pathgen.load_paths(args.paths)
    if list(ids) != list(paths.series_ids):
        raise InvalidArgumentError(f"model series {ids} do not match paths series {list(paths.series_ids)}")
    cost = None
    if args.cost_weights:
        cost = timing.CostSpec(tuple(args.cost_weights))
    elif args.config:
        cfg, _ = load_config(args.config)
        if cfg.cost is not None:
            cost = timing.CostSpec(tuple(cfg.cost.weights))
    report = timing.decide(models, paths, cost)
    text = format_decision(report)
    if args.report:
        evalharness.write_text_atomic(args.report, text)
    if args.histogram:
        evalharness.write_text_atomic(args.histogram, format_histogram(report))
    sys.stdout.write(text)
    return EXIT_OK


def cmd_backtest(args) -> int:
    cfg, base = load_config(args.config)
    if cfg.backtest is None:
        raise InvalidArgumentError("config has no backtest section")
    if cfg.forecaster.kind not in evalharness.FORECASTERS:
        raise InvalidArgumentError(f"backtests support forecasters {evalharness.FORECASTERS}")
    if not cfg.forecaster.history_file:
        raise InvalidArgumentError("backtests need forecaster.history_file")
    hists = {h.series_id: h for h in _load_histories(cfg, base)}
    bt = cfg.backtest
    if bt.decision_dates is not None:
        dates = tuple(bt.decision_dates)
    else:
        all_dates = sorted({d for h in hists.values() for d in h.dates})
        dates = tuple(d for d in all_dates if bt.decision_start <= d <= bt.decision_end)
    seed = cfg.resolved_seed()
    bcfg = evalharness.BacktestConfig(
        train_start=bt.train_start,
        train_end=bt.train_end,
        decision_dates=dates,
        horizon=cfg.horizon,
        n_paths=cfg.n_paths,
        forecaster=cfg.forecaster.kind,
        ar_order=cfg.forecaster.order,
        block_len=cfg.forecaster.block_len,
        refit=bt.refit,
        stopnet=cfg.stopnet.build(seed),
        seed=seed,
    )
    rows, summary = evalharness.run_backtest(bcfg, hists)
    evalharness.write_text_atomic(args.report, evalharness.format_report(rows, summary))
    text = evalharness.format_summary(summary)
    if args.summary:
        evalharness.write_text_atomic(args.summary, text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    model = oracle.LatticeModel(args.s0, args.u, args.dn, args.p, args.horizon)
    if args.exhaustive and model.horizon > oracle.EXHAUSTIVE_MAX_T:
        raise OracleLimitError(
            f"refusing exhaustive enumeration for T={model.horizon}: limit is T <= {oracle.EXHAUSTIVE_MAX_T}"
        )
    value, policy = oracle.lattice_value(model)
    print(f"lattice_value={value!r}")
    print(f"always_wait={str(policy.always_wait()).lower()}")
    if model.horizon > oracle.EXHAUSTIVE_MAX_T:
        print(f"exhaustive=skipped (T > {oracle.EXHAUSTIVE_MAX_T})")
        return EXIT_OK
    brute = oracle.exhaustive_adapted_value(model)
    gap = abs(value - brute)
    print(f"exhaustive_value={brute!r}")
    print(f"abs_diff={gap!r}")
    if gap > ORACLE_TOL:
        print(f"agreement=FAIL (tolerance {ORACLE_TOL})")
        return EXIT_ORACLE
    print("agreement=OK")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optimal-timing", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write Monte Carlo sample paths")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one stopping network per series")
    p.add_argument("--config", required=True)
    p.add_argument("--paths", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--trace-out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decide", help="decision report and stop histograms")
    p.add_argument("--model", required=True)
    p.add_argument("--paths", required=True)
    p.add_argument("--report")
    p.add_argument("--histogram")
    p.add_argument("--config", help="read cost weights from this config")
    p.add_argument("--cost-weights", type=float, nargs="+")
    p.set_defaults(func=cmd_decide)

    p = sub.add_parser("backtest", help="rolling baseline-vs-network evaluation")
    p.add_argument("--config", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--summary")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("oracle-check", help="lattice backward induction vs exhaustive search")
    p.add_argument("--s0", type=float, default=1.0)
    p.add_argument("--u", type=float, required=True)
    p.add_argument("--dn", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--horizon", "-T", type=int, required=True)
    p.add_argument("--exhaustive", action="store_true", help="fail instead of skipping when T is too large")
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ParseError, InvalidArgumentError, OracleLimitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except TrainingDivergedError as exc:
        print(f"error: training diverged: {exc} (trace: {exc.loss_trace})", file=sys.stderr)
        return EXIT_NUMERICAL
    except (NumericalError, NumericalDegeneracyError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
