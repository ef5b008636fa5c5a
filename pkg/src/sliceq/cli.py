"""Command-line front door.

Subcommands: regions, analyze, simulate, fit, markov, search, preset.
Exit codes: 0 success, 2 invalid input, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .core import (
    BUILTIN_SCENARIOS,
    Scenario,
    Strategy,
    enumerate_regions,
    naive_strategy,
    random_strategy,
    validate_preference,
)
from .engine import SimConfig, run_monte_carlo, run_replication, substream, summarize_run
from .errors import (
    DivergentQueueError,
    InvalidInputError,
    QuadratureError,
    SeriesTruncationError,
    SliceQError,
)
from .fitting import fit_exponential, fit_geometric, fit_success, floor_binned
from .markov import analytic_evaluation, strategy_search
from .presets import PRESET_NAMES, OutputDir, run_preset, run_regions_report
from .queueing import (
    QueueParams,
    TruncationConfig,
    impatient_pmf,
    join_accept_probs,
    wait_densities,
)
from .tenants import KnowledgeRegime

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERIC = 3


def load_scenario(ref: str) -> Scenario:
    if ref.startswith("builtin:"):
        name = ref.split(":", 1)[1]
        if name not in BUILTIN_SCENARIOS:
            raise InvalidInputError(
                f"unknown builtin scenario {name!r}; have {sorted(BUILTIN_SCENARIOS)}"
            )
        return BUILTIN_SCENARIOS[name]()
    return Scenario.load(ref)


def load_strategy(ref: str, scenario: Scenario, seed: int) -> Strategy:
    region = enumerate_regions(scenario)
    if ref.startswith("naive:"):
        order = [int(x) for x in ref.split(":", 1)[1].split(",")]
        return naive_strategy(region, validate_preference(order, scenario.n_types))
    if ref == "random":
        rng = substream(seed, 0, 997)
        return random_strategy(region, rng, reserve_last=True)
    return Strategy.load(ref, scenario)


def _regime_from_args(args) -> KnowledgeRegime:
    return KnowledgeRegime(
        args.knowledge,
        risk_factor=args.risk_factor,
        delta_k=args.delta_k,
    )


def cmd_regions(args) -> int:
    scenario = load_scenario(args.scenario)
    report = run_regions_report(scenario, dump_states=False)
    if args.dump:
        report = run_regions_report(scenario, dump_states=True)
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_analyze(args) -> int:
    params = QueueParams(args.lam, args.mu, args.alpha, args.beta)
    cfg = TruncationConfig()
    pmf = impatient_pmf(params, cfg)
    probs = join_accept_probs(params, cfg)
    report = {
        "pmf": [float(p) for p in pmf[: args.pmf_entries]],
        "p_join": probs.p_join,
        "p_accept": probs.p_accept,
        "p_accept_given_join": probs.p_accept_given_join,
        "degenerate": probs.degenerate,
    }
    if args.alpha > 0 and not probs.degenerate and probs.p_accept_and_join > 0:
        dens = wait_densities(params, cfg)
        report.update({
            "mean_wait_accepted": dens.mean_accepted,
            "mean_wait_reneged": dens.mean_reneged,
            "mean_wait_joined": dens.mean_joined,
            "series_norm_deficit": dens.raw_norm,
        })
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    strategy = load_strategy(args.strategy, scenario, args.seed)
    config = SimConfig(
        horizon=args.horizon,
        replications=args.replications,
        master_seed=args.seed,
        queue_cap=args.queue_cap if args.queue_cap > 0 else None,
        knowledge=_regime_from_args(args),
        initial_state=args.initial_state,
        warmup_fraction=args.warmup,
    )
    out = OutputDir.create(
        args.out, args.force,
        command="simulate", seed=args.seed,
        scenario_fingerprint=scenario.fingerprint(),
        argv=sys.argv[1:],
    )

    trace_rows = []
    if args.trace and args.replications > 1:
        raise InvalidInputError("--trace is limited to single-replication runs")
    if args.trace:
        metrics = run_replication(scenario, strategy, config, 0,
                                  trace=trace_rows.append)
        rows, runs = [summarize_run(metrics, scenario)], [metrics]
    else:
        mc = run_monte_carlo(scenario, strategy, config, threads=args.threads)
        rows, runs = mc.rows, mc.runs

    header = list(rows[0].keys())
    out.write_csv("metrics.csv", header,
                  [[row[k] for k in header] for row in rows])
    req_header = ["replication", "request_id", "slice_type", "enter_time",
                  "lifetime", "entry_queue_length", "disposition", "wait",
                  "end_profit"]
    req_rows = []
    for m in runs:
        for r in m.records:
            req_rows.append([
                m.replication, r.request_id, r.slice_type,
                f"{r.enter_time:.9g}", f"{r.lifetime:.9g}",
                r.entry_queue_length, r.disposition, f"{r.wait:.9g}",
                "" if r.end_profit is None else f"{r.end_profit:.9g}",
            ])
    out.write_csv("requests.csv", req_header, req_rows)
    if args.trace:
        with open(out.path / "events.jsonl", "w") as fh:
            for ev in trace_rows:
                fh.write(json.dumps(ev) + "\n")
        out.manifest["outputs"].append("events.jsonl")
    out.finalize()
    print(f"wrote {out.path}/metrics.csv ({len(rows)} replications)")
    return EXIT_OK


def cmd_fit(args) -> int:
    rows = []
    with open(args.input, newline="") as fh:
        reader = csv.DictReader(fh)
        if args.column not in (reader.fieldnames or []):
            raise InvalidInputError(
                f"column {args.column!r} not in {args.input}: {reader.fieldnames}"
            )
        for row in reader:
            if args.where:
                key, _, expected = args.where.partition("=")
                if row.get(key) != expected:
                    continue
            cell = row[args.column]
            if cell != "":
                rows.append(float(cell))
    if args.kind == "geometric":
        fit = fit_geometric(floor_binned(rows))
    else:
        fit = fit_exponential(rows)
    report = {
        "kind": args.kind,
        "n": fit.n,
        "parameter": fit.parameter,
        "converged": fit.converged,
        "log_likelihood": fit.log_likelihood,
        "kld": fit.kld,
        "tail_diagnostic": fit.tail_diagnostic,
        "degenerate": fit.degenerate,
        "success": fit_success(fit) if args.kind == "geometric" else None,
    }
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_markov(args) -> int:
    scenario = load_scenario(args.scenario)
    strategy = load_strategy(args.strategy, scenario, args.seed)
    region = enumerate_regions(scenario)
    empty_probs = None
    if args.empty_probs:
        empty_probs = [float(x) for x in args.empty_probs.split(",")]
        if len(empty_probs) != scenario.n_types:
            raise InvalidInputError(
                "--empty-probs needs one value per slice type"
            )
    result = analytic_evaluation(
        scenario, strategy, region, seed=args.seed,
        fixed_point_rounds=args.fixed_point_rounds,
        empty_probs=empty_probs,
    )
    dist = result["long_run"]
    top = np.argsort(dist)[::-1][: args.top_k]
    report = {
        "label": result["label"],
        "converged": result["converged"],
        "iterations": result["iterations"],
        "acceptance_rates": [float(x) for x in result["acceptance_rates"]],
        "u_sigma": result["u_sigma"],
        "top_states": [
            {"state": list(region.state(int(i))), "prob": float(dist[int(i)])}
            for i in top
        ],
    }
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_search(args) -> int:
    scenario = load_scenario(args.scenario)
    region = enumerate_regions(scenario)
    config = SimConfig(
        horizon=args.horizon, replications=args.replications,
        master_seed=args.seed,
        queue_cap=args.queue_cap if args.queue_cap > 0 else None,
        knowledge=_regime_from_args(args), initial_state=args.initial_state,
    )
    rows = strategy_search(
        scenario, region, args.n_strategies, config,
        objective=args.objective, evaluator=args.evaluator,
        exhaustive=args.exhaustive,
    )
    writer = csv.writer(sys.stdout)
    writer.writerow(["strategy_id", "kind", "u_sigma", "mean_wait",
                     "admission_rate", "objective"])
    for r in rows:
        writer.writerow([r.strategy_id, r.kind, f"{r.u_sigma:.6g}",
                         f"{r.mean_wait:.6g}", f"{r.admission_rate:.6g}",
                         f"{r.objective:.6g}"])
    return EXIT_OK


def cmd_preset(args) -> int:
    scenario = load_scenario(args.scenario)
    progress = None
    if args.verbose:
        def progress(msg):
            print(msg, file=sys.stderr)
    summary = run_preset(
        args.name, scenario, args.out, args.scale, args.seed,
        force=args.force, progress=progress,
    )
    print(json.dumps(summary, indent=2, default=str))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sliceq",
        description="Multi-queue slice admission control simulator and analytics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--scenario", default="builtin:demo",
                       help="scenario JSON path or builtin:demo / builtin:tiny")

    def add_sim_opts(p):
        p.add_argument("--horizon", type=float, default=1000.0)
        p.add_argument("--replications", type=int, default=1)
        p.add_argument("--queue-cap", dest="queue_cap", type=int, default=100)
        p.add_argument("--knowledge", default="patient",
                       choices=["patient", "blind", "position", "avg_wait",
                                "serving_rate", "full"])
        p.add_argument("--risk-factor", dest="risk_factor", type=float, default=1.0)
        p.add_argument("--delta-k", dest="delta_k", type=int, default=2)
        p.add_argument("--initial-state", dest="initial_state", default="empty",
                       choices=["empty", "random_feasible", "random_full"])
        p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("regions", help="report feasible/admissible region sizes")
    add_common(p)
    p.add_argument("--dump", action="store_true", help="include the state lists")
    p.set_defaults(func=cmd_regions)

    p = sub.add_parser("analyze", help="single-queue stationary analytics")
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--pmf-entries", dest="pmf_entries", type=int, default=20)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="run the multi-queue simulator")
    add_common(p)
    add_sim_opts(p)
    p.add_argument("--strategy", default="random",
                   help="strategy file, naive:1,2,0 or random")
    p.add_argument("--warmup", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.add_argument("--trace", action="store_true", help="write events.jsonl")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a distribution to a CSV column")
    p.add_argument("--input", required=True)
    p.add_argument("--column", required=True)
    p.add_argument("--kind", choices=["geometric", "exponential"],
                   default="geometric")
    p.add_argument("--where", default=None,
                   help="filter rows, e.g. disposition=reneged")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("markov", help="embedded-chain strategy evaluation")
    add_common(p)
    p.add_argument("--strategy", default="random")
    p.add_argument("--top-k", dest="top_k", type=int, default=10)
    p.add_argument("--fixed-point-rounds", dest="fixed_point_rounds",
                   type=int, default=0)
    p.add_argument("--empty-probs", dest="empty_probs", default=None,
                   help="comma-separated queue-empty probabilities "
                        "(skips the bootstrap run)")
    p.set_defaults(func=cmd_markov)

    p = sub.add_parser("search", help="random-strategy search with benchmarks")
    add_common(p)
    add_sim_opts(p)
    p.add_argument("--n-strategies", dest="n_strategies", type=int, default=100)
    p.add_argument("--objective", choices=["utility", "wait", "admission"],
                   default="utility")
    p.add_argument("--evaluator", choices=["simulation", "analytic"],
                   default="simulation")
    p.add_argument("--exhaustive", action="store_true")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("preset", help="run a bundled experiment campaign")
    add_common(p)
    p.add_argument("name", choices=list(PRESET_NAMES))
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_preset)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DivergentQueueError, SeriesTruncationError, QuadratureError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidInputError, SliceQError, FileNotFoundError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
