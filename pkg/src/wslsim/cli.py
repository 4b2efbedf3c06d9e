"""Command line entry point: ``wslsim simulate | preset | check``."""
from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import presets as P
from .config import Experiment, ParseError, ValidationError, parse_config
from .engine import Scenario, ScenarioError, run
from .metrics import AccountingMismatch, summary_header, summary_row, write_csv, write_trace
from .supportability import (
    StateSpaceTooLarge,
    boundary_load,
    check_supportable,
    classify,
    instance_from_scenario,
    witness_header,
    witness_rows,
)

OUT_ENV = "WSLSIM_OUT"
EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def _one(args):
    scenario, trace = args
    return run(scenario, trace=trace)


def run_many(scenarios: list[Scenario], workers: int = 1, trace: bool = False):
    """Run independent replications; results come back in input order."""
    jobs = [(s, trace) for s in scenarios]
    if workers <= 1 or len(jobs) <= 1:
        return [_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_one, jobs))


def output_dir(cli_value: str | None, config_value: str | None = None) -> Path:
    """``--out`` wins, then the environment override, then the config file."""
    return Path(cli_value or os.environ.get(OUT_ENV) or config_value or "wslsim_out")


def _row(scenario: Scenario, lam, report):
    pol = scenario.policy
    return summary_row(
        scenario.seed,
        pol.name,
        lam,
        pol.learning_period,
        pol.alpha,
        report,
        len(scenario.long_flows),
        scenario.n_mflow,
    )


def cmd_simulate(args) -> int:
    exp: Experiment = parse_config(args.config)
    trace = args.trace or exp.trace
    out = output_dir(args.out, exp.output_dir)
    scenarios = exp.scenarios()
    results = run_many(scenarios, args.workers, trace)
    sc = exp.scenario
    lam = exp.lam if exp.lam is not None else sum(c.arrival_rate for c in sc.short_classes)
    rows = [_row(s, lam, rep) for s, (rep, _) in zip(scenarios, results)]
    write_csv(out / "summary.csv", summary_header(len(sc.long_flows), sc.n_mflow), rows)
    if trace:
        for s, (_, tr) in zip(scenarios, results):
            write_trace(out / f"trace_seed{s.seed}.csv", tr)
    for s, (rep, _) in zip(scenarios, results):
        print(
            f"seed={s.seed} policy={s.policy.name} mean_delay={rep.mean_delay:.4g} "
            f"avg_n_short={rep.avg_n_short:.4g} blocking={rep.blocking_prob:.4g} "
            f"growth={rep.growth_ratio:.3g}"
        )
    print(f"wrote {out / 'summary.csv'}")
    return EXIT_OK


def parse_list(text: str | None, kind=float):
    if not text:
        return None
    try:
        return [kind(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def cmd_preset(args) -> int:
    seeds = parse_list(args.seeds, int) or list(P.DEFAULT_SEEDS)
    lambdas = parse_list(args.lambdas) or list(P.DEFAULT_LAMBDAS)
    runs = P.build_preset(args.name, lambdas, seeds, args.scale)
    out = output_dir(args.out)
    t0 = time.perf_counter()
    results = run_many([r.scenario for r in runs], args.workers)
    by_variant: dict[str, list] = {}
    for r, (rep, _) in zip(runs, results):
        by_variant.setdefault(r.variant, []).append((r, rep))
    for variant, items in by_variant.items():
        sc = items[0][0].scenario
        path = out / f"{args.name}_{variant}.csv"
        write_csv(
            path,
            summary_header(len(sc.long_flows), sc.n_mflow),
            [_row(r.scenario, r.lam, rep) for r, rep in items],
        )
        print(f"wrote {path} ({len(items)} rows)")
    print(f"{len(runs)} runs in {time.perf_counter() - t0:.1f}s")
    return EXIT_OK


def cmd_check(args) -> int:
    exp = parse_config(args.config)
    instance = instance_from_scenario(exp.scenario)
    verdict = classify(instance, args.eps)
    line = verdict.value
    if args.sweep:
        if exp.lam is None:
            raise ValidationError("traffic.lambda: required for --sweep lambda")
        lam_star = boundary_load(
            lambda lam: instance_from_scenario(exp.with_lambda(lam).scenario), args.tol
        )
        line += f" lambda*={lam_star:.6g}"
    print(line)
    if args.witness:
        support = check_supportable(instance)
        if support.feasible:
            write_csv(args.witness, witness_header(len(instance.long_flows)), witness_rows(support))
        else:
            print("no witness: infeasible", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wslsim", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the replications of one config file")
    s.add_argument("--config", required=True)
    s.add_argument("--trace", action="store_true", help="also write per-slot trace CSVs")
    s.add_argument("--out", help=f"output directory (overrides ${OUT_ENV})")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    p = sub.add_parser("preset", help="run one of the built-in experiments")
    p.add_argument("--name", required=True, choices=P.PRESET_NAMES)
    p.add_argument("--scale", type=float, default=1.0, help="horizon multiplier")
    p.add_argument("--seeds", help="comma-separated seeds (default 1..5)")
    p.add_argument("--lambdas", help="comma-separated arrival rates")
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_preset)

    c = sub.add_parser("check", help="supportability verdict for a config's traffic")
    c.add_argument("--config", required=True)
    c.add_argument("--sweep", choices=["lambda"])
    c.add_argument("--tol", type=float, default=1e-3)
    c.add_argument("--eps", type=float, default=1e-6)
    c.add_argument("--witness", help="write the feasible time-sharing witness CSV here")
    c.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "scale", 1.0) <= 0:
        print("error: --scale must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ParseError, ValidationError, ScenarioError, StateSpaceTooLarge, P.UnknownPreset) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except argparse.ArgumentTypeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except AccountingMismatch as exc:
        print(f"accounting failure: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
