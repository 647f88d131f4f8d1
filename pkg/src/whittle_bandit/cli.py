"""``whittle-bandit`` command line.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import sys
from typing import Sequence

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .index import whittle_index
from .values import DEFAULT_GRID, optimal_threshold, value_iteration

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2

SUITE_CHOICES = ("lipschitz", "threshold", "indexability", "oracle", "vanishing-discount", "all")


class UsageError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser, needs_config: bool = True) -> None:
    p.add_argument("--config", required=needs_config,
                   help="JSON config path, or fixture:<name> for a shipped fixture")
    p.add_argument("--out", help="CSV output path")
    crit = p.add_mutually_exclusive_group()
    crit.add_argument("--beta", type=float, help="discount factor, overrides the config")
    crit.add_argument("--average", action="store_true", help="use the average-reward criterion")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="whittle-bandit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="print Whittle indices per arm")
    _add_common(p)
    p.add_argument("--pi", type=float, nargs="+", default=[round(0.1 * i, 1) for i in range(1, 10)])

    p = sub.add_parser("value", help="solve the single-arm subsidy problem per arm")
    _add_common(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True, help="subsidy for idling")
    p.add_argument("--grid", type=int, default=DEFAULT_GRID)

    for name, helptext in (("simulate", "run index and baseline policies"),
                           ("learn", "run the Thompson-sampling learner")):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        p.add_argument("--seed", type=int, action="append", help="seed to run (repeatable), overrides the config")
        p.add_argument("--horizon", type=int, help="number of steps, overrides the config")
        p.add_argument("--svg", help="also write an SVG chart of the mean curves")

    p = sub.add_parser("verify", help="run property suites on a seeded model battery")
    p.add_argument("suite", choices=SUITE_CHOICES)
    p.add_argument("--per-family", type=int, default=50, help="models per family")
    return parser


def _resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    updates = {}
    if getattr(args, "beta", None) is not None:
        updates["criterion"] = args.beta
    if getattr(args, "average", False):
        updates["criterion"] = "average"
    if getattr(args, "seed", None):
        updates["seeds"] = list(args.seed)
    if getattr(args, "horizon", None) is not None:
        updates["horizon"] = args.horizon
    if updates:
        cfg = parse_config({**cfg.model_dump(mode="json", exclude_none=True), **updates})
    return cfg


def _explicit_models(cfg: ExperimentConfig):
    if cfg.arms is None:
        raise UsageError("this command needs explicit arms; the config uses a generator")
    return cfg.models()


def cmd_index(args) -> int:
    from .output import write_csv

    cfg = _resolve(args)
    models = _explicit_models(cfg)
    crit = cfg.criterion_obj
    rows = []
    for n, m in enumerate(models):
        for pi in args.pi:
            if not 0.0 <= pi <= 1.0:
                raise UsageError(f"--pi values must lie in [0, 1], got {pi}")
            res = whittle_index(m, crit, pi)
            rows.append((n + 1, m.kind.value, m.variant.value, pi, res.w, res.regime))
    print(f"criterion: {crit}")
    print(f"{'arm':>4} {'kind':>4} {'pi':>6} {'W':>12}  regime")
    for arm, kind, _, pi, w, regime in rows:
        print(f"{arm:>4} {kind:>4} {pi:>6.3f} {w:>12.6f}  {regime}")
    out = args.out or cfg.output
    if out:
        write_csv(out, ["arm", "kind", "variant", "pi", "index", "regime"], rows)
    return EXIT_OK


def cmd_value(args) -> int:
    from .output import write_csv

    cfg = _resolve(args)
    models = _explicit_models(cfg)
    if cfg.criterion_obj.is_average:
        raise UsageError("value tables are computed for a discount factor; pass --beta")
    beta = cfg.criterion_obj.beta
    rows = []
    print(f"{'arm':>4} {'kind':>4} {'threshold':>10}  structure")
    for n, m in enumerate(models):
        if m.is_ordered:
            thr = optimal_threshold(m, beta, args.lam, args.grid)
            shown = "-" if thr.pi_T is None else f"{thr.pi_T:.5f}"
            print(f"{n + 1:>4} {m.kind.value:>4} {shown:>10}  {thr.kind.value}")
        else:
            print(f"{n + 1:>4} {m.kind.value:>4} {'-':>10}  no threshold analysis (rho0 >= rho1)")
        table = value_iteration(m, beta, args.lam, args.grid, method="sweep")
        rows.extend((n + 1, float(x), float(v), float(a), float(b))
                    for x, v, a, b in zip(table.grid, table.v, table.v_play, table.v_idle))
    out = args.out or cfg.output
    if out:
        write_csv(out, ["arm", "pi", "value", "play", "idle"], rows)
    return EXIT_OK


def _maybe_svg(path, curves, title, ylabel) -> None:
    if not path:
        return
    from .output import save_curves_svg

    try:
        save_curves_svg(curves, path, title, ylabel)
    except ImportError:
        print("warning: matplotlib is not installed; skipping the SVG (pip install 'artifact[plot]')",
              file=sys.stderr)


def cmd_simulate(args) -> int:
    from .output import (PLAYS_HEADER, SIM_HEADER, SUMMARY_HEADER, play_count_rows, sibling,
                         simulation_rows, summary_rows, write_csv)
    from .sim import run_batch

    cfg = _resolve(args)
    batch = run_batch(cfg.to_sim_config(), cfg.policies)
    for policy, s in batch.summaries.items():
        plays = np.array2string(s.mean_play_counts, precision=1, separator=", ", max_line_width=10**6)
        print(f"{policy.value:>8}: final mean {s.final_mean:.2f} +- {s.final_stderr:.2f} "
              f"over {len(batch.seeds)} seeds; mean plays per arm {plays}")
    out = args.out or cfg.output
    if out:
        write_csv(out, SIM_HEADER, simulation_rows(batch))
        write_csv(sibling(out, "summary"), SUMMARY_HEADER, summary_rows(batch))
        write_csv(sibling(out, "plays"), PLAYS_HEADER, play_count_rows(batch))
    _maybe_svg(args.svg, {p.value: (s.mean_curve, s.stderr_curve) for p, s in batch.summaries.items()},
               "Cumulative reward", "cumulative reward")
    return EXIT_OK


def cmd_learn(args) -> int:
    from .learning import run_learning_batch
    from .output import learning_header, learning_rows, regret_header, regret_rows, sibling, write_csv

    cfg = _resolve(args)
    if cfg.learning is None:
        raise UsageError("config has no learning section")
    lcfg = cfg.to_learning_config()
    summary = run_learning_batch(lcfg)
    n = len(lcfg.true_arms)
    if summary.regret_mean.size:
        mass = np.array2string(summary.final_true_mass, precision=3, separator=", ")
        print(f"regret at t={lcfg.horizon}: {summary.regret_mean[-1]:.2f} +- {summary.regret_stderr[-1]:.2f} "
              f"(uniform random {summary.random_regret_mean[-1]:.2f}); "
              f"mean mismatch steps {summary.mismatch_mean[-1]:.1f}; final mass on truth {mass}")
    out = args.out or cfg.output
    if out:
        write_csv(out, learning_header(n), learning_rows(summary))
        write_csv(sibling(out, "regret"), regret_header(n), regret_rows(summary))
    _maybe_svg(args.svg, {"learner": (summary.regret_mean, summary.regret_stderr),
                          "uniform random": (summary.random_regret_mean, np.zeros_like(summary.random_regret_mean))},
               "Cumulative regret", "regret")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_suite

    if args.per_family < 1:
        raise UsageError("--per-family must be positive")
    results = run_suite(args.suite, per_family=args.per_family)
    for r in results:
        print(f"{r.line()} [{r.seconds:.1f}s]")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


COMMANDS = {"index": cmd_index, "value": cmd_value, "simulate": cmd_simulate,
            "learn": cmd_learn, "verify": cmd_verify}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as err:
        # invalid model parameters that slipped past the schema, e.g. rho0 >= rho1 for value tables
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
