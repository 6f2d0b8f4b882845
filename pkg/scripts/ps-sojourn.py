#!/usr/bin/env python3
from __future__ import annotations

import argparse
import logging
import secrets
import sys
from pathlib import Path
from typing import Any

from dotenv import load_dotenv
from lib import ConvergenceError, __version__
from lib.asymptotic import select_regime
from lib.dist import ModelParams, parse_dist_spec
from lib.grid import (
    CONDITIONAL_METHODS,
    UNCONDITIONAL_METHODS,
    ConditionalTask,
    UnconditionalTask,
    applicable_unconditional,
    auto_unconditional,
    evaluate_conditional,
    evaluate_unconditional,
)
from lib.inversion import ContourSpec, atom_mass
from lib.sim import (
    DEFAULT_REPLICATIONS,
    DEFAULT_WARMUP,
    SimConfig,
    SimResult,
    empirical_density,
    export_samples,
    simulate,
)
from lib.suites import DEFAULT_SUITES_PATH, SUITES, load_suites, run_suite
from lib.tables import (
    ResultRow,
    RunManifest,
    atom_row,
    ordered_map,
    read_table,
    render,
)
from lib.uncond import tail_expansion
from lib.utils import parse_grid, resolve_workers

load_dotenv()

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NONCONVERGED = 1
EXIT_USAGE = 2
DEFAULT_TAGGED = 100_000
DEFAULT_BIN_WIDTH = 0.1


def _add_model_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--dist",
        required=True,
        help="Service distribution, e.g. exp:mu=1, erlang:k=2,mu=1, det:mu=1, uniform:a=2, "
        "optionally followed by ;tail:M=..,N=..,q=..,r=..",
    )
    parser.add_argument(
        "--lambda", dest="lam", type=float, required=True, help="Poisson arrival rate."
    )


def _add_output_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--format", choices=["csv", "json"], default="csv", help="Output format (default: csv)."
    )
    parser.add_argument(
        "--output", type=Path, default=None, help="Write the table here (default: stdout)."
    )
    parser.add_argument(
        "--workers",
        type=int,
        default=None,
        help="Worker processes (default: cpu count, capped by PS_SOJOURN_THREADS).",
    )


def _add_sim_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--tagged",
        type=int,
        default=DEFAULT_TAGGED,
        help=f"Tagged customers to simulate (default: {DEFAULT_TAGGED}).",
    )
    parser.add_argument(
        "--seed", type=int, default=None, help="64-bit seed (default: drawn and recorded)."
    )
    parser.add_argument(
        "--warmup",
        type=int,
        default=DEFAULT_WARMUP,
        help=f"Warmup arrivals per replication (default: {DEFAULT_WARMUP}).",
    )
    parser.add_argument(
        "--replications",
        type=int,
        default=DEFAULT_REPLICATIONS,
        help=f"Independent replications (default: {DEFAULT_REPLICATIONS}).",
    )
    parser.add_argument(
        "--bin-width",
        type=float,
        default=DEFAULT_BIN_WIDTH,
        help=f"Histogram bin width (default: {DEFAULT_BIN_WIDTH}).",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Sojourn-time densities of the M/G/1 processor-sharing queue."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--verbose", action="store_true", help="Enable debug logging.")
    sub = parser.add_subparsers(dest="command", required=True)

    cond = sub.add_parser("conditional", help="Conditional density p(t|x) over a t-grid.")
    _add_model_args(cond)
    cond.add_argument("--x", type=float, required=True, help="Tagged service requirement.")
    cond.add_argument("--t", required=True, help="t-grid: start:end:step or a comma list.")
    cond.add_argument(
        "--method",
        choices=[*CONDITIONAL_METHODS, "simulate", "all"],
        default="exact",
        help="Evaluation method (default: exact).",
    )
    cond.add_argument("--regime", default=None, help="Force a regime id such as T21-C4.")
    cond.add_argument(
        "--contour-shift", type=float, default=None, help="Abscissa of the s-plane line."
    )
    cond.add_argument(
        "--nodes", type=int, default=64, help="Initial trapezoid node count (default: 64)."
    )
    _add_sim_args(cond)
    _add_output_args(cond)

    uncond = sub.add_parser("unconditional", help="Unconditional density p(t) over a t-grid.")
    _add_model_args(uncond)
    uncond.add_argument("--t", required=True, help="t-grid: start:end:step or a comma list.")
    uncond.add_argument(
        "--method",
        choices=[*UNCONDITIONAL_METHODS, "auto", "all"],
        default="auto",
        help="Evaluation method (default: auto by distribution and load).",
    )
    _add_output_args(uncond)

    validate = sub.add_parser("validate", help="Run validation suites.")
    validate.add_argument("--suite", choices=[*SUITES, "all"], default="all")
    validate.add_argument(
        "--config",
        type=Path,
        default=DEFAULT_SUITES_PATH,
        help="Suite parameter file (default: config/validation-suites.yaml).",
    )

    sim = sub.add_parser("simulate", help="Simulate tagged sojourn times.")
    _add_model_args(sim)
    sim.add_argument(
        "--x", type=float, default=None, help="Tagged requirement (default: drawn from b)."
    )
    sim.add_argument("--raw", type=Path, default=None, help="Export raw sojourns, one per line.")
    _add_sim_args(sim)
    _add_output_args(sim)

    replay = sub.add_parser("replay", help="Re-run the command recorded in a table's manifest.")
    replay.add_argument("--input", type=Path, required=True, help="Table written earlier.")
    replay.add_argument("--output", type=Path, default=None, help="Where to write the rerun.")
    return parser


def _params(args: argparse.Namespace) -> ModelParams:
    return ModelParams(args.lam, parse_dist_spec(args.dist))


def _seeded_argv(argv: list[str], args: argparse.Namespace) -> list[str]:
    """argv with the output path removed and the seed pinned, for replay."""
    out: list[str] = []
    skip = False
    for item in argv:
        if skip:
            skip = False
            continue
        if item == "--output":
            skip = True
            continue
        if item.startswith("--output="):
            continue
        out.append(item)
    if getattr(args, "seed", None) is not None and "--seed" not in out:
        out += ["--seed", str(args.seed)]
    return out


def _emit(text: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    print(f"[ok] wrote {path}", file=sys.stderr)


def _sim_rows(result: SimResult, t_grid: list[float], bin_width: float) -> list[ResultRow]:
    x = result.config.x
    lo = min(t_grid) - bin_width / 2.0
    hi = max(t_grid) + bin_width / 2.0
    bins = empirical_density(
        result, bin_width, (lo, hi), min_samples=min(len(result.sojourns), 10_000)
    )
    rows: list[ResultRow] = []
    for t in t_grid:
        idx = min(int((t - lo) // bin_width), len(bins) - 1)
        hit = bins[idx]
        rows.append(
            ResultRow(
                t=t,
                x=x,
                method="simulate",
                regime="histogram",
                value=hit.density,
                stderr=hit.stderr,
            )
        )
    return rows


def _sim_config(args: argparse.Namespace, params: ModelParams, x: float | None) -> SimConfig:
    return SimConfig(
        params=params,
        seed=args.seed,
        tagged=args.tagged,
        warmup=args.warmup,
        x=x,
        replications=args.replications,
    )


def cmd_conditional(
    args: argparse.Namespace, workers: int
) -> tuple[list[ResultRow], dict[str, Any]]:
    params = _params(args)
    t_grid = parse_grid(args.t)
    contour = ContourSpec(shift=args.contour_shift, nodes=args.nodes)
    methods = [*CONDITIONAL_METHODS, "simulate"] if args.method == "all" else [args.method]
    extra: dict[str, Any] = {}
    if args.regime is not None:
        auto = {select_regime(params, t, args.x).regime for t in t_grid if t > args.x}
        mismatched = sorted(regime for regime in auto if not args.regime.startswith(regime))
        if mismatched:
            print(
                f"[warn] --regime {args.regime} overrides auto-selected {', '.join(mismatched)}",
                file=sys.stderr,
            )

    rows: list[ResultRow] = []
    for method in methods:
        if method == "simulate":
            result = simulate(_sim_config(args, params, args.x), workers=workers)
            mean, mean_se = result.mean_sojourn()
            extra["simulation"] = {"mean_sojourn": mean, "mean_stderr": mean_se}
            rows.append(
                atom_row(args.x, args.x, method, result.atom_fraction, result.atom_stderr())
            )
            rows.extend(_sim_rows(result, t_grid, args.bin_width))
            continue
        tasks = [
            ConditionalTask(params, t, args.x, method, args.regime, contour) for t in t_grid
        ]
        rows.append(atom_row(args.x, args.x, method, atom_mass(params, args.x)))
        rows.extend(ordered_map(evaluate_conditional, tasks, workers))
    return rows, extra


def cmd_unconditional(
    args: argparse.Namespace, workers: int
) -> tuple[list[ResultRow], dict[str, Any]]:
    params = _params(args)
    t_grid = parse_grid(args.t)
    applicable = applicable_unconditional(params)
    if args.method == "all":
        methods = applicable
    elif args.method == "auto":
        methods = [auto_unconditional(params)]
    else:
        methods = [args.method]
    extra: dict[str, Any] = {}
    if "tail" in methods:
        expansion = tail_expansion(params)
        extra["tail"] = {
            "regime": expansion.regime,
            "prefactor": expansion.prefactor,
            "power": expansion.power,
            "rates": {str(p): c for p, c in expansion.rates.items()},
        }
    rows: list[ResultRow] = []
    for method in methods:
        tasks = [UnconditionalTask(params, t, method) for t in t_grid]
        rows.extend(ordered_map(evaluate_unconditional, tasks, workers))
    return rows, extra


def cmd_simulate(args: argparse.Namespace, workers: int) -> tuple[list[ResultRow], dict[str, Any]]:
    params = _params(args)
    result = simulate(_sim_config(args, params, args.x), workers=workers)
    if args.raw is not None:
        export_samples(result, args.raw)
        print(f"[ok] wrote {len(result.sojourns)} samples to {args.raw}", file=sys.stderr)
    mean, mean_se = result.mean_sojourn()
    in_system, in_system_se = result.mean_in_system()
    extra = {
        "simulation": {
            "mean_sojourn": mean,
            "mean_stderr": mean_se,
            "mean_in_system": in_system,
            "in_system_stderr": in_system_se,
            "atom_fraction": result.atom_fraction,
        }
    }
    rows: list[ResultRow] = []
    if args.x is not None:
        rows.append(
            atom_row(args.x, args.x, "simulate", result.atom_fraction, result.atom_stderr())
        )
    bins = empirical_density(
        result, args.bin_width, min_samples=min(len(result.sojourns), 10_000)
    )
    rows.extend(
        ResultRow(
            t=b.t,
            x=args.x,
            method="simulate",
            regime="histogram",
            value=b.density,
            stderr=b.stderr,
        )
        for b in bins
    )
    return rows, extra


def cmd_validate(args: argparse.Namespace) -> int:
    suites = load_suites(args.config)
    results = run_suite(args.suite, suites)
    failed = 0
    for check in results:
        tag = "[ok]" if check.passed else "[fail]"
        line = (
            f"{tag} {check.suite}: {check.name} "
            f"residual={check.residual:.3e} tol={check.tolerance:.1e}"
        )
        if check.detail:
            line += f" ({check.detail})"
        print(line)
        failed += 0 if check.passed else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_NONCONVERGED


def _run(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)

    if args.command == "replay":
        manifest, _ = read_table(args.input)
        replay_argv = list(manifest.argv)
        if args.output is not None:
            replay_argv += ["--output", str(args.output)]
        logger.info("Replaying %s from %s", manifest.command, args.input)
        return _run(replay_argv)
    if args.command == "validate":
        return cmd_validate(args)

    workers = resolve_workers(args.workers)
    if hasattr(args, "seed") and args.seed is None:
        args.seed = secrets.randbits(63)
    if args.command == "conditional":
        rows, extra = cmd_conditional(args, workers)
    elif args.command == "unconditional":
        rows, extra = cmd_unconditional(args, workers)
    else:
        rows, extra = cmd_simulate(args, workers)

    params: dict[str, Any] = {
        key: str(value) if isinstance(value, Path) else value
        for key, value in vars(args).items()
        if key not in {"command", "output", "workers", "verbose"}
    }
    params.update(extra)
    manifest = RunManifest(
        command=args.command,
        params=params,
        argv=_seeded_argv(argv, args),
        seeds=[args.seed] if getattr(args, "seed", None) is not None else [],
    )
    _emit(render(rows, manifest, args.format), args.output)
    if not all(row.converged for row in rows):
        print("[warn] some rows did not converge", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    arguments = list(sys.argv[1:] if argv is None else argv)
    try:
        return _run(arguments)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except ConvergenceError as exc:
        print(f"[error] {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (ValueError, FileNotFoundError) as exc:
        print(f"[error] {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
