"""Command-line front end.

Subcommands: simulate, adjoint, optimize, gradcheck, oracle.  Each run that
produces files also writes a manifest recording the resolved options, the
wall-clock duration, the seed and a SHA-256 checksum of every artifact.
Exit codes: 0 success, 1 usage or configuration error, 2 oracle or check
failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path


from .adjoint import solve_adjoint
from .forward import StepContext, solve_state
from .model import (
    Field,
    NumericalError,
    ScenarioValidationError,
    ValidatedScenario,
    validate_scenario,
)
from .oracles import ORACLE_NAMES, gradient_check, run_oracles
from .optimizer import optimize
from .rates import RateSpecError
from .scenario_io import ScenarioFileError, parse_scenario, read_field_csv, write_field_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CHECK_FAILED = 2
EXIT_NUMERICAL = 3


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def write_manifest(out_dir: Path, subcommand: str, options: dict, started: float,
                   artifacts: list[Path], seed: int | None = None) -> Path:
    options = {k: v for k, v in options.items()
               if k not in ("fn", "command") and isinstance(v, (str, int, float, bool))}
    manifest = {
        "subcommand": subcommand,
        "scenario": options.get("scenario"),
        "options": options,
        "out_dir": str(out_dir),
        "seed": seed,
        "duration_s": time.time() - started,
        "artifacts": {p.name: _sha256(p) for p in artifacts},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _load_validated(path: str) -> ValidatedScenario:
    return validate_scenario(parse_scenario(path))


def _resolve_beta(spec: str, vsc: ValidatedScenario):
    """A control given on the command line: a constant or a field CSV path."""
    try:
        return float(spec)
    except ValueError:
        pass
    return read_field_csv(spec, vsc.grid)


def _cmd_simulate(args) -> int:
    vsc = _load_validated(args.scenario)
    if args.seed is not None:
        vsc = vsc.with_tolerances(seed=args.seed)
    started = time.time()
    beta = _resolve_beta(args.beta, vsc)
    state = solve_state(vsc, beta)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_field_csv(state.p, out / "p.csv")
    write_field_csv(state.newborn_density, out / "newborns.csv")
    write_field_csv(Field(vsc.grid, ("time",), state.total_population), out / "population.csv")
    write_manifest(out, "simulate", vars(args), started,
                   [out / n for n in ("p.csv", "newborns.csv", "population.csv")],
                   seed=vsc.tolerances.seed)
    print(f"simulate: wrote p.csv, newborns.csv, population.csv to {out}")
    return EXIT_OK


def _cmd_adjoint(args) -> int:
    vsc = _load_validated(args.scenario)
    if args.seed is not None:
        vsc = vsc.with_tolerances(seed=args.seed)
    started = time.time()
    beta = _resolve_beta(args.beta, vsc)
    ctx = StepContext(vsc)
    state = solve_state(vsc, beta, ctx=ctx)
    adj = solve_adjoint(vsc, beta, state, ctx=ctx)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_field_csv(adj.phi, out / "phi.csv")
    write_field_csv(adj.phi_at_zero, out / "phi0.csv")
    write_manifest(out, "adjoint", vars(args), started,
                   [out / "phi.csv", out / "phi0.csv"], seed=vsc.tolerances.seed)
    print(f"adjoint: wrote phi.csv, phi0.csv to {out}")
    return EXIT_OK


def _cmd_optimize(args) -> int:
    vsc = _load_validated(args.scenario)
    if args.max_iters is not None or args.tol is not None or args.relax is not None:
        vsc = vsc.with_tolerances(**{
            k: v for k, v in {
                "max_iters": args.max_iters,
                "fixed_point_tol": args.tol,
                "relax_omega": args.relax,
            }.items() if v is not None
        })
    if args.seed is not None:
        vsc = vsc.with_tolerances(seed=args.seed)
    started = time.time()
    report = optimize(vsc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_field_csv(report.beta_opt, out / "beta_opt.csv")
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    write_manifest(out, "optimize", vars(args), started,
                   [out / "beta_opt.csv", out / "report.json"], seed=vsc.tolerances.seed)
    print(f"optimize: {report.status} after {report.iterations} iterations, "
          f"J = {report.J_history[-1]:.9g}; wrote beta_opt.csv, report.json to {out}")
    return EXIT_OK if report.status != "diverged" else EXIT_NUMERICAL


def _cmd_gradcheck(args) -> int:
    if args.scenario:
        vsc = _load_validated(args.scenario)
    else:
        from .presets import smooth_default
        vsc = smooth_default(12, 12, 6, seed=args.seed or 0)
    if args.seed is not None:
        vsc = vsc.with_tolerances(seed=args.seed)
    started = time.time()
    rows = gradient_check(vsc, n_directions=args.directions, seed=vsc.tolerances.seed)
    print(f"{'dir':>4} {'analytic':>24} {'central diff':>24} {'rel err':>12}  result")
    for r in rows:
        print(f"{r['direction']:>4} {r['analytic']:>24.16e} {r['fd']:>24.16e} "
              f"{r['rel_err']:>12.3e}  {'pass' if r['passed'] else 'FAIL'}")
    all_ok = all(r["passed"] for r in rows)
    print(f"gradcheck: {'all pass' if all_ok else 'FAILURES'} "
          f"({len(rows)} directions, tolerance 1e-6)")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "gradcheck.json").write_text(json.dumps(rows, indent=2) + "\n")
        write_manifest(out, "gradcheck", vars(args), started, [out / "gradcheck.json"],
                       seed=vsc.tolerances.seed)
    return EXIT_OK if all_ok else EXIT_CHECK_FAILED


def _cmd_oracle(args) -> int:
    started = time.time()
    names = args.only.split(",") if args.only else None
    report = run_oracles(names=names, seed=args.seed or 0)
    text = json.dumps(report, indent=2)
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "oracle_report.json").write_text(text + "\n")
        write_manifest(out, "oracle", vars(args), started, [out / "oracle_report.json"],
                       seed=args.seed or 0)
    return EXIT_OK if report["all_passed"] else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sizepop",
        description="Size-structured population solver with diffusion and "
                    "adjoint-based optimal fertility control.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="solve the state equation forward in time")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--beta", required=True, help="control: a constant or a field CSV path")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("adjoint", help="solve the adjoint system backward in time")
    p.add_argument("--scenario", required=True)
    p.add_argument("--beta", required=True, help="control: a constant or a field CSV path")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=_cmd_adjoint)

    p = sub.add_parser("optimize", help="projected fixed-point sweep to the optimal control")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--relax", type=float, default=None, help="relaxation weight in (0,1]")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=_cmd_optimize)

    p = sub.add_parser("gradcheck", help="adjoint gradient vs central differences")
    p.add_argument("--scenario", default=None)
    p.add_argument("--directions", type=int, default=5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("oracle", help="run the built-in verification oracles")
    p.add_argument("--only", default=None,
                   help=f"comma-separated subset of {', '.join(ORACLE_NAMES)}")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ScenarioFileError, ScenarioValidationError, RateSpecError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
