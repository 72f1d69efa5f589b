"""Command-line pipelines: validate, solve, rollout, verify, report.

Exit codes: 0 success, 1 spec or validation error, 2 solver failure,
3 verification failure.  Every file written is listed in ``summary.txt``;
outputs are byte-identical across runs with the same flags and seed.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backward import UnsolvedBelief, measure_slack, solve, write_tables
from .forward import TreeTooLarge, exact_payoff, make_strategy, rollout, write_trajectories
from .game import SpecError, load_spec, validate
from .grid import BeliefGrid, Interp
from .stage import Mode, SolverConfig
from .verify import OracleConfig, TreeTooLarge as OracleTreeTooLarge, check_cpse, check_pbe, reports_csv

EXIT_OK, EXIT_SPEC, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3


@dataclass
class RunConfig:
    command: str
    spec: Path
    mode: Mode = Mode.PBE
    grid: int = 20
    interp: Interp = Interp.LINEAR
    lookup: str = "exact"
    tol_fp: float = 1e-6
    tol_dev: float = 1e-6
    paths: int = 0
    seed: int = 0
    out: Path = Path("out")
    verify: bool = False


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="infodesign", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, solve_flags=True):
        p.add_argument("--spec", required=True, type=Path, help="game document (JSON)")
        if not solve_flags:
            return
        p.add_argument("--mode", choices=[m.value for m in Mode], default="pbe")
        p.add_argument("--grid", type=int, default=20, help="belief grid resolution M")
        p.add_argument("--interp", choices=[i.value for i in Interp], default="linear")
        p.add_argument("--lookup", choices=["exact", "nearest"], default="exact",
                       help="prescriptions between grid points: stage re-solve or nearest grid point")
        p.add_argument("--tol-fp", type=float, default=1e-6, help="stage fixed-point tolerance")
        p.add_argument("--tol-dev", type=float, default=1e-6, help="verification tolerance")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", type=Path, default=Path("out"))

    common(sub.add_parser("validate", help="check a game document"), solve_flags=False)
    for name, paths, helptext in (("solve", 0, "tabulate the equilibrium"),
                                  ("rollout", 10_000, "solve, then simulate play"),
                                  ("verify", 0, "solve, then run the deviation oracles")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--paths", type=int, default=paths, help="number of simulated paths")
        p.add_argument("--verify", action="store_true", default=name == "verify",
                       help="run the deviation oracles")
    p = sub.add_parser("report", help="print the summary of an output directory")
    p.add_argument("--out", type=Path, default=Path("out"))
    return parser


def _config(args) -> RunConfig:
    cfg = RunConfig(command=args.command, spec=args.spec, mode=Mode(args.mode), grid=args.grid,
                    interp=Interp(args.interp), lookup=args.lookup, tol_fp=args.tol_fp,
                    tol_dev=args.tol_dev, paths=args.paths, seed=args.seed, out=args.out,
                    verify=args.verify)
    if cfg.grid < 1:
        raise SpecError("--grid must be >= 1")
    if cfg.paths < 0:
        raise SpecError("--paths must be >= 0")
    if cfg.tol_fp <= 0 or cfg.tol_dev <= 0:
        raise SpecError("tolerances must be positive")
    return cfg


def _fmt(v) -> str:
    return f"{float(v):.10g}"


def _vec(v) -> str:
    return "[" + ", ".join(_fmt(x) for x in np.atleast_1d(v)) + "]"


def _horizon_csv(per_period: np.ndarray, discount: float) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    P = per_period.shape[1]
    w.writerow(["t"] + [f"reward_{p}" for p in range(P)] + [f"cumulative_{p}" for p in range(P)])
    cum = np.zeros(P)
    for t, row in enumerate(per_period, start=1):
        cum = cum + discount ** (t - 1) * row
        w.writerow([t] + [repr(float(v)) for v in row] + [repr(float(v)) for v in cum])
    return buf.getvalue()


def _players(n_receivers: int) -> list[str]:
    return ["sender"] + [f"receiver {i + 1}" for i in range(n_receivers)]


def _pipeline(cfg: RunConfig) -> int:
    spec = load_spec(cfg.spec)
    problems = validate(spec)
    if problems:
        raise SpecError("; ".join(problems))
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    grid = BeliefGrid(spec.n_states, cfg.grid, cfg.interp)
    solver_cfg = SolverConfig(tol_fp=cfg.tol_fp)
    policy, tables = solve(spec, cfg.mode, grid, solver_cfg)
    files = list(write_tables(policy, out))
    players = _players(spec.n_receivers)
    lines = [
        f"game: {spec.name or cfg.spec.name}",
        f"mode: {cfg.mode.value}",
        f"grid: M={cfg.grid} ({cfg.interp.value}), {len(grid)} points, lookup {cfg.lookup}",
        f"horizon: {spec.horizon}, discount {_fmt(spec.discount)}",
    ]
    failures = policy.failures()
    lines.append("policy: complete" if not failures else f"policy: partial ({len(failures)} failed points)")
    prior_row = tables.grid.interpolate(tables.sender[1], spec.initial[None])[0]
    sender_v = float(spec.initial @ prior_row) if cfg.mode is Mode.PBE else float(prior_row)
    recv_v = tables.grid.interpolate(tables.receiver[1], spec.initial[None])[0]
    lines.append(f"tabulated value at the prior: sender {_fmt(sender_v)}, receivers {_vec(recv_v)}")
    code = EXIT_OK
    strategy = make_strategy(policy, cfg.lookup)
    try:
        slack = measure_slack(policy, cfg.lookup)
        lines.append(f"interpolation slack (value): {_vec(slack.value)}")
        lines.append(f"interpolation slack (deviation): {_vec(slack.deviation)}")
        try:
            exact = exact_payoff(spec, strategy)
            lines.append("expected payoffs (exact): " + ", ".join(
                f"{p} {_fmt(v)}" for p, v in zip(players, exact.values)))
            path = out / "horizon.csv"
            path.write_text(_horizon_csv(exact.per_period, spec.discount))
            files.append(path)
        except TreeTooLarge:
            lines.append("expected payoffs (exact): history tree too large")
        if cfg.paths > 0:
            result = rollout(spec, strategy, cfg.paths, cfg.seed)
            mean, se = result.mean(), result.stderr()
            lines.append(f"rollout: {cfg.paths} paths, seed {cfg.seed}")
            lines += [f"  {p}: {_fmt(m)} +/- {_fmt(s)}" for p, m, s in zip(players, mean, se)]
            files.append(write_trajectories(result, out / "trajectories.csv"))
        if cfg.verify:
            ocfg = OracleConfig(tolerance=cfg.tol_dev)
            if cfg.mode is Mode.PBE:
                reports = check_pbe(spec, strategy, cfg=ocfg, slack=slack.deviation)
            else:
                reports = list(check_cpse(spec, strategy, cfg=ocfg, slack=slack.deviation))
            verdict = "PASS" if all(r.passed for r in reports) else "FAIL"
            lines.append(f"verification: {verdict}")
            lines += ["  " + l for r in reports for l in r.render().splitlines()]
            (out / "verification.csv").write_text(reports_csv(reports))
            (out / "verification.txt").write_text("\n\n".join(r.render() for r in reports) + "\n")
            files += [out / "verification.csv", out / "verification.txt"]
            if verdict == "FAIL":
                code = EXIT_VERIFY
    except UnsolvedBelief as exc:
        lines.append(f"solver failure: {exc}")
        code = EXIT_SOLVER
    except OracleTreeTooLarge as exc:
        lines.append(f"verification skipped: {exc}")
        code = EXIT_SOLVER
    if failures and code == EXIT_OK:
        code = EXIT_SOLVER
    lines.append("files:")
    lines += [f"  {p.name}" for p in files + [out / "summary.txt"]]
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text)
    sys.stdout.write(text)
    return code


def _report(out: Path) -> int:
    summary = out / "summary.txt"
    if not summary.exists():
        print(f"error: no summary at {str(summary)!r}", file=sys.stderr)
        return EXIT_SPEC
    text = summary.read_text()
    sys.stdout.write(text)
    listed = text.split("files:\n", 1)[-1].split()
    missing = [name for name in listed if not (out / name).exists()]
    if missing:
        print(f"error: declared files missing: {', '.join(missing)}", file=sys.stderr)
        return EXIT_SPEC
    return EXIT_OK


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return _report(args.out)
        if args.command == "validate":
            spec = load_spec(args.spec)
            problems = validate(spec)
            for p in problems:
                print(f"invalid: {p}", file=sys.stderr)
            if problems:
                return EXIT_SPEC
            print(f"{args.spec}: ok ({spec.n_states} states, {spec.n_signals} signals, "
                  f"{spec.n_receivers} receiver(s), horizon {spec.horizon})")
            return EXIT_OK
        return _pipeline(_config(args))
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
