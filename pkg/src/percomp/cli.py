"""percomp command line: run one experiment on a scenario and write its
artifacts (CSV fields, JSON reports, a run manifest) to

    $PERCOMP_OUT/<scenario name>-<scenario hash>/<subcommand>/

Exit status: 0 success, 2 inconclusive outcome, 1 error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import (DEFAULT_K_GRID, nodal_structure, segregated_seed_bank,
                          solve_segregated, sweep_k, sweep_verdicts)
from .eigen import ConvergenceError, principal_eigen_periodic
from .evolution import Stepper, default_dt, integrate
from .front import (MIN_PERIODS, FrontDomain, measure_speed, reconstruct_profile, run_front,
                    verify_front)
from .grid import GridError, PeriodicGrid
from .model import ModelError
from .scenario import Scenario, ScenarioError, default_scenario, load_scenario
from .stationary import (SolverError, StatePair, default_seed_bank, extinction_stability,
                         extinction_states, find_coexistence_states)

OUT_ENV = "PERCOMP_OUT"
EXIT_OK, EXIT_ERROR, EXIT_INCONCLUSIVE = 0, 1, 2
MANIFEST = "manifest.json"
SWEEP_UNITS = {
    "k": "1/(density*time)", "sup_u1": "density", "sup_u2": "density",
    "ratio_min": "dimensionless", "ratio_max": "dimensionless", "max_k_u1u2": "density/time",
    "kU_min": "1/time", "kU_max": "1/time", "segregation_integral": "density^2*length",
    "limit_residual": "1/time^2", "lambda_max": "1/time", "all_unstable": "bool",
    "all_certified": "bool",
}


class Run:
    """Output directory of one subcommand; the single writer of its files."""

    def __init__(self, scenario: Scenario, command: str, root: Path | None = None):
        root = Path(root or os.environ.get(OUT_ENV, "percomp_runs"))
        self.scenario, self.command = scenario, command
        self.dir = root / f"{scenario.name}-{scenario.digest()}" / command
        self.dir.mkdir(parents=True, exist_ok=True)
        self.artifacts: dict[str, dict] = {}
        self.started = time.perf_counter()
        self.started_at = datetime.now(timezone.utc).isoformat(timespec="seconds")

    def write_csv(self, name: str, columns: dict[str, np.ndarray], units: dict[str, str]) -> Path:
        header = ",".join(columns)
        data = np.column_stack([np.asarray(v, dtype=float) for v in columns.values()])
        buf = io.StringIO()
        unit_text = " ".join(f"{c}[{units[c]}]" for c in columns)
        buf.write(f"# manifest={MANIFEST} scenario={self.scenario.digest()} units: {unit_text}\n")
        np.savetxt(buf, data, delimiter=",", header=header, comments="", fmt="%.17g")
        path = self.dir / name
        path.write_text(buf.getvalue())
        self.artifacts[name] = {"format": "csv", "columns": list(columns), "units": units}
        return path

    def write_json(self, name: str, payload) -> Path:
        path = self.dir / name
        body = {"manifest": MANIFEST, "scenario": self.scenario.digest(), "data": payload}
        path.write_text(json.dumps(body, indent=2, sort_keys=True, default=_jsonable) + "\n")
        self.artifacts[name] = {"format": "json"}
        return path

    def finish(self, verdict: dict, flags: dict) -> Path:
        t = self.scenario.tolerances
        manifest = {
            "scenario_hash": self.scenario.digest(),
            "scenario": self.scenario.to_dict(),
            "toolkit_version": __version__,
            "command": self.command,
            "flags": flags,
            "started_at": self.started_at,
            "wall_clock_s": round(time.perf_counter() - self.started, 3),
            "tolerances": {"newton": t.newton_tol, "eigen_rtol": t.eigen_rtol,
                           "dedup": t.dedup_tol},
            "verdict": verdict,
            "artifacts": self.artifacts,
        }
        path = self.dir / MANIFEST
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable) + "\n")
        (self.dir / "scenario.toml").write_text(self.scenario.dumps())
        return path


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _finite(value):
    return None if value is None or (isinstance(value, float) and not math.isfinite(value)) else value


# ---------------------------------------------------------------- subcommands

def cmd_check(sc: Scenario, args, run: Run) -> tuple[int, dict]:
    report = sc.check().to_dict()
    run.write_json("hypotheses.json", report)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK, {"hfreq_ok": report["hfreq_ok"]}


def cmd_extinction(sc: Scenario, args, run: Run) -> tuple[int, dict]:
    grid = PeriodicGrid(sc.params.L, sc.n)
    e1, e2 = extinction_states(sc.spec, sc.params, grid)
    for i, e in ((1, e1), (2, e2)):
        run.write_csv(f"extinction_u{i}.csv", {"x": grid.x, "u": e},
                      {"x": "length", "u": "density"})
    s1, s2 = extinction_stability(sc.params, sc.spec, grid=grid, ext=(e1, e2))
    out = {"u1_tilde": {"min": float(e1.min()), "max": float(e1.max()),
                        "lambda": s1.lambda_principal, "classification": s1.classification,
                        "residual": s1.residual_inf},
           "u2_tilde": {"min": float(e2.min()), "max": float(e2.max()),
                        "lambda": s2.lambda_principal, "classification": s2.classification,
                        "residual": s2.residual_inf}}
    run.write_json("extinction.json", out)
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK, {"stable": [s1.classification, s2.classification]}


def cmd_eigen(sc: Scenario, args, run: Run) -> tuple[int, dict]:
    """lambda_1,per(-delta_i D2 - f_i[u]) at u = 0 or at the extinction state."""
    i = args.species
    delta = 1.0 if i == 1 else sc.params.d

    def solve(n):
        grid = PeriodicGrid(sc.params.L, n)
        coeffs = sc.spec.sample(grid)
        if args.at == "zero":
            f = coeffs.f(i, 0.0)
        else:
            f = coeffs.f(i, extinction_states(sc.spec, sc.params, grid)[i - 1])
        return principal_eigen_periodic(delta, f, grid)

    coarse, fine = solve(sc.n), solve(2 * sc.n)
    out = {"lambda": coarse.lam, "residual": coarse.residual, "n": sc.n,
           "refinement_estimate": abs(fine.lam - coarse.lam), "species": i, "at": args.at}
    run.write_json("eigen.json", out)
    grid = PeriodicGrid(sc.params.L, sc.n)
    run.write_csv("eigenfunction.csv", {"x": grid.x, "phi": coarse.phi},
                  {"x": "length", "phi": "sup-normalised"})
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK, {"lambda": coarse.lam}


def cmd_coexist(sc: Scenario, args, run: Run) -> tuple[int, dict]:
    grid = PeriodicGrid(sc.params.L, sc.n)
    coeffs = sc.spec.sample(grid)
    ext = extinction_states(sc.spec, sc.params, grid)
    seeds = default_seed_bank(ext, coeffs, sc.params, n_random=args.seeds, seed=sc.seed)
    reports = find_coexistence_states(sc.params, sc.spec, seeds, grid=grid, ext=ext)
    payload = [r.to_dict() for r in reports]
    run.write_json("coexist.json", payload)
    for j, r in enumerate(reports):
        run.write_csv(f"state_{j}.csv", {"x": grid.x, "u1": r.state.u1, "u2": r.state.u2},
                      {"x": "length", "u1": "density", "u2": "density"})
    if args.emit:
        Path(args.emit).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK, {"n_states": len(reports),
                     "all_unstable": all(r.classification == "unstable" for r in reports)}


def _simulate_initial(sc: Scenario, args, grid: PeriodicGrid, ext) -> StatePair:
    e1, e2 = ext
    if args.ic == "extinction1":
        return StatePair(e1.copy(), np.zeros_like(e2))
    if args.ic == "extinction2":
        return StatePair(np.zeros_like(e1), e2.copy())
    if args.ic == "front":
        # one interface pair per cell: species 1 near x = 0, species 2 near x = L/2
        s = 0.5 * (1.0 + np.cos(2 * np.pi * grid.x / grid.length))
        return StatePair(e1 * s, e2 * (1.0 - s))
    if not args.ic_file:
        raise ValueError("--ic file needs --ic-file PATH (CSV with columns x,u1,u2)")
    data = read_fields(args.ic_file, ("u1", "u2"))
    if data.shape[0] != grid.n:
        raise ValueError(f"initial data has {data.shape[0]} rows, grid has {grid.n} nodes")
    return StatePair(data[:, 0], data[:, 1])


def read_fields(path, columns: tuple[str, ...]) -> np.ndarray:
    """Named columns of a CSV written by this tool ('#' lines skipped)."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    missing = [c for c in columns if not rows or c not in rows[0]]
    if missing:
        raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
    return np.array([[float(r[c]) for c in columns] for r in rows])


def cmd_simulate(sc: Scenario, args, run: Run) -> tuple[int, dict]:
    grid = PeriodicGrid(sc.params.L, sc.n)
    coeffs = sc.spec.sample(grid)
    ext = extinction_states(sc.spec, sc.params, grid)
    dt = args.dt or default_dt(coeffs, sc.params, float(max(ext[0].max(), ext[1].max())))
    t_end = round(args.t_end / dt) * dt
    stepper = Stepper(sc.params, coeffs, grid, dt, args.scheme)
    initial = _simulate_initial(sc, args, grid, ext)
    final, traj = integrate(initial, stepper, t_end, record_every=args.record_every)
    t = np.repeat(traj.times, grid.n)
    x = np.tile(grid.x, len(traj.times))
    run.write_csv("trajectory.csv", {"t": t, "x": x,
                                     "u1": np.concatenate([s.u1 for s in traj.states]),
                                     "u2": np.concatenate([s.u2 for s in traj.states])},
                  {"t": "time", "x": "length", "u1": "density", "u2": "density"})
    out = {"dt": dt, "t_end": t_end, "steps": round(t_end / dt), "clamps": traj.clamps,
           "final_sup_u1": float(final.u1.max()), "final_sup_u2": float(final.u2.max())}
    run.write_json("simulate.json", out)
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK, {"clamps": traj.clamps}


def cmd_front(sc: Scenario, args, run: Run) -> tuple[int, dict]:
    n = args.grid or 64
    cell = PeriodicGrid(sc.params.L, n)
    coeffs = sc.spec.sample(cell)
    ext = extinction_states(sc.spec, sc.params, cell)
    dt = args.dt or float(f"{default_dt(coeffs, sc.params, float(max(ext[0].max(), ext[1].max()))):.1g}")
    t_end = max(1, round(args.t_end / dt)) * dt
    domain = FrontDomain(args.periods, n, sc.params.L)
    traj = run_front(domain, sc.spec, sc.params, ext, t_end=t_end, dt=dt,
                     record_every=args.record_every)
    result = measure_speed(traj, domain, ext, level=args.level)
    out = {"front": result.to_dict(), "dt": dt, "t_end": t_end, "periods": args.periods,
           "n_per_period": n, "clamps": traj.clamps}
    code = EXIT_OK
    if result.accepted:
        ver = verify_front(result, traj, domain, ext)
        out["verification"] = {"monotone_phi1": ver.monotone_phi1,
                               "monotone_phi2": ver.monotone_phi2,
                               "periodic": ver.periodic, "limits": ver.limits,
                               **ver.details}
        prof = reconstruct_profile(traj, domain, ext, result.c)
        order = np.lexsort((prof["x"], prof["xi"]))
        run.write_csv("profile.csv", {key: prof[key][order] for key in ("xi", "x", "phi1", "phi2")},
                      {"xi": "length", "x": "length", "phi1": "density", "phi2": "density"})
        if not ver.passed:
            code = EXIT_INCONCLUSIVE
    elif result.status in ("inconclusive", "rejected"):
        code = EXIT_INCONCLUSIVE
    run.write_csv("level_set.csv", {"t": result.times, "position": result.positions},
                  {"t": "time", "position": "length"})
    out["front"] = {k: _finite(v) for k, v in out["front"].items()}
    run.write_json("front.json", out)
    print(json.dumps(out, indent=2, sort_keys=True))
    return code, {"status": result.status, "c": _finite(result.c)}


def cmd_sweep(sc: Scenario, args, run: Run) -> tuple[int, dict]:
    k_values = args.k_values or list(DEFAULT_K_GRID)
    records = sweep_k(sc.spec, sc.params, k_values, n=sc.n, seed=sc.seed, threads=args.threads)
    rows = [r.to_dict() for r in records]
    cols = list(rows[0])
    run.write_csv("sweep.csv", {c: [float(r[c]) for r in rows] for c in cols},
                  {c: SWEEP_UNITS.get(c, "count") for c in cols})
    verdicts = sweep_verdicts(records)
    run.write_json("sweep_verdicts.json", verdicts)
    print(json.dumps(verdicts, indent=2, sort_keys=True, default=_jsonable))
    return EXIT_OK, {"empirical_k_star": verdicts["empirical_k_star"]}


def cmd_segregate(sc: Scenario, args, run: Run) -> tuple[int, dict]:
    grid = PeriodicGrid(sc.params.L, sc.n)
    ext = extinction_states(sc.spec, sc.params, grid)
    seeds = segregated_seed_bank(ext, sc.params, n_random=args.n_random, seed=sc.seed)
    kinds = ("eta", "gamma") if args.kind == "both" else (args.kind,)
    out, summary = {}, {}
    for kind in kinds:
        sols = solve_segregated(kind, sc.spec, sc.params, seeds, grid=grid)
        entries = []
        for s in sols:
            entry = {"classification": s.classification, "residual": s.residual,
                     "max": float(s.z.max()), "min": float(s.z.min())}
            if s.classification == "sign_changing":
                entry["nodal"] = nodal_structure(s, sc.spec, sc.params, grid)
            entries.append(entry)
        out[kind] = entries
        summary[kind] = sorted({s.classification for s in sols})
        if sols:
            cols = {"x": grid.x, **{f"z{j}": s.z for j, s in enumerate(sols)}}
            run.write_csv(f"segregated_{kind}.csv", cols,
                          {c: ("length" if c == "x" else "density") for c in cols})
    run.write_json("segregate.json", out)
    print(json.dumps(out, indent=2, sort_keys=True, default=_jsonable))
    return EXIT_OK, {"classifications": summary}


COMMANDS = {
    "check": cmd_check, "extinction": cmd_extinction, "eigen": cmd_eigen,
    "coexist": cmd_coexist, "simulate": cmd_simulate, "front": cmd_front,
    "sweep": cmd_sweep, "segregate": cmd_segregate,
}


class _Parser(argparse.ArgumentParser):
    # bad usage is an error (1); status 2 is reserved for inconclusive results
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="percomp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = _Parser(add_help=False)
    common.add_argument("--scenario", help="scenario TOML file (default: built-in scenario)")
    common.add_argument("--out", help=f"output root (default: ${OUT_ENV} or ./percomp_runs)")
    common.add_argument("--threads", type=int, default=1, help="cap on parallel jobs")
    common.add_argument("--grid", type=int, help="override nodes per period")
    common.add_argument("--tol", type=float, help="override the Newton tolerance")
    common.add_argument("--k", type=float, help="override the competition rate k")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("check", "extinction"):
        sub.add_parser(name, parents=[common])
    p = sub.add_parser("eigen", parents=[common])
    p.add_argument("--species", type=int, choices=(1, 2), default=1)
    p.add_argument("--at", choices=("zero", "extinction"), default="zero")
    p = sub.add_parser("coexist", parents=[common])
    p.add_argument("--seeds", type=int, default=16, help="number of random seeds")
    p.add_argument("--emit", help="also write the JSON report array here")
    p = sub.add_parser("simulate", parents=[common])
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--dt", type=float)
    p.add_argument("--ic", choices=("extinction1", "extinction2", "front", "file"), default="front")
    p.add_argument("--ic-file")
    p.add_argument("--scheme", choices=("imex", "explicit"), default="imex")
    p.add_argument("--record-every", type=int, default=100)
    p = sub.add_parser("front", parents=[common])
    p.add_argument("--periods", type=int, default=MIN_PERIODS)
    p.add_argument("--level", type=float, default=0.5)
    p.add_argument("--t-end", type=float, default=90.0)
    p.add_argument("--dt", type=float)
    p.add_argument("--record-every", type=int, default=5)
    p = sub.add_parser("sweep", parents=[common])
    p.add_argument("--k-values", type=float, nargs="+")
    p = sub.add_parser("segregate", parents=[common])
    p.add_argument("--kind", choices=("eta", "gamma", "both"), default="both")
    p.add_argument("--n-random", type=int, default=32)
    return parser


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # --help and --version exit 0, bad usage exits 1
        return exc.code if isinstance(exc.code, int) else EXIT_ERROR
    try:
        sc = load_scenario(args.scenario) if args.scenario else default_scenario()
        # the front grid flag sets nodes per period of the long domain, not the cell
        sc = sc.with_overrides(n=None if args.command == "front" else args.grid,
                               k=args.k, tol=args.tol)
        out = Run(sc, args.command, args.out)
        code, verdict = COMMANDS[args.command](sc, args, out)
        flags = {k: v for k, v in vars(args).items() if k not in ("out",)}
        out.finish(verdict, flags)
        return code
    except (ScenarioError, ModelError, GridError, SolverError, ConvergenceError,
            ValueError, OSError) as exc:
        print(f"percomp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
