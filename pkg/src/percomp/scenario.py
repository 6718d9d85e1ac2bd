"""Scenario files: TOML with a [scenario] table holding the parameters and
one sub-table per coefficient series, plus [grid] and [solver] defaults.

    [scenario]
    name = "default"
    L = 1.0
    d = 2.0
    k = 100.0
    alpha = 1.0
    seed = 0

    [scenario.mu1]
    const = 1.0
    sin = [0.3]
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import tomli
import tomli_w

from .model import (DEFAULT_N, FourierSeries, HypothesisReport, ModelError, ReactionSpec,
                    SystemParams, check_hypotheses)

SERIES = ("mu1", "nu1", "mu2", "nu2")
SCENARIO_KEYS = {"name", "L", "d", "k", "alpha", "seed", *SERIES}
SERIES_KEYS = {"const", "cos", "sin"}
GRID_KEYS = {"n"}
SOLVER_KEYS = {"newton_tol", "eigen_rtol", "dedup_tol"}
TOP_KEYS = {"scenario", "grid", "solver"}


class ScenarioError(ValueError):
    """Unreadable or invalid scenario file."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line, self.column = line, column


@dataclass(frozen=True)
class Tolerances:
    newton_tol: float = 1e-10
    eigen_rtol: float = 1e-12
    dedup_tol: float = 1e-6


@dataclass(frozen=True)
class Scenario:
    name: str
    params: SystemParams
    spec: ReactionSpec
    n: int = DEFAULT_N
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed: int = 0

    def check(self) -> HypothesisReport:
        return check_hypotheses(self.spec, self.params)

    def with_overrides(self, *, n: int | None = None, k: float | None = None,
                       tol: float | None = None) -> "Scenario":
        out = self
        if n is not None:
            out = replace(out, n=int(n))
        if k is not None:
            out = replace(out, params=out.params.with_k(float(k)))
        if tol is not None:
            out = replace(out, tolerances=replace(out.tolerances, newton_tol=float(tol)))
        return out

    def to_dict(self) -> dict:
        sc = {"name": self.name, "L": self.params.L, "d": self.params.d, "k": self.params.k,
              "alpha": self.params.alpha, "seed": self.seed}
        for key in SERIES:
            s: FourierSeries = getattr(self.spec, key)
            entry = {"const": s.const}
            if s.cos:
                entry["cos"] = list(s.cos)
            if s.sin:
                entry["sin"] = list(s.sin)
            sc[key] = entry
        t = self.tolerances
        return {"scenario": sc, "grid": {"n": self.n},
                "solver": {"newton_tol": t.newton_tol, "eigen_rtol": t.eigen_rtol,
                           "dedup_tol": t.dedup_tol}}

    def dumps(self) -> str:
        """Canonical text: fixed key order, repr floats."""
        return tomli_w.dumps(self.to_dict())

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]


def default_scenario() -> Scenario:
    """Heterogeneous scenario used throughout the tests and examples."""
    spec = ReactionSpec(FourierSeries(1.0, sin=(0.3,)), FourierSeries(1.0),
                        FourierSeries(1.0, cos=(0.2,)), FourierSeries(1.0), period=1.0)
    return Scenario("default", SystemParams(d=2.0, k=100.0, alpha=1.0, L=1.0), spec)


def _unknown(table: dict, allowed: set, where: str) -> None:
    extra = sorted(set(table) - allowed)
    if extra:
        raise ScenarioError(f"unknown key(s) in [{where}]: {', '.join(extra)}")


def _number(table: dict, key: str, where: str, default=None) -> float:
    if key not in table:
        if default is None:
            raise ScenarioError(f"missing key {key!r} in [{where}]")
        return default
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"[{where}] {key} must be a number, got {value!r}")
    return float(value)


def _series(table, where: str, default: float) -> FourierSeries:
    if table is None:
        return FourierSeries(default)
    if isinstance(table, (int, float)) and not isinstance(table, bool):
        return FourierSeries(float(table))
    if not isinstance(table, dict):
        raise ScenarioError(f"[{where}] must be a number or a table")
    _unknown(table, SERIES_KEYS, where)
    harmonics = {}
    for key in ("cos", "sin"):
        values = table.get(key, [])
        if not isinstance(values, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
            raise ScenarioError(f"[{where}] {key} must be a list of numbers")
        harmonics[key] = tuple(float(v) for v in values)
    return FourierSeries(_number(table, "const", where, default), **harmonics)


def parse_scenario(text: str) -> Scenario:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+), column (\d+)", str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ScenarioError(f"parse error: {str(exc).split(' (at')[0]}", line, col) from None
    _unknown(data, TOP_KEYS, "top level")
    sc = data.get("scenario")
    if not isinstance(sc, dict):
        raise ScenarioError("missing [scenario] table")
    _unknown(sc, SCENARIO_KEYS, "scenario")
    L = _number(sc, "L", "scenario")
    series = {key: _series(sc.get(key), f"scenario.{key}", 1.0) for key in SERIES}
    spec = ReactionSpec(**series, period=L)
    params = SystemParams(d=_number(sc, "d", "scenario", 1.0), k=_number(sc, "k", "scenario", 100.0),
                          alpha=_number(sc, "alpha", "scenario", 1.0), L=L)
    grid = data.get("grid", {})
    _unknown(grid, GRID_KEYS, "grid")
    solver = data.get("solver", {})
    _unknown(solver, SOLVER_KEYS, "solver")
    tol = Tolerances(**{key: _number(solver, key, "solver", getattr(Tolerances, key))
                        for key in SOLVER_KEYS})
    n = grid.get("n", DEFAULT_N)
    seed = sc.get("seed", 0)
    if not isinstance(n, int) or isinstance(n, bool) or not isinstance(seed, int):
        raise ScenarioError("grid.n and scenario.seed must be integers")
    name = sc.get("name", "scenario")
    if not isinstance(name, str):
        raise ScenarioError("scenario.name must be a string")
    scenario = Scenario(name, params, spec, n=n, tolerances=tol, seed=seed)
    # validation names the violated hypothesis via ModelError
    scenario.check()
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc.strerror}") from None
    return parse_scenario(text)


__all__ = ["Scenario", "ScenarioError", "Tolerances", "ModelError", "default_scenario",
           "load_scenario", "parse_scenario"]
