"""Reaction terms f_i(u, x) = mu_i(x) - nu_i(x) u, their derivatives, the
segregated limit nonlinearities and the hypothesis audit."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import PeriodicGrid

DEFAULT_N = 256
AUDIT_FACTOR = 8


class ModelError(ValueError):
    """A reaction or parameter set violating one of the standing hypotheses."""

    def __init__(self, hypothesis: str, message: str):
        super().__init__(f"{hypothesis}: {message}")
        self.hypothesis = hypothesis


@dataclass(frozen=True)
class FourierSeries:
    """const + sum_h cos[h-1] cos(2 pi h x / period) + sin[h-1] sin(2 pi h x / period)."""

    const: float
    cos: tuple[float, ...] = ()
    sin: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "cos", tuple(float(c) for c in self.cos))
        object.__setattr__(self, "sin", tuple(float(s) for s in self.sin))
        object.__setattr__(self, "const", float(self.const))

    @classmethod
    def constant(cls, value: float) -> "FourierSeries":
        return cls(value)

    @property
    def harmonics(self) -> int:
        return max(len(self.cos), len(self.sin))

    def __call__(self, x, period: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.const)
        for h, a in enumerate(self.cos, start=1):
            if a:
                out = out + a * np.cos(2 * np.pi * h * x / period)
        for h, b in enumerate(self.sin, start=1):
            if b:
                out = out + b * np.sin(2 * np.pi * h * x / period)
        return out

    def shifted(self, amount: float) -> "FourierSeries":
        return FourierSeries(self.const + amount, self.cos, self.sin)


@dataclass(frozen=True)
class SystemParams:
    d: float
    k: float
    alpha: float
    L: float

    def __post_init__(self):
        for name in ("d", "k", "alpha", "L"):
            value = getattr(self, name)
            # k = 0 is allowed for decoupled reductions
            if name == "k" and value == 0:
                continue
            if not (math.isfinite(value) and value > 0):
                raise ModelError("parameters", f"{name} must be positive and finite, got {value}")

    def with_k(self, k: float) -> "SystemParams":
        return SystemParams(self.d, k, self.alpha, self.L)


@dataclass(frozen=True)
class ReactionSpec:
    mu1: FourierSeries
    nu1: FourierSeries
    mu2: FourierSeries
    nu2: FourierSeries
    period: float

    @classmethod
    def homogeneous(cls, mu1=1.0, nu1=1.0, mu2=1.0, nu2=1.0, period=1.0) -> "ReactionSpec":
        c = FourierSeries.constant
        return cls(c(mu1), c(nu1), c(mu2), c(nu2), period)

    def mu(self, i: int) -> FourierSeries:
        return (self.mu1, self.mu2)[_species(i) - 1]

    def nu(self, i: int) -> FourierSeries:
        return (self.nu1, self.nu2)[_species(i) - 1]

    def swapped(self) -> "ReactionSpec":
        return ReactionSpec(self.mu2, self.nu2, self.mu1, self.nu1, self.period)

    def sample(self, grid: PeriodicGrid) -> "Coefficients":
        """Coefficients at the grid nodes.

        When the grid covers a whole number of periods with a whole number of
        nodes per period, one period is sampled and tiled so that shifting by
        one period is an exact index roll.
        """
        reps = grid.length / self.period
        n_rep = round(reps)
        per = grid.n // n_rep if n_rep else 0
        if n_rep >= 1 and abs(reps - n_rep) < 1e-12 * max(1.0, reps) and per * n_rep == grid.n:
            x = np.arange(per) * (self.period / per)
            tile = lambda s: np.tile(s(x, self.period), n_rep)  # noqa: E731
        else:
            x = grid.x
            tile = lambda s: s(x % self.period, self.period)  # noqa: E731
        return Coefficients(tile(self.mu1), tile(self.nu1), tile(self.mu2), tile(self.nu2))


@dataclass(frozen=True)
class Coefficients:
    """mu_i, nu_i sampled on a grid; vectorised f_i and g_i."""

    mu1: np.ndarray
    nu1: np.ndarray
    mu2: np.ndarray
    nu2: np.ndarray

    def mu(self, i: int) -> np.ndarray:
        return (self.mu1, self.mu2)[_species(i) - 1]

    def nu(self, i: int) -> np.ndarray:
        return (self.nu1, self.nu2)[_species(i) - 1]

    def f(self, i: int, u) -> np.ndarray:
        return self.mu(i) - self.nu(i) * u

    def g(self, i: int, u) -> np.ndarray:
        return self.mu(i) - 2.0 * self.nu(i) * u


@dataclass(frozen=True)
class HypothesisReport:
    m1: float
    m2: float
    M1: float
    M2: float
    a1: float
    a2: float
    h2_ok: bool
    h3_ok: bool
    hfreq_ok: bool
    hfreq_margin: float
    audit_n: int
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "m1": self.m1, "m2": self.m2, "M1": self.M1, "M2": self.M2,
            "a1": self.a1, "a2": self.a2,
            "h2_ok": self.h2_ok, "h3_ok": self.h3_ok, "hfreq_ok": self.hfreq_ok,
            "hfreq_margin": self.hfreq_margin, "audit_n": self.audit_n,
            "notes": list(self.notes),
        }


def _species(i: int) -> int:
    if i not in (1, 2):
        raise ValueError(f"species index must be 1 or 2, got {i!r}")
    return i


def eval_f(spec: ReactionSpec, i: int, u, x):
    return spec.mu(i)(x, spec.period) - spec.nu(i)(x, spec.period) * np.asarray(u, dtype=float)


def eval_g(spec: ReactionSpec, i: int, u, x):
    """Derivative of u -> u f_i(u, x); equals mu_i - 2 nu_i u for the affine class."""
    return spec.mu(i)(x, spec.period) - 2.0 * spec.nu(i)(x, spec.period) * np.asarray(u, dtype=float)


def eval_eta(spec: ReactionSpec, params: SystemParams, z, x):
    z = np.asarray(z, dtype=float)
    zp, zm = np.maximum(z, 0.0), np.maximum(-z, 0.0)
    return (eval_f(spec, 1, z / params.alpha, x) * zp
            - eval_f(spec, 2, -z / params.d, x) * zm / params.d)


def eval_gamma(spec: ReactionSpec, params: SystemParams, z, x):
    z = np.asarray(z, dtype=float)
    zp, zm = np.maximum(z, 0.0), np.maximum(-z, 0.0)
    return eval_f(spec, 1, 0.0, x) * zp - eval_f(spec, 2, 0.0, x) * zm / params.d


def hfreq_margin(L: float, d: float, M1: float, M2: float) -> float:
    return math.pi * (1.0 / math.sqrt(M1) + math.sqrt(d / M2)) - L


def audit_grid(spec: ReactionSpec, n: int = DEFAULT_N) -> PeriodicGrid:
    return PeriodicGrid(spec.period, AUDIT_FACTOR * n)


def check_hypotheses(spec: ReactionSpec, params: SystemParams, n: int = DEFAULT_N) -> HypothesisReport:
    """Audit (H2), (H3) and (H_freq) on a grid 8x finer than ``n``.

    Raises ModelError when some mu_i or nu_i is not positive everywhere, or
    when the reaction period disagrees with ``params.L``.
    """
    if not math.isclose(spec.period, params.L, rel_tol=1e-12):
        raise ModelError("parameters", f"reaction period {spec.period} differs from L={params.L}")
    grid = audit_grid(spec, n)
    c = spec.sample(grid)
    for i in (1, 2):
        if not np.all(c.mu(i) > 0):
            raise ModelError("(H2)", f"mu{i} has min {c.mu(i).min():.6g} <= 0 on the audit grid")
        if not np.all(c.nu(i) > 0):
            raise ModelError("(H3)", f"nu{i} has min {c.nu(i).min():.6g} <= 0 on the audit grid")
    m1, m2 = float(c.mu1.min()), float(c.mu2.min())
    M1, M2 = float(c.mu1.max()), float(c.mu2.max())
    a1 = M1 / float(c.nu1.min())
    a2 = M2 / float(c.nu2.min())
    margin = hfreq_margin(params.L, params.d, M1, M2)
    notes = [f"extrema sampled on {grid.n} nodes per period; "
             f"sampling error bounded by max|mu_i''| dx^2 / 8"]
    return HypothesisReport(
        m1=m1, m2=m2, M1=M1, M2=M2, a1=a1, a2=a2,
        h2_ok=m1 > 0 and m2 > 0,
        h3_ok=True,
        hfreq_ok=margin > 0,
        hfreq_margin=margin,
        audit_n=grid.n,
        notes=notes,
    )
