from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla


@dataclass
class NewtonOutcome:
    x: np.ndarray
    residual: float
    converged: bool
    iterations: int
    trace: list[float] = field(default_factory=list)


def damped_newton(residual: Callable[[np.ndarray], np.ndarray],
                  jacobian: Callable[[np.ndarray], object],
                  x0: np.ndarray, *, tol: float | Callable[[np.ndarray], float],
                  max_iter: int = 100,
                  max_halvings: int = 40,
                  admissible: Callable[[np.ndarray], bool] | None = None) -> NewtonOutcome:
    """Newton iteration with step halving until the sup-norm residual drops.

    ``admissible`` rejects trial points (e.g. leaving the positive cone) the
    same way as a residual increase. ``tol`` may depend on the iterate.
    """
    tol_of = tol if callable(tol) else (lambda _x: tol)
    x = np.array(x0, dtype=float)
    r = residual(x)
    rn = float(np.max(np.abs(r)))
    trace = [rn]
    for it in range(1, max_iter + 1):
        if rn <= tol_of(x):
            return NewtonOutcome(x, rn, True, it - 1, trace)
        try:
            step = spla.spsolve(jacobian(x).tocsc(), -r)
        except RuntimeError:
            break
        if not np.all(np.isfinite(step)):
            break
        t = 1.0
        for _ in range(max_halvings + 1):
            trial = x + t * step
            if admissible is None or admissible(trial):
                r_trial = residual(trial)
                rn_trial = float(np.max(np.abs(r_trial)))
                if rn_trial < rn:
                    break
            t *= 0.5
        else:
            break
        x, r, rn = trial, r_trial, rn_trial
        trace.append(rn)
    return NewtonOutcome(x, rn, rn <= tol_of(x), len(trace) - 1, trace)
