"""
Small numerical building blocks shared by the optimizers:

- Euclidean projections onto a scaled simplex and onto a simplex cut by a
  lower bound on the mass of a subset of coordinates
- projected gradient descent with Barzilai-Borwein steps and Armijo backtracking
- a HiGHS linear-programming wrapper
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from loguru import logger as log
from scipy.optimize import linprog

from .errors import NotConverged

LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}

ARMIJO_SIGMA = 1e-4
MAX_BACKTRACK = 60
STEP_MIN = 1e-14
STEP_MAX = 1e14


def project_simplex(y: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """Projection onto {x >= 0, sum x = radius} by sorting"""
    y = np.asarray(y, dtype=float)
    if radius <= 0:
        return np.zeros_like(y)
    u = np.sort(y)[::-1]
    ukvals = (np.cumsum(u) - radius) / np.arange(1, y.shape[0] + 1)
    k = np.nonzero(ukvals < u)[0][-1]
    return np.clip(y - ukvals[k], 0, None)


def project_split_simplex(y: np.ndarray, mask: np.ndarray, lower: float) -> np.ndarray:
    """
    Projection onto {x >= 0, sum x = 1, sum x[mask] >= lower}.
    If the plain simplex projection violates the cut, the cut is active and the
    problem separates into two scaled simplices.
    """
    x = project_simplex(y)
    if x[mask].sum() >= lower - 1e-15:
        return x
    x = np.empty_like(x)
    x[mask] = project_simplex(y[mask], lower)
    x[~mask] = project_simplex(y[~mask], 1.0 - lower)
    return x


@dataclass
class PgResult:
    x: np.ndarray
    value: float
    residual: float
    gap: float
    iterations: int
    converged: bool


def projected_gradient(
    fun: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    project: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 100_000,
    gap: Optional[Callable[[np.ndarray, np.ndarray], float]] = None,
    gap_tol: float = 1e-6,
    accept: float = 1e-6,
    name: str = "pg",
) -> PgResult:
    """
    Minimise a smooth convex function over a set with a cheap projection.

    Stops when the projected-gradient residual ||x - P(x - g)|| drops to tol or,
    when a duality-gap function is given, the gap drops to gap_tol.
    At the iteration cap a result whose stopping measure is within `accept` is
    returned with a warning, anything worse raises NotConverged.
    """
    x = project(np.asarray(x0, dtype=float))
    f = fun(x)
    g = grad(x)
    step = 1.0
    x_prev = g_prev = None
    residual = gap_value = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        residual = float(np.linalg.norm(x - project(x - g)))
        gap_value = gap(x, g) if gap is not None else np.inf
        if residual <= tol or gap_value <= gap_tol:
            log.debug(f"{name}: converged after {it} iterations, residual {residual:.3e}, gap {gap_value:.3e}")
            return PgResult(x, f, residual, gap_value, it, True)
        if x_prev is not None:
            s, yv = x - x_prev, g - g_prev
            sy = float(np.dot(s, yv))
            step = float(np.dot(s, s)) / sy if sy > 0 else step * 2.0
        step = min(max(step, STEP_MIN), STEP_MAX)
        slack = 1e-15 * (1.0 + abs(f))
        for _ in range(MAX_BACKTRACK):
            x_new = project(x - step * g)
            f_new = fun(x_new)
            if f_new <= f + ARMIJO_SIGMA * float(np.dot(g, x_new - x)) + slack:
                break
            step *= 0.5
        else:
            log.debug(f"{name}: line search stalled at iteration {it}, residual {residual:.3e}")
            break
        x_prev, g_prev = x, g
        x, f = x_new, f_new
        g = grad(x)
    measure = min(residual, gap_value)
    if measure <= accept:
        log.warning(f"{name}: stopped at residual {residual:.3e}, gap {gap_value:.3e}; accepting")
        return PgResult(x, f, residual, gap_value, it, False)
    raise NotConverged(f"{name}: residual {residual:.3e}, gap {gap_value:.3e} after {it} iterations")


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, name: str = "lp"):
    """linprog with HiGHS and tight tolerances; non-negative variables"""
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs", options=LP_OPTIONS)
    if res.status != 0:
        raise NotConverged(f"{name}: {res.message}")
    log.debug(f"{name}: optimum {res.fun:.12g}")
    return res
