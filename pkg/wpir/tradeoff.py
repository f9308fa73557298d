"""
Privacy/download tradeoff curves and the time-sharing (convex hull) check for MI.
"""
import csv
import json
import math
from functools import partial
from typing import IO, Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger as log

from .core import SystemParams
from .errors import InvalidParams, NotMonotone, TooLarge
from .leakage import METRICS, CSV_FIELDS, TradeoffPoint
from .optimizer import (
    key_space_index,
    maxl_full_oracle,
    maxl_optimal,
    maxl_reduced_oracle,
    maxl_symmetric_baseline,
    mi_clean_tsc,
    mi_full_oracle,
    mi_full_oracle_result,
    mi_optimal_homogeneous,
    mi_reduced_oracle,
)

DEFAULT_POINTS = 21
DENSE_POINTS = 401
# allowed increase between grid points, by method
DEFAULT_MONOTONE_TOL = 1e-7
MONOTONE_TOL = {"oracle": 1e-6, "full_oracle": 1e-5}

Curve = List[Tuple[float, float]]


def default_grid(params: SystemParams, points: int = DEFAULT_POINTS) -> np.ndarray:
    if points < 2:
        raise InvalidParams(f"a grid needs at least 2 points, got {points}")
    return np.linspace(1.0, params.d_star, points)


def _maxl_points(params: SystemParams, grid: Iterable[float], full: bool) -> List[TradeoffPoint]:
    points = []
    for D in grid:
        _, rho = maxl_optimal(params, D)
        points.append(TradeoffPoint(D, rho, "maxl", "closed_form", params))
        _, rho = maxl_reduced_oracle(params, None, D)
        points.append(TradeoffPoint(D, rho, "maxl", "oracle", params))
        _, rho = maxl_symmetric_baseline(params, None, D)
        points.append(TradeoffPoint(D, rho, "maxl", "baseline", params))
        if full:
            _, rho = maxl_full_oracle(params, None, D)
            points.append(TradeoffPoint(D, rho, "maxl", "full_oracle", params))
    return points


def _mi_points(params: SystemParams, grid: Iterable[float], full: bool) -> List[TradeoffPoint]:
    points = []
    # the closed form needs N > 2 and equal weights
    closed_form = params.N > 2 and params.homogeneous
    if not closed_form:
        log.warning(f"no MI closed form for {params}; reporting oracle rows only")
    for D in grid:
        if closed_form:
            _, rho = mi_optimal_homogeneous(params, D)
            points.append(TradeoffPoint(D, rho, "mi", "closed_form", params))
        _, rho = mi_reduced_oracle(params, D)
        points.append(TradeoffPoint(D, rho, "mi", "oracle", params))
        _, rho = mi_clean_tsc(params, D)
        points.append(TradeoffPoint(D, rho, "mi", "clean_tsc", params))
        if full:
            result = mi_full_oracle_result(params, None, D)
            points.append(TradeoffPoint(D, result.rho, "mi", "full_oracle", params, {"gap": result.gap}))
    return points


def tradeoff_curve(
    metric: str,
    params: SystemParams,
    gamma: Optional[Sequence[float]] = None,
    D_grid: Optional[Sequence[float]] = None,
    full: bool = True,
) -> List[TradeoffPoint]:
    """
    Every applicable method at every D of the grid. The full-key-space oracle is
    skipped when the key space is too large for it. Raises NotMonotone when any
    method's curve rises with D.
    """
    if metric not in METRICS:
        raise InvalidParams(f"unknown metric '{metric}', use one of {METRICS}")
    params = params.with_gamma(gamma) if gamma is not None else params
    grid = default_grid(params) if D_grid is None else [float(D) for D in D_grid]
    if full:
        try:
            key_space_index(params)
        except TooLarge as e:
            log.info(f"skipping the full oracle: {e}")
            full = False
    log.info(f"{metric} tradeoff for {params} on {len(grid)} points")
    points = (_maxl_points if metric == "maxl" else _mi_points)(params, grid, full)
    assert_monotone(points)
    return points


def check_monotone(points: Sequence[TradeoffPoint]) -> float:
    """Largest increase of rho between consecutive D values, 0 for a non-increasing curve"""
    ordered = sorted(points, key=lambda p: p.D)
    return max((b.rho - a.rho for a, b in zip(ordered, ordered[1:])), default=0.0) if ordered else 0.0


def assert_monotone(points: Sequence[TradeoffPoint]):
    """Every method's curve must be non-increasing in D, up to its solver accuracy"""
    for method in sorted({p.method for p in points}):
        curve = [p for p in points if p.method == method]
        worst = check_monotone(curve)
        if worst > MONOTONE_TOL.get(method, DEFAULT_MONOTONE_TOL):
            raise NotMonotone(f"{curve[0].metric}/{method}", worst)


# --------------------------------------------------------------
# convex hull check
# --------------------------------------------------------------


def lower_hull(points: Curve) -> Curve:
    """Lower convex hull by the monotone chain, sorted by D"""
    hull: Curve = []
    for p in sorted(set(points)):
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def hull_check(points_tsc: Curve, extreme_point: Tuple[float, float], points_opt: Curve) -> float:
    """Max deviation between an optimal curve and the lower hull of the clean curve plus one extreme point"""
    hull = lower_hull(list(points_tsc) + [tuple(extreme_point)])
    xs = np.array([p[0] for p in hull])
    ys = np.array([p[1] for p in hull])
    D = np.array([p[0] for p in points_opt])
    rho = np.array([p[1] for p in points_opt])
    return float(np.max(np.abs(np.interp(D, xs, ys) - rho)))


def clean_tsc_curve(params: SystemParams, points: int = DENSE_POINTS) -> Curve:
    return [(float(D), mi_clean_tsc(params, D)[1]) for D in default_grid(params, points)]


def mi_hull_deviation(params: SystemParams, points: int = DEFAULT_POINTS, dense: int = DENSE_POINTS) -> float:
    """
    Deviation of the optimal MI curve from the time-sharing between the clean TSC
    curve and direct download from server 1.
    """
    optimum: Callable
    if not params.homogeneous:
        log.info("unequal weights: the hull deviation is reported, not guaranteed")
        optimum = partial(mi_full_oracle, gamma=None)
    elif params.N > 2:
        optimum = mi_optimal_homogeneous
    else:
        optimum = mi_reduced_oracle
    extreme = (1.0, params.gamma[0] * math.log2(params.K))
    opt = [(float(D), optimum(params, D=D)[1]) for D in default_grid(params, points)]
    deviation = hull_check(clean_tsc_curve(params, dense), extreme, opt)
    log.debug(f"hull deviation for {params}: {deviation:.3e}")
    return deviation


# --------------------------------------------------------------
# output
# --------------------------------------------------------------


def write_points_csv(points: Iterable[TradeoffPoint], stream: IO[str]):
    writer = csv.DictWriter(stream, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for p in points:
        writer.writerow(p.csv_row())


def write_points_json(points: Iterable[TradeoffPoint], stream: IO[str]):
    json.dump([p.to_dict() for p in points], stream, indent=2)
    stream.write("\n")


def read_points_csv(stream: IO[str]) -> List[dict]:
    return [
        {**row, "N": int(row["N"]), "K": int(row["K"]), "D": float(row["D"]), "rho": float(row["rho"])}
        for row in csv.DictReader(stream)
    ]
