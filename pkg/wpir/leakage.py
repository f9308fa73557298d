"""
Privacy leakage of an allocation, per server and trust-weighted.

- Max-L: log2 of sum_q max_k P(Q_n = q | M = k), prior independent
- MI: I(M; Q_n) with M uniform on [1:K]

All values are in bits. Reduced allocations have closed-form evaluators that agree
with the generic path through expand_reduced.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import rel_entr

from .allocation import Allocation, ReducedAllocation
from .core import SystemParams, weight_profile
from .errors import InvalidParams, NotNormalized
from .scheme import Query, encode_queries

LN2 = math.log(2.0)
# masses below this are exact zeros inside entropy terms
ZERO_MASS = 1e-15
DIST_TOL = 1e-9

METRICS = ("maxl", "mi")


@dataclass
class QueryDistribution:
    """P(Q_n = q | M = k) for one server n, one sparse map per message"""

    n: int
    per_k: List[Dict[Query, float]]

    def queries(self) -> List[Query]:
        seen = {}
        for dist in self.per_k:
            for q in dist:
                seen.setdefault(q, None)
        return sorted(seen, key=lambda q: (type(q).__name__, str(q)))

    def matrix(self) -> np.ndarray:
        """K x |queries| matrix in the order of queries()"""
        queries = self.queries()
        P = np.zeros((len(self.per_k), len(queries)))
        for k, dist in enumerate(self.per_k):
            for i, q in enumerate(queries):
                P[k, i] = dist.get(q, 0.0)
        return P

    def check(self) -> "QueryDistribution":
        for k, dist in enumerate(self.per_k, start=1):
            residual = sum(dist.values()) - 1.0
            if abs(residual) > DIST_TOL:
                raise NotNormalized(k, residual)
        return self

    def merge(self, a: Query, b: Query) -> "QueryDistribution":
        """Relabel query b as a, the post-processing that can only lose information"""
        merged = []
        for dist in self.per_k:
            dist = dict(dist)
            mass = dist.pop(b, 0.0)
            if mass:
                dist[a] = dist.get(a, 0.0) + mass
            merged.append(dist)
        return QueryDistribution(self.n, merged)


def query_distribution(a: Allocation, n: int) -> QueryDistribution:
    params = a.params
    if not 1 <= n <= params.N:
        raise InvalidParams(f"server {n} not in [1:{params.N}]")
    per_k = []
    for k in range(1, params.K + 1):
        dist: Dict[Query, float] = {}
        for key, p in a.probs[k - 1].items():
            q = encode_queries(k, key, params)[n - 1]
            dist[q] = dist.get(q, 0.0) + p
        per_k.append(dist)
    return QueryDistribution(n, per_k)


# --------------------------------------------------------------
# metric kernels on a K x Q conditional matrix
# --------------------------------------------------------------


def maxl_from_matrix(P: np.ndarray) -> float:
    total = float(np.max(P, axis=0).sum()) if P.size else 1.0
    return max(math.log2(total), 0.0) if total > 0 else 0.0


def mi_from_matrix(P: np.ndarray) -> float:
    P = np.where(P < ZERO_MASS, 0.0, P)
    marginal = P.mean(axis=0)
    value = float(rel_entr(P, marginal[None, :]).sum()) / P.shape[0] / LN2
    return max(value, 0.0)


def _weights(params: SystemParams, gamma: Optional[Sequence[float]]) -> Tuple[float, ...]:
    if gamma is None:
        return params.gamma
    if len(gamma) != params.N:
        raise InvalidParams(f"gamma needs {params.N} weights, got {len(gamma)}")
    return tuple(float(g) for g in gamma)


# --------------------------------------------------------------
# full allocations
# --------------------------------------------------------------


def max_leakage(a: Allocation, n: int) -> float:
    return maxl_from_matrix(query_distribution(a, n).matrix())


def rho_maxl(a: Allocation, gamma: Optional[Sequence[float]] = None) -> float:
    """Trust-weighted sum of exponential Max-L leakage, sum_n gamma_n 2^L_n"""
    gamma = _weights(a.params, gamma)
    return sum(g * 2.0 ** max_leakage(a, n) for n, g in enumerate(gamma, start=1))


def mi_leakage(a: Allocation, n: int) -> float:
    return mi_from_matrix(query_distribution(a, n).matrix())


def rho_mi(a: Allocation, gamma: Optional[Sequence[float]] = None) -> float:
    gamma = _weights(a.params, gamma)
    return sum(g * mi_leakage(a, n) for n, g in enumerate(gamma, start=1))


# --------------------------------------------------------------
# reduced allocations
# --------------------------------------------------------------


def _p_extended(r: ReducedAllocation) -> np.ndarray:
    """p_0..p_K with p_K = 0"""
    return np.append(r.p_array, 0.0)


def reduced_maxl_sum(r: ReducedAllocation, params: SystemParams) -> float:
    """sum_q max_k P(q|k) seen by any single server under the reduced allocation"""
    t = weight_profile(params.N, params.K).t_array
    p = _p_extended(r)
    tsc = float(np.dot(t[1:], np.maximum(p[:-1], p[1:])))
    return tsc + p[0] + (params.N + params.K - 1) * r.p_sharp


def reduced_rho_maxl(r: ReducedAllocation, gamma: Optional[Sequence[float]], params: SystemParams) -> float:
    return sum(_weights(params, gamma)) * reduced_maxl_sum(r, params)


def reduced_mi_objective(r: ReducedAllocation, params: SystemParams) -> float:
    """Per-server MI in bits; equal for every server since the reduced form is symmetric"""
    K = params.K
    t = weight_profile(params.N, K).t_array
    p = np.where(_p_extended(r) < ZERO_MASS, 0.0, _p_extended(r))
    j = np.arange(1, K + 1)
    S = j * p[:-1] + (K - j) * p[1:]
    braces = j * rel_entr(p[:-1], S / K) + (K - j) * rel_entr(p[1:], S / K)
    value = r.p_sharp * math.log2(K) + float(np.dot(t[1:], braces)) / K / LN2
    return max(value, 0.0)


def reduced_mi_gradient(p_sharp: float, p: np.ndarray, params: SystemParams) -> Tuple[float, np.ndarray]:
    """Gradient of reduced_mi_objective with respect to (p_#, p_0..p_{K-1}), in bits"""
    K = params.K
    t = weight_profile(params.N, K).t_array
    pe = np.append(np.asarray(p, dtype=float), 0.0)
    grad = np.zeros(K + 1)
    for j in range(1, K + 1):
        S = j * pe[j - 1] + (K - j) * pe[j]
        if S <= 0:
            # one-sided limits when both masses of the pair are zero
            grad[j - 1] += t[j] / K * j * math.log(K / j)
            if j < K:
                grad[j] += t[j] / K * (K - j) * math.log(K / (K - j))
            continue
        grad[j - 1] += t[j] / K * j * math.log(K * max(pe[j - 1], ZERO_MASS) / S)
        if j < K:
            grad[j] += t[j] / K * (K - j) * math.log(K * max(pe[j], ZERO_MASS) / S)
    return math.log2(K), grad[:K] / LN2


def reduced_rho_mi(r: ReducedAllocation, gamma: Optional[Sequence[float]], params: SystemParams) -> float:
    return sum(_weights(params, gamma)) * reduced_mi_objective(r, params)


def split_time_sharing(r: ReducedAllocation, params: SystemParams) -> Tuple[float, ReducedAllocation]:
    """
    Write r as alpha * (escape everywhere) + (1 - alpha) * (clean TSC part p').
    The MI objective splits the same way: I(r) = alpha log2(K) / N + (1 - alpha) I(p').
    """
    alpha = params.N * r.p_sharp
    if alpha >= 1.0:
        return 1.0, ReducedAllocation(0.0, (0.0,) * params.K)
    return alpha, ReducedAllocation.from_array(0.0, r.p_array / (1.0 - alpha))


# --------------------------------------------------------------
# tradeoff points
# --------------------------------------------------------------

CSV_FIELDS = ["metric", "N", "K", "gamma", "D", "rho", "method"]


@dataclass
class TradeoffPoint:
    D: float
    rho: float
    metric: str
    method: str
    params: SystemParams
    extra: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.metric not in METRICS:
            raise InvalidParams(f"unknown metric '{self.metric}', use one of {METRICS}")

    def csv_row(self) -> dict:
        return {
            "metric": self.metric,
            "N": self.params.N,
            "K": self.params.K,
            "gamma": ";".join(f"{g:.12g}" for g in self.params.gamma),
            "D": f"{self.D:.12g}",
            "rho": f"{self.rho:.12g}",
            "method": self.method,
        }

    def to_dict(self) -> dict:
        result = {
            "metric": self.metric,
            "N": self.params.N,
            "K": self.params.K,
            "gamma": list(self.params.gamma),
            "D": self.D,
            "rho": self.rho,
            "method": self.method,
        }
        if self.extra:
            result["extra"] = dict(self.extra)
        return result
