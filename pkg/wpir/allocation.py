"""
Probability allocations over the random-key space.

Allocation keeps, for every requested message k, a sparse map RandomKey -> probability.
ReducedAllocation is the symmetric (p_#, p_0..p_{K-1}) form: every server gets the
escape pattern with p_#, and every cyclic (f, pi) gets p_{|f|}.
"""
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger as log

from .core import SystemParams, all_permutations, cyclic_permutations, weight_profile
from .errors import Infeasible, InvalidParams, NegativeProbability, NotNormalized, TooLarge
from .scheme import MAX_CODED_KEYS, Coded, Direct, RandomKey, key_from_dict, key_sort_key, key_to_dict, validate_key

PROB_TOL = 1e-9
CLAMP_TOL = 1e-12


@dataclass
class Allocation:
    params: SystemParams
    probs: List[Dict[RandomKey, float]]

    def __post_init__(self):
        if len(self.probs) != self.params.K:
            raise InvalidParams(f"allocation needs {self.params.K} per-message maps, got {len(self.probs)}")
        cleaned = []
        for per_k in self.probs:
            # zero and tiny negative masses are dropped, larger negatives are kept for validate()
            cleaned.append({validate_key(key, self.params): float(p) for key, p in per_k.items() if p > 0 or p < -CLAMP_TOL})
        self.probs = cleaned

    def prob(self, k: int, key: RandomKey) -> float:
        return self.probs[k - 1].get(key, 0.0)

    def support(self, k: int) -> List[RandomKey]:
        return sorted(self.probs[k - 1], key=key_sort_key)

    def to_dict(self) -> dict:
        return {
            "N": self.params.N,
            "K": self.params.K,
            "gamma": list(self.params.gamma),
            "k": [[{"key": key_to_dict(key), "prob": self.prob(k, key)} for key in self.support(k)] for k in range(1, self.params.K + 1)],
        }

    @classmethod
    def from_dict(cls, data: dict, params: Optional[SystemParams] = None) -> "Allocation":
        if params is None:
            params = SystemParams(int(data["N"]), int(data["K"]), tuple(data.get("gamma", ())))
        probs = [{key_from_dict(entry["key"]): float(entry["prob"]) for entry in per_k} for per_k in data["k"]]
        return cls(params, probs)

    def __str__(self) -> str:
        result = f"Allocation {self.params}\n"
        for k in range(1, self.params.K + 1):
            result += f" - k={k}: {len(self.probs[k - 1])} keys, p_d={direct_prob(self, k):.6f}\n"
        return result


@dataclass(frozen=True)
class ReducedAllocation:
    p_sharp: float
    p: Tuple[float, ...] = field(default_factory=tuple)

    @property
    def p_array(self) -> np.ndarray:
        return np.array(self.p, dtype=float)

    def check(self, params: SystemParams) -> "ReducedAllocation":
        if len(self.p) != params.K:
            raise InvalidParams(f"reduced allocation needs {params.K} entries p_0..p_{params.K - 1}, got {len(self.p)}")
        if self.p_sharp < -CLAMP_TOL:
            raise NegativeProbability(0, "p_sharp", self.p_sharp)
        for j, pj in enumerate(self.p):
            if pj < -CLAMP_TOL:
                raise NegativeProbability(0, f"p_{j}", pj)
        residual = reduced_total(self, params) - 1.0
        if abs(residual) > PROB_TOL:
            raise NotNormalized(0, residual)
        if self.p_sharp > 1.0 / params.N + PROB_TOL:
            raise Infeasible(f"p_sharp {self.p_sharp} exceeds 1/N")
        return self

    def to_dict(self) -> dict:
        return {"p_sharp": self.p_sharp, "p": list(self.p)}

    @classmethod
    def from_dict(cls, data: dict) -> "ReducedAllocation":
        return cls(float(data["p_sharp"]), tuple(float(v) for v in data["p"]))

    @classmethod
    def from_array(cls, p_sharp: float, p: Sequence[float]) -> "ReducedAllocation":
        """Build from solver output, clamping tiny negatives to zero"""
        return cls(_clamp(p_sharp), tuple(_clamp(v) for v in p))


def _clamp(value: float) -> float:
    return 0.0 if -CLAMP_TOL <= value < 0 else float(value)


def reduced_total(r: ReducedAllocation, params: SystemParams) -> float:
    s = weight_profile(params.N, params.K).s_array
    return params.N * r.p_sharp + params.N * float(np.dot(s, r.p_array))


def validate(a: Allocation) -> bool:
    for k in range(1, a.params.K + 1):
        for key, p in a.probs[k - 1].items():
            if p < -CLAMP_TOL:
                raise NegativeProbability(k, key, p)
        residual = sum(a.probs[k - 1].values()) - 1.0
        if abs(residual) > PROB_TOL:
            raise NotNormalized(k, residual)
    return True


def expand_reduced(
    r: ReducedAllocation, params: SystemParams, direct_server: Optional[int] = None, permutations: str = "cyclic"
) -> Allocation:
    """
    Spread a reduced allocation over the key space.
    With direct_server the whole escape mass N*p_# is put on that server.
    permutations="all" spreads the mass N*p_{|f|} of every f over all N! permutations
    instead of the N cyclic shifts; both give the same reduced form.
    """
    params.check_enumerable()
    r.check(params)
    N, K = params.N, params.K
    if permutations == "cyclic":
        perms = cyclic_permutations(N)
    elif permutations == "all":
        if math.factorial(N) * N ** (K - 1) > MAX_CODED_KEYS:
            raise TooLarge(f"N! * N^(K-1) coded keys for N={N} K={K} exceed the cap {MAX_CODED_KEYS}")
        perms = all_permutations(N)
    else:
        raise InvalidParams(f"permutations must be 'cyclic' or 'all', got '{permutations}'")
    share = N / len(perms)
    per_k: Dict[RandomKey, float] = {}
    if direct_server is None:
        per_k.update({Direct(n): r.p_sharp for n in range(1, N + 1)})
    else:
        per_k[Direct(direct_server)] = N * r.p_sharp
    for f in np.ndindex(*(N,) * (K - 1)):
        weight = sum(1 for v in f if v)
        per_k.update({Coded(tuple(int(v) for v in f), pi): share * r.p[weight] for pi in perms})
    return Allocation(params, [dict(per_k) for _ in range(K)])


def is_direct_type(key: RandomKey) -> bool:
    """Keys that download exactly L symbols: escapes and coded keys with f = 0"""
    return isinstance(key, Direct) or not any(key.f)


def direct_prob(a: Allocation, k: int) -> float:
    return sum(p for key, p in a.probs[k - 1].items() if is_direct_type(key))


def cost_from_direct_prob(p_d: float, N: int) -> float:
    return p_d + N / (N - 1) * (1.0 - p_d)


def download_cost(a: Allocation) -> float:
    return max(cost_from_direct_prob(direct_prob(a, k), a.params.N) for k in range(1, a.params.K + 1))


def reduced_download_cost(r: ReducedAllocation, params: SystemParams) -> float:
    N = params.N
    return (N - (N * r.p_sharp + N * r.p[0])) / (N - 1)


def uniform_tsc(params: SystemParams) -> ReducedAllocation:
    """The completely private point: no escapes, every cyclic (f, pi) at N^-K"""
    value = float(params.N) ** -params.K
    return ReducedAllocation(0.0, (value,) * params.K)


def clean_tsc(params: SystemParams) -> Allocation:
    """Uniform over every f and all N! permutations, the TSC code without escapes"""
    return expand_reduced(uniform_tsc(params), params, permutations="all")


def direct_only(params: SystemParams, server: int = 1) -> Allocation:
    """All mass on Direct(server) for every message"""
    return Allocation(params, [{Direct(server): 1.0} for _ in range(params.K)])


def tighten_mi(r: ReducedAllocation, D: float, params: SystemParams) -> ReducedAllocation:
    """
    Move a feasible reduced allocation onto the download constraint p_0 + p_# = p_hat
    without increasing the MI objective.
    """
    r.check(params)
    N = params.N
    p_hat = params.p_hat(D)
    p_star = r.p[0] + r.p_sharp
    if p_star < p_hat - PROB_TOL:
        raise Infeasible(f"p_0 + p_# = {p_star:.6g} is below p_hat = {p_hat:.6g} for D = {D:.6g}")
    if abs(p_star - p_hat) <= CLAMP_TOL:
        return r
    denominator = 1.0 - N * p_star
    if denominator > CLAMP_TOL:
        alpha = (1.0 - N * p_hat) / denominator
        p = tuple(alpha * v for v in r.p)
        p_sharp = p_hat - p[0]
        if p_sharp >= -CLAMP_TOL:
            from .leakage import reduced_mi_objective

            scaled = ReducedAllocation.from_array(p_sharp, p)
            if reduced_mi_objective(scaled, params) <= reduced_mi_objective(r, params) + CLAMP_TOL:
                return scaled
    # otherwise time-share with the uniform TSC point, which never raises a convex objective
    u = float(N) ** -params.K
    lam = (p_hat - u) / (p_star - u)
    log.debug(f"tighten_mi: time-sharing with uniform TSC, weight {lam:.6g}")
    p = tuple(lam * v + (1.0 - lam) * u for v in r.p)
    return ReducedAllocation.from_array(lam * r.p_sharp, p)


def reduce_allocation(a: Allocation) -> ReducedAllocation:
    """Symmetrise a full allocation: average over messages, servers and the keys of each weight"""
    N, K = a.params.N, a.params.K
    s = weight_profile(N, K).s
    sharp = 0.0
    mass = np.zeros(K)
    for per_k in a.probs:
        for key, p in per_k.items():
            if isinstance(key, Direct):
                sharp += p
            else:
                mass[key.weight] += p
    p = [mass[j] / (N * K * s[j]) for j in range(K)]
    return ReducedAllocation.from_array(sharp / (N * K), p)


def save_allocation(obj, path: Path):
    Path(path).write_text(json.dumps(obj.to_dict(), indent=2))


def load_allocation(path: Path, params: Optional[SystemParams] = None):
    """Load either allocation form; the reduced form is expanded when params are given"""
    data = json.loads(Path(path).read_text())
    if "p_sharp" in data:
        reduced = ReducedAllocation.from_dict(data)
        return expand_reduced(reduced, params) if params is not None else reduced
    return Allocation.from_dict(data, params)
