"""
Optimal allocations and the numerical oracles that cross-check them.

Max-L
    maxl_optimal            closed-form assignment for any trust weights
    homogeneous_maxl_value  closed-form optimum for equal weights
    maxl_reduced_oracle     LP over the reduced (symmetric) variables
    maxl_full_oracle        LP over the full key space
    kkt_verify_maxl         explicit primal/dual certificate of the reduced LP

MI
    solve_x_sequence        ratio sequence x_j = p_{j-1}/p_j of the optimum
    mi_optimal_homogeneous  closed-form optimum for equal weights
    mi_clean_tsc            optimum without escapes
    mi_reduced_oracle       projected gradient over the reduced variables
    mi_full_oracle          projected gradient over the full key space, Frank-Wolfe gap certified
    kkt_verify_mi           stationarity residuals of the closed form
"""
import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger as log
from scipy.optimize import bisect
from scipy.sparse import coo_matrix

from .allocation import CLAMP_TOL, Allocation, ReducedAllocation, expand_reduced, is_direct_type
from .core import Permutation, SystemParams, weight_profile
from .errors import CertificateFailed, Degenerate, InvalidParams, NoBracket, NotConverged, OutOfRange, TooLarge
from .leakage import ZERO_MASS, mi_from_matrix, reduced_mi_gradient, reduced_mi_objective, rho_maxl, rho_mi
from .scheme import Coded, Direct, Escape, RandomKey, enumerate_key_space, encode_queries
from .solvers import project_simplex, project_split_simplex, projected_gradient, solve_lp

# full-key-space oracles refuse larger key spaces per message
MAX_ORACLE_KEYS = 1000

KKT_TOL = 1e-9
RECURSION_TOL = 1e-8
D_TOL = 1e-12

# shooting grid for x_{K-1}
SHOOT_GRID = np.logspace(-6, 6, 2001)
SHOOT_XTOL = 1e-12

MI_PG_TOL = 1e-8
MI_MAX_ITER = 100_000
FULL_MI_GAP_TOL = 1e-6
FULL_MI_MAX_ITER = 100_000


def check_D(params: SystemParams, D: float) -> float:
    """Validate a download cost and snap values within rounding of the ends onto [1, D*]"""
    if not 1.0 - D_TOL <= D <= params.d_star + D_TOL:
        raise OutOfRange(f"D = {D:.12g} outside [1, {params.d_star:.12g}] for N={params.N} K={params.K}")
    return min(max(float(D), 1.0), params.d_star)


def p_hat_sharp(params: SystemParams, D: float) -> float:
    """Escape probability of the closed-form Max-L assignment"""
    N, K = params.N, params.K
    value = (N**K * params.p_hat(D) - 1.0) / (N ** (K - 1) - 1.0)
    return min(max(value, 0.0), 1.0)


def single_shift(N: int) -> Permutation:
    """pi*(n) = n + 1 reduced mod N"""
    return Permutation(tuple((n + 1) % N for n in range(1, N + 1)))


# --------------------------------------------------------------
# Max-L
# --------------------------------------------------------------


def maxl_optimal(params: SystemParams, D: float) -> Tuple[Allocation, float]:
    """
    Direct(1) with probability p_#, otherwise a coded key (f, pi*) with f uniform.
    Escapes go to server 1, the most trusted one.
    """
    D = check_D(params, D)
    params.check_enumerable()
    N, K = params.N, params.K
    ps = p_hat_sharp(params, D)
    pi = single_shift(N)
    per_k: Dict[RandomKey, float] = {Direct(1): ps}
    mass = (1.0 - ps) / N ** (K - 1)
    for f in itertools.product(range(N), repeat=K - 1):
        per_k[Coded(f, pi)] = mass
    rho = params.gamma[0] * (K - 1) * ps + params.gamma_sum
    return Allocation(params, [dict(per_k) for _ in range(K)]), rho


def homogeneous_maxl_value(params: SystemParams, D: float) -> float:
    if not params.homogeneous:
        raise InvalidParams(f"homogeneous_maxl_value needs equal weights, got {params.gamma}")
    D = check_D(params, D)
    N, K = params.N, params.K
    g = params.gamma[0]
    return N * g * (1.0 + (K - 1) * (N ** (K - 1) * (N - (N - 1) * D) - 1.0) / (N**K - N))


def _reduced_maxl_lp(params: SystemParams, D: float) -> Tuple[ReducedAllocation, float]:
    """
    Minimise (N+K-1) p_# + p_0 + sum_j t_j m_j over x = [p_#, p_0..p_{K-1}, m_1..m_K]
    with m_j >= p_{j-1}, m_j >= p_j, p_0 + p_# >= p_hat and N p_# + N sum_j s_j p_j = 1.
    """
    D = check_D(params, D)
    N, K = params.N, params.K
    w = weight_profile(N, K)
    # p_j sits at column 1 + j, m_j at column K + j
    n_var = 2 * K + 1
    c = np.zeros(n_var)
    c[0] = N + K - 1
    c[1] = 1.0
    for j in range(1, K + 1):
        c[K + j] = w.t[j]
    rows = []
    for j in range(1, K + 1):
        row = np.zeros(n_var)
        row[j], row[K + j] = 1.0, -1.0
        rows.append(row)
        if j < K:
            row = np.zeros(n_var)
            row[1 + j], row[K + j] = 1.0, -1.0
            rows.append(row)
    row = np.zeros(n_var)
    row[0], row[1] = -1.0, -1.0
    rows.append(row)
    b_ub = np.zeros(len(rows))
    b_ub[-1] = -params.p_hat(D)
    A_eq = np.zeros((1, n_var))
    A_eq[0, 0] = N
    for j in range(K):
        A_eq[0, 1 + j] = N * w.s[j]
    res = solve_lp(c, np.array(rows), b_ub, A_eq, np.array([1.0]), name=f"reduced Max-L LP D={D:.6g}")
    r = ReducedAllocation.from_array(res.x[0], res.x[1 : K + 1])
    return r, float(res.fun)


def maxl_reduced_oracle(params: SystemParams, gamma: Optional[Sequence[float]], D: float) -> Tuple[ReducedAllocation, float]:
    """
    Numerical optimum of the reduced problem. Only the most trusted server's
    excess over the fully private value matters, so rho = N gamma_1 (V* - 1) + sum gamma.

    The returned r is the symmetric LP solution. With unequal weights rho is the
    value of expand_reduced(r, params, direct_server=1), which puts the whole escape
    mass on server 1; the symmetric expansion of r costs sum(gamma) * V* instead.
    """
    params = params.with_gamma(gamma) if gamma is not None else params
    r, value = _reduced_maxl_lp(params, D)
    rho = params.N * params.gamma[0] * (value - 1.0) + params.gamma_sum
    return r, rho


def maxl_symmetric_baseline(params: SystemParams, gamma: Optional[Sequence[float]], D: float) -> Tuple[ReducedAllocation, float]:
    """The best symmetric reduced code: every server carries the same leakage"""
    params = params.with_gamma(gamma) if gamma is not None else params
    r, value = _reduced_maxl_lp(params, D)
    return r, params.gamma_sum * value


@dataclass
class KeySpaceIndex:
    """Full key space with the query index every (server, message, key) maps to"""

    params: SystemParams
    keys: List[RandomKey]
    direct: np.ndarray
    qidx: np.ndarray  # (N, K, n_keys)
    n_queries: int

    @property
    def n_keys(self) -> int:
        return len(self.keys)


def query_number(q, params: SystemParams) -> int:
    """Vectors in base-N order, then the K escapes"""
    N, K = params.N, params.K
    if isinstance(q, Escape):
        return N**K + q.k - 1
    return int(np.ravel_multi_index(q.q, (N,) * K))


def key_space_index(params: SystemParams) -> KeySpaceIndex:
    keys = enumerate_key_space(params)
    if len(keys) > MAX_ORACLE_KEYS:
        raise TooLarge(f"{len(keys)} keys per message exceed the oracle cap {MAX_ORACLE_KEYS}")
    N, K = params.N, params.K
    qidx = np.zeros((N, K, len(keys)), dtype=np.int64)
    for k in range(1, K + 1):
        for i, key in enumerate(keys):
            for n, q in enumerate(encode_queries(k, key, params)):
                qidx[n, k - 1, i] = query_number(q, params)
    direct = np.array([is_direct_type(key) for key in keys])
    return KeySpaceIndex(params, keys, direct, qidx, N**K + K)


def _allocation_from_matrix(index: KeySpaceIndex, X: np.ndarray) -> Allocation:
    probs = [{index.keys[i]: float(X[k, i]) for i in np.nonzero(X[k] > 0)[0]} for k in range(X.shape[0])]
    return Allocation(index.params, probs)


def maxl_full_oracle(params: SystemParams, gamma: Optional[Sequence[float]], D: float) -> Tuple[Allocation, float]:
    """
    LP over every key of every message with epigraph variables z[n, q] >= P(Q_n = q | k):
    minimise sum_n gamma_n sum_q z[n, q].
    """
    params = params.with_gamma(gamma) if gamma is not None else params
    D = check_D(params, D)
    index = key_space_index(params)
    N, K, nk, Q = params.N, params.K, index.n_keys, index.n_queries
    n_x = K * nk
    c = np.concatenate([np.zeros(n_x), np.repeat(params.gamma, Q)])
    # row (n*K + k)*Q + q: sum of x over keys hitting q minus z[n, q] <= 0
    rows, cols, vals = [], [], []
    for n in range(N):
        for k in range(K):
            base = (n * K + k) * Q
            for i in range(nk):
                rows.append(base + index.qidx[n, k, i])
                cols.append(k * nk + i)
                vals.append(1.0)
            for q in range(Q):
                rows.append(base + q)
                cols.append(n_x + n * Q + q)
                vals.append(-1.0)
    n_rows = N * K * Q
    # download constraint per message: -sum over direct-type keys <= -N p_hat
    for k in range(K):
        for i in np.nonzero(index.direct)[0]:
            rows.append(n_rows + k)
            cols.append(k * nk + i)
            vals.append(-1.0)
    A_ub = coo_matrix((vals, (rows, cols)), shape=(n_rows + K, n_x + N * Q)).tocsr()
    b_ub = np.concatenate([np.zeros(n_rows), np.full(K, -params.N * params.p_hat(D))])
    A_eq = np.zeros((K, n_x + N * Q))
    for k in range(K):
        A_eq[k, k * nk : (k + 1) * nk] = 1.0
    res = solve_lp(c, A_ub, b_ub, A_eq, np.ones(K), name=f"full Max-L LP D={D:.6g}")
    X = np.clip(res.x[:n_x].reshape(K, nk), 0.0, None)
    X /= X.sum(axis=1, keepdims=True)
    a = _allocation_from_matrix(index, X)
    return a, rho_maxl(a)


@dataclass
class KktCertificate:
    params: SystemParams
    D: float
    primal: Dict[str, float] = field(default_factory=dict)
    dual: Dict[str, float] = field(default_factory=dict)
    residuals: Dict[str, float] = field(default_factory=dict)
    tol: float = KKT_TOL

    @property
    def violations(self) -> List[str]:
        return [f"{name} = {value:.3e}" for name, value in self.residuals.items() if not value <= self.tol]

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    def to_dict(self) -> dict:
        return {
            "N": self.params.N,
            "K": self.params.K,
            "D": self.D,
            "primal": dict(self.primal),
            "dual": dict(self.dual),
            "residuals": dict(self.residuals),
            "passed": self.passed,
        }

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        result = f"{type(self).__name__} N={self.params.N} K={self.params.K} D={self.D:.6g}: {status}, max residual {self.max_residual:.3e}\n"
        for violation in self.violations:
            result += f" - {violation}\n"
        return result


class MaxLKktCertificate(KktCertificate):
    pass


class MiKktCertificate(KktCertificate):
    pass


def maxl_kkt_certificate(params: SystemParams, D: float, perturb: float = 0.0) -> MaxLKktCertificate:
    """
    Build the explicit primal/dual pair of the reduced Max-L LP and evaluate every
    KKT block. Multiplier convention: lambda_j for m_j >= p_j, mu_j for m_j >= p_{j-1},
    lambda for the download constraint, mu for normalisation, eta for p >= 0.
    `perturb` shifts p_# to build a deliberately wrong certificate.
    """
    D = check_D(params, D)
    N, K = params.N, params.K
    w = weight_profile(N, K)
    t, s = w.t, w.s
    p_hat = params.p_hat(D)
    # primal
    p_sharp = (N**K * p_hat - 1.0) / (N**K - N)
    c = (1.0 - N * p_sharp) / N**K
    p_sharp += perturb
    p = [c] * K + [0.0]  # p_K = 0
    m = [None] + [c] * K
    # dual
    lam = N ** (K - 1) * (K - 1) / (N ** (K - 1) - 1.0)
    mu = N ** (K - 2) * (K - 1) / (N ** (K - 1) - 1.0) - (N + K - 1) / N
    R = [None] + [(N + K - 1) * sum(s[:j]) - lam * sum(s[1:j]) for j in range(1, K + 1)]
    lam_j = [None] + [sum(t[: j + 1]) - R[j] for j in range(1, K + 1)]
    mu_j = [None] + [R[j] - sum(t[:j]) for j in range(1, K + 1)]
    eta_sharp, eta = 0.0, [0.0] * K

    res: Dict[str, float] = {}
    # stationarity
    res["d_p_sharp"] = abs((N + K - 1) - eta_sharp + N * mu - lam)
    res["d_p_0"] = abs(1.0 - eta[0] + N * mu + mu_j[1] - lam)
    for j in range(1, K):
        res[f"d_p_{j}"] = abs(-eta[j] + N * mu * s[j] + lam_j[j] + mu_j[j + 1])
    for j in range(1, K + 1):
        res[f"d_m_{j}"] = abs(t[j] - lam_j[j] - mu_j[j])
    # primal feasibility
    res["normalisation"] = abs(N * p_sharp + N * sum(sj * pj for sj, pj in zip(s, p)) - 1.0)
    res["download"] = max(0.0, p_hat - p[0] - p_sharp)
    res["p_nonneg"] = max(0.0, -min(p_sharp, *p))
    for j in range(1, K + 1):
        res[f"m_{j}>=p_{j - 1}"] = max(0.0, p[j - 1] - m[j])
        res[f"m_{j}>=p_{j}"] = max(0.0, p[j] - m[j])
    # dual feasibility
    res["lambda>=0"] = max(0.0, -lam)
    for j in range(1, K + 1):
        res[f"lambda_{j}>=0"] = max(0.0, -lam_j[j])
        res[f"mu_{j}>=0"] = max(0.0, -mu_j[j])
    # complementary slackness
    res["cs_download"] = abs(lam * (p[0] + p_sharp - p_hat))
    res["cs_p_sharp"] = abs(eta_sharp * p_sharp)
    for j in range(1, K + 1):
        res[f"cs_mu_{j}"] = abs(mu_j[j] * (m[j] - p[j - 1]))
        res[f"cs_lambda_{j}"] = abs(lam_j[j] * (m[j] - p[j]))
    res["lambda_K"] = abs(lam_j[K])
    # sandwich sum_{i<j} t_i <= R_j <= sum_{i<=j} t_i
    for j in range(1, K + 1):
        res[f"sandwich_low_{j}"] = max(0.0, 1.0 - R[j] / sum(t[:j]))
        res[f"sandwich_high_{j}"] = max(0.0, R[j] / sum(t[: j + 1]) - 1.0)
    # strong duality
    primal_value = (N + K - 1) * p_sharp + p[0] + sum(t[j] * m[j] for j in range(1, K + 1))
    res["duality_gap"] = abs(primal_value - (lam * p_hat - mu))

    primal = {"p_sharp": p_sharp, **{f"p_{j}": p[j] for j in range(K)}, **{f"m_{j}": m[j] for j in range(1, K + 1)}}
    dual = {"eta_sharp": eta_sharp, "lambda": lam, "mu": mu}
    dual.update({f"eta_{j}": eta[j] for j in range(K)})
    dual.update({f"lambda_{j}": lam_j[j] for j in range(1, K + 1)})
    dual.update({f"mu_{j}": mu_j[j] for j in range(1, K + 1)})
    return MaxLKktCertificate(params, D, primal, dual, res)


def kkt_verify_maxl(params: SystemParams, D: float, perturb: float = 0.0) -> MaxLKktCertificate:
    cert = maxl_kkt_certificate(params, D, perturb)
    if not cert.passed:
        raise CertificateFailed(cert.violations)
    log.debug(f"Max-L certificate N={params.N} K={params.K} D={cert.D:.6g}: max residual {cert.max_residual:.3e}")
    return cert


# --------------------------------------------------------------
# MI: ratio sequence and closed form
# --------------------------------------------------------------


@dataclass
class XSequence:
    N: int
    K: int
    x: np.ndarray  # x_1..x_{K-1}
    y: np.ndarray  # y_j = ln((j x_j + K - j) / K)

    def residuals(self) -> np.ndarray:
        N, K, x, y = self.N, self.K, self.x, self.y
        j = np.arange(1, K)
        res = [abs(x[0] - x1_closed_form(N, K))]
        res.extend(np.abs(y - np.log((j * x + K - j) / K)))
        for m in range(1, K - 1):
            res.append(abs(y[m - 1] - y[K - 2] - (1 - N) * (y[m] - math.log(x[m]))))
        return np.array(res)

    def __str__(self) -> str:
        return f"x = [{', '.join(f'{v:.10g}' for v in self.x)}]"


def x1_closed_form(N: int, K: int) -> float:
    if N == 2:
        raise Degenerate("x_1 is undefined for N = 2: K^0 - 1 = 0")
    return (K - 1) / (K ** ((N - 2) / (N - 1)) - 1.0)


def _run_backward(z: float, N: int, K: int) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Run the recursion down from x_{K-1} = z; None once some x_m leaves (0, inf)"""
    x = np.empty(K - 1)
    y = np.empty(K - 1)
    x[K - 2] = z
    y[K - 2] = math.log(((K - 1) * z + 1.0) / K)
    for m in range(K - 2, 0, -1):
        y[m - 1] = y[K - 2] + (1 - N) * (y[m] - math.log(x[m]))
        x[m - 1] = (K * math.exp(y[m - 1]) - (K - m)) / m
        if not (np.isfinite(x[m - 1]) and x[m - 1] > 0):
            return None
    return x, y


def solve_x_sequence(params: SystemParams) -> XSequence:
    N, K = params.N, params.K
    x1 = x1_closed_form(N, K)
    if K == 2:
        x = np.array([x1])
        return XSequence(N, K, x, np.log((x + 1.0) / 2.0))

    def shoot(z: float) -> float:
        run = _run_backward(z, N, K)
        return np.nan if run is None else run[0][0] - x1

    values = np.array([shoot(z) for z in SHOOT_GRID])
    bracket = None
    for i in range(len(SHOOT_GRID) - 1):
        a, b = values[i], values[i + 1]
        if np.isfinite(a) and np.isfinite(b) and a * b <= 0:
            bracket = (SHOOT_GRID[i], SHOOT_GRID[i + 1])
            break
    if bracket is None:
        raise NoBracket(f"no sign change for x_{K - 1} in [{SHOOT_GRID[0]:g}, {SHOOT_GRID[-1]:g}] (N={N}, K={K})")
    z = bisect(shoot, *bracket, xtol=SHOOT_XTOL)
    x, y = _run_backward(z, N, K)
    seq = XSequence(N, K, x, y)
    worst = float(seq.residuals().max())
    log.debug(f"x sequence N={N} K={K}: {seq}, recursion residual {worst:.2e}")
    if worst > RECURSION_TOL:
        raise NotConverged(f"x sequence residual {worst:.3e} above {RECURSION_TOL}")
    return seq


def _allocation_from_x(params: SystemParams, D: float, seq: XSequence) -> Tuple[float, np.ndarray]:
    """p_# and p_0..p_{K-1} from the ratios; p_# may come out negative"""
    N, K = params.N, params.K
    s = weight_profile(N, K).s_array
    ratios = np.concatenate([[1.0], np.cumprod(1.0 / seq.x)])
    p0 = (N - 1) * (D - 1.0) / float(np.dot(N * s[1:], ratios[1:]))
    p = p0 * ratios
    return params.p_hat(D) - p0, p


def mi_escape_threshold(params: SystemParams) -> float:
    """Largest D at which the closed form still uses escapes (p_# >= 0)"""
    N, K = params.N, params.K
    seq = solve_x_sequence(params)
    s = weight_profile(N, K).s_array
    Z = float(np.dot(N * s[1:], np.cumprod(1.0 / seq.x)))
    a, b = (N - 1) / N, (N - 1) / Z
    return (1.0 + b) / (a + b)


def mi_clean_tsc(params: SystemParams, D: float) -> Tuple[ReducedAllocation, float]:
    """Best allocation without escapes; closed form for K = 2"""
    D = check_D(params, D)
    N, K = params.N, params.K
    if K == 2:
        p_hat = params.p_hat(D)
        r = ReducedAllocation.from_array(0.0, (p_hat, (1.0 - N * p_hat) / (N * (N - 1))))
        return r, params.gamma_sum * reduced_mi_objective(r, params)
    return mi_reduced_oracle(params, D, escape=False)


def mi_optimal_homogeneous(params: SystemParams, D: float) -> Tuple[ReducedAllocation, float]:
    if not params.homogeneous:
        raise InvalidParams(f"mi_optimal_homogeneous needs equal weights, got {params.gamma}")
    D = check_D(params, D)
    try:
        seq = solve_x_sequence(params)
    except Degenerate:
        log.warning(f"no closed form for N={params.N}, using the reduced MI oracle")
        return mi_reduced_oracle(params, D)
    p_sharp, p = _allocation_from_x(params, D, seq)
    if p_sharp < -CLAMP_TOL:
        # past the escape threshold the p_# >= 0 constraint binds
        return mi_clean_tsc(params, D)
    r = ReducedAllocation.from_array(p_sharp, p).check(params)
    return r, params.gamma_sum * reduced_mi_objective(r, params)


def mi_closed_form_allocation(params: SystemParams, D: float) -> Tuple[Allocation, float]:
    """
    Full-form closed-form allocation: the equal-weight optimum with all escape mass on
    server 1, scored with the actual weights.
    """
    equal = params.with_gamma((1.0 / params.N,) * params.N)
    r, _ = mi_optimal_homogeneous(equal, D)
    a = expand_reduced(r, params, direct_server=1)
    return a, rho_mi(a)


def kkt_verify_mi(params: SystemParams, D: float) -> MiKktCertificate:
    """
    Plug the closed form into the stationarity conditions of the reduced MI problem
    (in nats) with eta_# = 0, lambda_j = 0, nu = y_{K-1}/N and mu = ln K + y_{K-1}.
    Only defined while escapes are active.
    """
    D = check_D(params, D)
    N, K = params.N, params.K
    seq = solve_x_sequence(params)
    threshold = mi_escape_threshold(params)
    if D > threshold + D_TOL:
        raise OutOfRange(f"D = {D:.6g} is past the escape threshold {threshold:.6g}; the escape-free optimum applies")
    s = weight_profile(N, K).s
    x, y = seq.x, seq.y
    yK = y[K - 2]
    nu, mu = yK / N, math.log(K) + yK
    res: Dict[str, float] = {}
    res["d_p_sharp"] = abs(math.log(K) + N * nu - mu)
    res["d_p_0"] = abs((N - 1) * (math.log(x[0]) - y[0]) + N * nu - mu)
    for j in range(1, K - 1):
        res[f"d_p_{j}"] = abs(s[j] * (-y[j - 1] + (N - 1) * (math.log(x[j]) - y[j]) + N * nu))
    res[f"d_p_{K - 1}"] = abs((N - 1) ** (K - 1) * (-yK + N * nu))
    p_sharp, p = _allocation_from_x(params, D, seq)
    r = ReducedAllocation.from_array(max(p_sharp, 0.0), p)
    res["p_sharp>=0"] = max(0.0, -p_sharp)
    res["normalisation"] = abs(N * r.p_sharp + N * float(np.dot(weight_profile(N, K).s_array, p)) - 1.0)
    res["download"] = abs(r.p_sharp + p[0] - params.p_hat(D))
    for j in range(1, K):
        res[f"ratio_{j}"] = abs(p[j - 1] / p[j] - x[j - 1]) / x[j - 1]
    primal = {"p_sharp": r.p_sharp, **{f"p_{j}": float(p[j]) for j in range(K)}}
    dual = {"eta_sharp": 0.0, "nu": nu, "mu": mu, **{f"lambda_{j}": 0.0 for j in range(K)}}
    cert = MiKktCertificate(params, D, primal, dual, res, tol=RECURSION_TOL)
    if not cert.passed:
        raise CertificateFailed(cert.violations)
    return cert


# --------------------------------------------------------------
# MI oracles
# --------------------------------------------------------------


def mi_reduced_oracle(
    params: SystemParams, D: float, escape: bool = True, tol: float = MI_PG_TOL, max_iter: int = MI_MAX_ITER
) -> Tuple[ReducedAllocation, float]:
    """
    Minimise the reduced MI objective on the tight download constraint p_0 + p_# = p_hat.
    Variables are p_0 in [0, p_hat] and u_j = N s_j p_j on a simplex of radius 1 - N p_hat;
    without escapes p_0 is pinned to p_hat.
    """
    D = check_D(params, D)
    N, K = params.N, params.K
    s = weight_profile(N, K).s_array
    p_hat = params.p_hat(D)
    radius = max(1.0 - N * p_hat, 0.0)
    scale = N * s[1:]
    offset = 1 if escape else 0

    def unpack(x: np.ndarray) -> Tuple[float, np.ndarray]:
        p0 = x[0] if escape else p_hat
        return p_hat - p0, np.concatenate([[p0], x[offset:] / scale])

    def fun(x: np.ndarray) -> float:
        p_sharp, p = unpack(x)
        return reduced_mi_objective(ReducedAllocation(p_sharp, tuple(p)), params)

    def grad(x: np.ndarray) -> np.ndarray:
        p_sharp, p = unpack(x)
        g_sharp, g = reduced_mi_gradient(p_sharp, p, params)
        du = g[1:] / scale
        return np.concatenate([[g[0] - g_sharp], du]) if escape else du

    def project(x: np.ndarray) -> np.ndarray:
        u = project_simplex(x[offset:], radius)
        return np.concatenate([[min(max(x[0], 0.0), p_hat)], u]) if escape else u

    u0 = radius * s[1:] / s[1:].sum()
    x0 = np.concatenate([[min(p_hat, u0[0] / scale[0])], u0]) if escape else u0
    result = projected_gradient(fun, grad, project, x0, tol=tol, max_iter=max_iter, name=f"reduced MI D={D:.6g}")
    p_sharp, p = unpack(result.x)
    r = ReducedAllocation.from_array(p_sharp, p).check(params)
    return r, params.gamma_sum * reduced_mi_objective(r, params)


@dataclass
class FullOracleResult:
    allocation: Allocation
    rho: float
    gap: float
    iterations: int


def mi_full_oracle_result(
    params: SystemParams,
    gamma: Optional[Sequence[float]],
    D: float,
    gap_tol: float = FULL_MI_GAP_TOL,
    max_iter: int = FULL_MI_MAX_ITER,
) -> FullOracleResult:
    """
    Weighted MI minimised over every key of every message. Each message's
    distribution lives on the simplex cut by the download constraint; the
    Frank-Wolfe gap with the exact vertex oracle certifies the stopping point.
    """
    params = params.with_gamma(gamma) if gamma is not None else params
    D = check_D(params, D)
    index = key_space_index(params)
    N, K, nk, Q = params.N, params.K, index.n_keys, index.n_queries
    lower = min(N * params.p_hat(D), 1.0)
    mask = index.direct
    # flat[n][k, i] is the position of (k, q) in a K x Q matrix for server n
    flat = [(np.arange(K)[:, None] * Q + index.qidx[n]).ravel() for n in range(N)]
    gamma_arr = np.array(params.gamma)

    def conditionals(x: np.ndarray) -> List[np.ndarray]:
        return [np.bincount(flat[n], weights=x, minlength=K * Q).reshape(K, Q) for n in range(N)]

    def fun(x: np.ndarray) -> float:
        return sum(g * mi_from_matrix(P) for g, P in zip(gamma_arr, conditionals(x)))

    def grad(x: np.ndarray) -> np.ndarray:
        out = np.zeros(K * nk)
        for n, (g, P) in enumerate(zip(gamma_arr, conditionals(x))):
            m = P.mean(axis=0)[None, :]
            safe_m = np.where(m > 0, m, 1.0)
            ratio = np.where(P > ZERO_MASS, P / safe_m, np.where(m > 0, ZERO_MASS / safe_m, K))
            out += g * (np.log2(ratio) / K).ravel()[flat[n]]
        return out

    def project(x: np.ndarray) -> np.ndarray:
        X = x.reshape(K, nk)
        return np.concatenate([project_split_simplex(X[k], mask, lower) for k in range(K)])

    def fw_gap(x: np.ndarray, g: np.ndarray) -> float:
        X, G = x.reshape(K, nk), g.reshape(K, nk)
        gap = 0.0
        for k in range(K):
            best_direct = G[k, mask].min()
            vertex = min(best_direct, lower * best_direct + (1.0 - lower) * G[k, ~mask].min())
            gap += float(np.dot(G[k], X[k])) - vertex
        return gap

    x0 = np.full(K * nk, 1.0 / nk)
    result = projected_gradient(
        fun, grad, project, x0, tol=1e-10, max_iter=max_iter, gap=fw_gap, gap_tol=gap_tol, accept=gap_tol, name=f"full MI D={D:.6g}"
    )
    # a small residual alone does not certify the optimum here
    if not result.gap <= gap_tol:
        raise NotConverged(f"full MI D={D:.6g}: gap {result.gap:.3e} above {gap_tol:.1e} after {result.iterations} iterations")
    X = result.x.reshape(K, nk)
    a = _allocation_from_matrix(index, X)
    rho = rho_mi(a)
    log.debug(f"full MI oracle D={D:.6g}: rho {rho:.10g}, gap {result.gap:.3e}, {result.iterations} iterations")
    return FullOracleResult(a, rho, result.gap, result.iterations)


def mi_full_oracle(params: SystemParams, gamma: Optional[Sequence[float]], D: float) -> Tuple[Allocation, float]:
    result = mi_full_oracle_result(params, gamma, D)
    return result.allocation, result.rho
