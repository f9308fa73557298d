"""
Certificate batteries behind `wpir verify`.

    maxl-kkt  explicit primal/dual certificate of the reduced Max-L LP over a parameter sweep
    prop2     full-key-space Max-L optimum equals the reduced optimum (alias maxl-full)
    prop4     full-key-space MI optimum equals the reduced optimum (alias mi-full)
    hull      optimal MI curve equals the time-sharing hull

`perturb` injects a 0.01 error (into p_# or into the compared value); every
suite must then fail.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List

from loguru import logger as log

from .core import SystemParams
from .errors import InvalidParams
from .optimizer import maxl_full_oracle, maxl_kkt_certificate, maxl_reduced_oracle, mi_full_oracle, mi_reduced_oracle
from .tradeoff import default_grid, mi_hull_deviation

PERTURBATION = 0.01

KKT_SWEEP_N = range(2, 6)
KKT_SWEEP_K = range(2, 6)
KKT_SWEEP_POINTS = 11

MAXL_FULL_TOL = 1e-5
MI_FULL_TOL = 1e-4
HULL_TOL = 1e-4


@dataclass
class SuiteResult:
    name: str
    passed: bool
    max_residual: float
    details: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "max_residual": self.max_residual, "details": list(self.details)}

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name:10} {status}  max residual {self.max_residual:.3e}"


def maxl_kkt_suite(perturb: bool = False) -> SuiteResult:
    worst, details = 0.0, []
    for N in KKT_SWEEP_N:
        for K in KKT_SWEEP_K:
            params = SystemParams(N, K)
            for D in default_grid(params, KKT_SWEEP_POINTS):
                cert = maxl_kkt_certificate(params, D, PERTURBATION if perturb else 0.0)
                worst = max(worst, cert.max_residual)
                if not cert.passed:
                    details.append(f"N={N} K={K} D={D:.6g}: {cert.violations[0]}")
    return SuiteResult("maxl-kkt", not details, worst, details)


def maxl_full_suite(perturb: bool = False) -> SuiteResult:
    worst, details = 0.0, []
    for N, K in ((3, 2), (2, 2)):
        params = SystemParams(N, K)
        for D in default_grid(params, 6):
            _, full = maxl_full_oracle(params, None, D)
            _, reduced = maxl_reduced_oracle(params, None, D)
            gap = abs(full + (PERTURBATION if perturb else 0.0) - reduced)
            worst = max(worst, gap)
            if gap > MAXL_FULL_TOL:
                details.append(f"N={N} K={K} D={D:.6g}: full {full:.10g} vs reduced {reduced:.10g}")
    return SuiteResult("prop2", not details, worst, details)


def mi_full_suite(perturb: bool = False) -> SuiteResult:
    worst, details = 0.0, []
    params = SystemParams(3, 2)
    for D in default_grid(params, 5):
        _, full = mi_full_oracle(params, None, D)
        _, reduced = mi_reduced_oracle(params, D)
        gap = abs(full + (PERTURBATION if perturb else 0.0) - reduced)
        worst = max(worst, gap)
        if gap > MI_FULL_TOL:
            details.append(f"N=3 K=2 D={D:.6g}: full {full:.10g} vs reduced {reduced:.10g}")
    return SuiteResult("prop4", not details, worst, details)


def hull_suite(perturb: bool = False) -> SuiteResult:
    worst, details = 0.0, []
    for N, K in ((3, 2), (2, 2)):
        deviation = mi_hull_deviation(SystemParams(N, K)) + (PERTURBATION if perturb else 0.0)
        worst = max(worst, deviation)
        if deviation > HULL_TOL:
            details.append(f"N={N} K={K}: hull deviation {deviation:.3e}")
    return SuiteResult("hull", not details, worst, details)
SUITES: Dict[str, Callable[[bool], SuiteResult]] = {
    "maxl-kkt": maxl_kkt_suite,
    "prop2": maxl_full_suite,
    "prop4": mi_full_suite,
    "hull": hull_suite,
}

SUITE_ALIASES = {"maxl-full": "prop2", "mi-full": "prop4"}


def run_suites(name: str = "all", perturb: bool = False) -> List[SuiteResult]:
    name = SUITE_ALIASES.get(name, name)
    if name != "all" and name not in SUITES:
        raise InvalidParams(f"unknown suite '{name}', use one of {', '.join([*SUITES, *SUITE_ALIASES])} or all")
    results = []
    for suite_name, suite in SUITES.items():
        if name in ("all", suite_name):
            log.info(f"running {suite_name}{' (perturbed)' if perturb else ''}")
            results.append(suite(perturb))
            log.info(f"{results[-1]}")
    return results
