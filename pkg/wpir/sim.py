"""
Monte Carlo runs of the protocol against in-process servers.

Keys are drawn by inverse CDF over the allocation's support in the fixed key order,
from a counter-based Philox stream keyed by (seed, k): trial i of message k always
gets the same uniform, whatever else runs. Trials that draw the same key are run
once and weighted by their count.
"""
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger as log

from .allocation import Allocation
from .core import SystemParams
from .errors import DecodeMismatch, InvalidParams
from .leakage import METRICS, QueryDistribution, maxl_from_matrix, mi_from_matrix
from .scheme import MessageStore, RandomKey, answer, check_message_index, decode, download_symbols, encode_queries


def key_stream(seed: int, k: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed, k]))


def _cdf(a: Allocation, k: int) -> Tuple[List[RandomKey], np.ndarray]:
    support = a.support(k)
    cdf = np.cumsum([a.prob(k, key) for key in support])
    return support, cdf / cdf[-1]


def sample_keys(a: Allocation, k: int, trials: int, rng: np.random.Generator) -> Tuple[List[RandomKey], np.ndarray]:
    """Support of message k and the support index drawn for every trial"""
    support, cdf = _cdf(a, k)
    idx = np.searchsorted(cdf, rng.random(trials), side="right")
    return support, np.minimum(idx, len(support) - 1)


def sample_key(a: Allocation, k: int, rng: np.random.Generator) -> RandomKey:
    support, idx = sample_keys(a, k, 1, rng)
    return support[int(idx[0])]


@dataclass
class SimReport:
    params: SystemParams
    trials: Dict[int, int] = field(default_factory=dict)
    symbols: Dict[int, int] = field(default_factory=dict)
    symbols_sq: Dict[int, int] = field(default_factory=dict)
    key_counts: Dict[int, Counter] = field(default_factory=dict)
    # (server n, message k) -> query -> count
    query_counts: Dict[Tuple[int, int], Counter] = field(default_factory=dict)
    decode_failures: int = 0

    @property
    def total_trials(self) -> int:
        return sum(self.trials.values())

    def mean_symbols(self, k: int) -> float:
        return self.symbols[k] / self.trials[k]

    def standard_error(self, k: int) -> float:
        """Standard error of the mean download, in units of L"""
        T = self.trials[k]
        mean = self.symbols[k] / T
        var = max(self.symbols_sq[k] / T - mean**2, 0.0)
        return float(np.sqrt(var / T)) / self.params.L

    @property
    def worst_k(self) -> int:
        return max(self.trials, key=self.mean_symbols)

    @property
    def empirical_D(self) -> float:
        """Worst case over the simulated messages of the mean download normalised by L"""
        return self.mean_symbols(self.worst_k) / self.params.L

    @property
    def empirical_D_se(self) -> float:
        return self.standard_error(self.worst_k)

    def merge(self, other: "SimReport") -> "SimReport":
        merged = SimReport(self.params, decode_failures=self.decode_failures + other.decode_failures)
        for name in ("trials", "symbols", "symbols_sq"):
            total = Counter(getattr(self, name))
            total.update(getattr(other, name))
            setattr(merged, name, dict(total))
        for name in ("key_counts", "query_counts"):
            target = getattr(merged, name)
            for source in (getattr(self, name), getattr(other, name)):
                for slot, counts in source.items():
                    target.setdefault(slot, Counter()).update(counts)
        return merged

    def empirical_distribution(self, n: int) -> QueryDistribution:
        per_k = []
        for k in range(1, self.params.K + 1):
            if k not in self.trials:
                raise InvalidParams(f"no trials for message {k}")
            counts = self.query_counts.get((n, k), Counter())
            per_k.append({q: c / self.trials[k] for q, c in counts.items()})
        return QueryDistribution(n, per_k)

    def to_dict(self) -> dict:
        return {
            "N": self.params.N,
            "K": self.params.K,
            "trials": self.total_trials,
            "empirical_D": self.empirical_D,
            "standard_error": self.empirical_D_se,
            "decode_failures": self.decode_failures,
            "per_k": {
                str(k): {
                    "trials": self.trials[k],
                    "mean_symbols": self.mean_symbols(k),
                    "key_counts": {str(key): c for key, c in sorted(self.key_counts[k].items(), key=lambda kv: str(kv[0]))},
                }
                for k in sorted(self.trials)
            },
            "query_counts": {
                f"{n},{k}": {str(q): c for q, c in sorted(counts.items(), key=lambda qc: str(qc[0]))}
                for (n, k), counts in sorted(self.query_counts.items())
            },
        }

    def __str__(self) -> str:
        return (
            f"SimReport {self.params}: {self.total_trials} trials, D = {self.empirical_D:.6f} "
            f"± {self.empirical_D_se:.2e}, {self.decode_failures} decode failures"
        )


def run_trials(a: Allocation, store: MessageStore, k: int, trials: int, seed: int, strict: bool = True) -> SimReport:
    """
    Draw `trials` keys for message k and run the protocol.
    Each distinct drawn key is encoded, answered and decoded once and its outcome is
    counted with the number of times it was drawn. The protocol is deterministic given
    the key, so the report equals running every trial on its own.
    """
    params = a.params
    check_message_index(k, params)
    if store.params.K != params.K or store.params.N != params.N:
        raise InvalidParams(f"store {store.params} does not match allocation {params}")
    support, idx = sample_keys(a, k, trials, key_stream(seed, k))
    report = SimReport(params, {k: trials}, {k: 0}, {k: 0}, {k: Counter()})
    wanted = store.message(k)
    for i, count in enumerate(np.bincount(idx, minlength=len(support))):
        if not count:
            continue
        count = int(count)
        key = support[i]
        queries = encode_queries(k, key, params)
        answers = [answer(q, store) for q in queries]
        if decode(answers, k, key, params) != wanted:
            if strict:
                raise DecodeMismatch(f"key {key} decoded the wrong message {k}")
            report.decode_failures += count
        used = download_symbols(answers)
        report.symbols[k] += count * used
        report.symbols_sq[k] += count * used * used
        report.key_counts[k][key] += count
        for n, q in enumerate(queries, start=1):
            report.query_counts.setdefault((n, k), Counter())[q] += count
    log.debug(f"k={k}: {trials} trials over {len(report.key_counts[k])} distinct keys")
    return report


def run_all(a: Allocation, store: MessageStore, trials: int, seed: int) -> SimReport:
    """run_trials for every message, merged"""
    report = run_trials(a, store, 1, trials, seed)
    for k in range(2, a.params.K + 1):
        report = report.merge(run_trials(a, store, k, trials, seed))
    log.info(f"{report}")
    return report


def empirical_leakage(report: SimReport, metric: str, gamma: Optional[Sequence[float]] = None) -> float:
    """Plug-in estimate of rho from empirical query frequencies"""
    if metric not in METRICS:
        raise InvalidParams(f"unknown metric '{metric}', use one of {METRICS}")
    gamma = report.params.gamma if gamma is None else gamma
    total = 0.0
    for n, g in enumerate(gamma, start=1):
        P = report.empirical_distribution(n).matrix()
        total += g * (2.0 ** maxl_from_matrix(P) if metric == "maxl" else mi_from_matrix(P))
    return total


def total_variation(p: QueryDistribution, q: QueryDistribution) -> float:
    """Largest total-variation distance over messages between two query distributions of one server"""
    worst = 0.0
    for dp, dq in zip(p.per_k, q.per_k):
        keys = set(dp) | set(dq)
        worst = max(worst, 0.5 * sum(abs(dp.get(x, 0.0) - dq.get(x, 0.0)) for x in keys))
    return worst
