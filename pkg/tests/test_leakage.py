import math

import numpy as np
import pytest

from wpir.allocation import Allocation, ReducedAllocation, clean_tsc, direct_only, expand_reduced, uniform_tsc
from wpir.core import SystemParams, all_permutations
from wpir.errors import InvalidParams, NotNormalized
from wpir.leakage import (
    QueryDistribution,
    TradeoffPoint,
    max_leakage,
    maxl_from_matrix,
    mi_from_matrix,
    mi_leakage,
    query_distribution,
    reduced_maxl_sum,
    reduced_mi_gradient,
    reduced_mi_objective,
    reduced_rho_maxl,
    reduced_rho_mi,
    rho_maxl,
    rho_mi,
    split_time_sharing,
)
from wpir.optimizer import maxl_optimal
from wpir.scheme import Coded, Escape, Vec

# a generic point of the reduced polytope for N=3, K=2
MIXED = ReducedAllocation(0.1, (0.1, 1 / 15))


def test_uniform_tsc_leaks_nothing(params32):
    a = expand_reduced(uniform_tsc(params32), params32)
    for n in range(1, 4):
        assert max_leakage(a, n) == pytest.approx(0.0, abs=1e-12)
        assert mi_leakage(a, n) == pytest.approx(0.0, abs=1e-12)
    assert rho_maxl(a) == pytest.approx(1.0)
    assert rho_mi(a) == pytest.approx(0.0, abs=1e-12)


def test_direct_download_leaks_everything(params32, hetero32):
    a = direct_only(params32)
    assert max_leakage(a, 1) == pytest.approx(1.0)
    assert max_leakage(a, 2) == pytest.approx(0.0)
    assert mi_leakage(a, 1) == pytest.approx(1.0)
    assert rho_maxl(a) == pytest.approx(4 / 3)
    assert rho_mi(a) == pytest.approx(1 / 3)
    # gamma_1 K + sum of the others
    assert rho_maxl(a, hetero32.gamma) == pytest.approx(0.1 * 2 + 0.9)


def test_server_one_distribution_at_7_6(params32):
    a, rho = maxl_optimal(params32, 7 / 6)
    dist = query_distribution(a, 1).check()
    assert dist.per_k[0][Escape(1)] == pytest.approx(0.5)
    vectors = {q: p for q, p in dist.per_k[0].items() if isinstance(q, Vec)}
    assert set(vectors) == {Vec((2, 0)), Vec((1, 1)), Vec((0, 2))}
    assert list(vectors.values()) == pytest.approx([1 / 6] * 3)
    assert rho == pytest.approx(7 / 6)
    assert rho_maxl(a) == pytest.approx(7 / 6)


def test_query_distribution_bad_server(params32):
    with pytest.raises(InvalidParams):
        query_distribution(direct_only(params32), 4)


def test_distribution_check():
    with pytest.raises(NotNormalized):
        QueryDistribution(1, [{Vec((0, 0)): 0.5}, {Vec((0, 0)): 1.0}]).check()


def test_merge_never_increases_leakage(params32):
    a, _ = maxl_optimal(params32, 7 / 6)
    dist = query_distribution(a, 1)
    merged = dist.merge(Escape(1), Escape(2))
    assert mi_from_matrix(merged.matrix()) <= mi_from_matrix(dist.matrix()) + 1e-12
    assert maxl_from_matrix(merged.matrix()) <= maxl_from_matrix(dist.matrix()) + 1e-12
    assert sum(merged.per_k[1].values()) == pytest.approx(1.0)


def test_matrix_kernels():
    assert maxl_from_matrix(np.eye(2)) == pytest.approx(1.0)
    assert mi_from_matrix(np.eye(2)) == pytest.approx(1.0)
    assert mi_from_matrix(np.full((2, 4), 0.25)) == pytest.approx(0.0, abs=1e-15)
    assert maxl_from_matrix(np.full((2, 4), 0.25)) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("r", [MIXED, ReducedAllocation(0.0, (1 / 9, 1 / 9)), ReducedAllocation(1 / 3, (0.0, 0.0))])
def test_reduced_forms_match_full(params32, r):
    r.check(params32)
    a = expand_reduced(r, params32)
    assert reduced_rho_maxl(r, None, params32) == pytest.approx(rho_maxl(a), rel=1e-9)
    assert reduced_rho_mi(r, None, params32) == pytest.approx(rho_mi(a), rel=1e-9, abs=1e-12)
    assert 2.0 ** max_leakage(a, 2) == pytest.approx(reduced_maxl_sum(r, params32), rel=1e-9)


def test_reduced_maxl_sum_by_hand(params32):
    # 5 p_0 + 4 p_1 + (N + K - 1) p_#
    assert reduced_maxl_sum(MIXED, params32) == pytest.approx(5 * 0.1 + 4 / 15 + 0.4)


def test_reduced_forms_match_full_3_3():
    params = SystemParams(3, 3)
    # 3 p_# + 3 (p_0 + 4 p_1 + 4 p_2) = 1
    r = ReducedAllocation(1 / 20, (1 / 10, 3 / 100, 19 / 1200)).check(params)
    a = expand_reduced(r, params)
    assert reduced_rho_maxl(r, None, params) == pytest.approx(rho_maxl(a), rel=1e-9)
    assert reduced_rho_mi(r, None, params) == pytest.approx(rho_mi(a), rel=1e-9)


def test_mi_gradient_matches_differences(params32):
    g_sharp, grad = reduced_mi_gradient(MIXED.p_sharp, MIXED.p_array, params32)
    assert g_sharp == pytest.approx(1.0)
    h = 1e-6
    for j in range(params32.K):
        up, down = MIXED.p_array.copy(), MIXED.p_array.copy()
        up[j] += h
        down[j] -= h
        numeric = (
            reduced_mi_objective(ReducedAllocation(MIXED.p_sharp, tuple(up)), params32)
            - reduced_mi_objective(ReducedAllocation(MIXED.p_sharp, tuple(down)), params32)
        ) / (2 * h)
        assert grad[j] == pytest.approx(numeric, rel=1e-5, abs=1e-8)


def test_mi_gradient_at_zero_pair(params32):
    _, grad = reduced_mi_gradient(1 / 3, np.zeros(2), params32)
    assert np.all(np.isfinite(grad))


def test_split_time_sharing(params32):
    alpha, clean = split_time_sharing(MIXED, params32)
    assert alpha == pytest.approx(0.3)
    assert clean.p_sharp == 0.0
    expected = alpha * math.log2(params32.K) / params32.N + (1 - alpha) * reduced_mi_objective(clean, params32)
    assert reduced_mi_objective(MIXED, params32) == pytest.approx(expected, rel=1e-12)


def test_tradeoff_point(params32):
    point = TradeoffPoint(7 / 6, 7 / 6, "maxl", "closed_form", params32)
    row = point.csv_row()
    assert row["method"] == "closed_form"
    assert float(row["D"]) == pytest.approx(7 / 6)
    assert point.to_dict()["N"] == 3
    with pytest.raises(InvalidParams):
        TradeoffPoint(1.0, 1.0, "entropy", "oracle", params32)


@pytest.mark.parametrize("N, K", [(3, 2), (3, 3), (4, 2)])
def test_fixed_permutation_tsc_is_private(N, K):
    params = SystemParams(N, K)
    for pi in all_permutations(N):
        per_k = {Coded(tuple(int(v) for v in f), pi): float(N) ** (1 - K) for f in np.ndindex(*(N,) * (K - 1))}
        a = Allocation(params, [dict(per_k) for _ in range(K)])
        for n in range(1, N + 1):
            dist = query_distribution(a, n).check()
            assert all(d.keys() == dist.per_k[0].keys() for d in dist.per_k)
            for d in dist.per_k[1:]:
                assert [d[q] for q in dist.per_k[0]] == pytest.approx(list(dist.per_k[0].values()))
            assert mi_leakage(a, n) == pytest.approx(0.0, abs=1e-12)


def test_clean_tsc_leaks_nothing(params32):
    a = clean_tsc(params32)
    assert rho_maxl(a) == pytest.approx(1.0)
    assert rho_mi(a) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("N, K", [(2, 2), (3, 2), (3, 3), (4, 2)])
def test_reduced_forms_match_full_random(N, K, random_reduced, rng):
    params = SystemParams(N, K)
    for _ in range(25):
        r = random_reduced(params, rng).check(params)
        a = expand_reduced(r, params)
        assert reduced_rho_maxl(r, None, params) == pytest.approx(rho_maxl(a), rel=1e-10)
        assert reduced_rho_mi(r, None, params) == pytest.approx(rho_mi(a), rel=1e-10, abs=1e-12)
