import numpy as np
import pytest

from wpir.allocation import clean_tsc, direct_only, download_cost, expand_reduced, uniform_tsc
from wpir.core import SystemParams
from wpir.errors import IndexOutOfRange, InvalidParams
from wpir.leakage import query_distribution, rho_maxl, rho_mi
from wpir.optimizer import maxl_optimal
from wpir.scheme import Direct, MessageStore, answer, download_symbols, encode_queries
from wpir.sim import empirical_leakage, key_stream, run_all, run_trials, sample_key, sample_keys, total_variation


@pytest.fixture
def uniform32(params32):
    return expand_reduced(uniform_tsc(params32), params32)


def test_key_stream_is_reproducible(uniform32):
    first = sample_keys(uniform32, 1, 50, key_stream(7, 1))[1]
    again = sample_keys(uniform32, 1, 50, key_stream(7, 1))[1]
    other = sample_keys(uniform32, 1, 50, key_stream(7, 2))[1]
    assert list(first) == list(again)
    assert list(first) != list(other)


def test_sample_key(params32):
    assert sample_key(direct_only(params32), 2, key_stream(0, 2)) == Direct(1)


@pytest.mark.parametrize("preset", ["clean", "maxl"])
def test_sample_key_frequencies(params32, preset):
    a = clean_tsc(params32) if preset == "clean" else maxl_optimal(params32, 7 / 6)[0]
    trials = 100_000
    for k in (1, 2):
        support, idx = sample_keys(a, k, trials, key_stream(13, k))
        counts = np.bincount(idx, minlength=len(support))
        for key, count in zip(support, counts):
            p = a.prob(k, key)
            sigma = np.sqrt(trials * p * (1 - p))
            assert abs(count - trials * p) <= 5 * sigma


def test_clean_tsc_has_18_keys(params32):
    support, _ = sample_keys(clean_tsc(params32), 1, 1, key_stream(0, 1))
    assert len(support) == 18


def test_direct_only_costs_one(params32, store32):
    report = run_all(direct_only(params32), store32, 500, seed=1)
    assert report.empirical_D == 1.0
    assert report.empirical_D_se == 0.0
    assert report.decode_failures == 0
    assert report.total_trials == 1000


def test_uniform_tsc(params32, store32, uniform32):
    report = run_all(uniform32, store32, 20_000, seed=3)
    assert report.decode_failures == 0
    assert abs(report.empirical_D - 4 / 3) <= 4 * report.empirical_D_se
    assert empirical_leakage(report, "maxl") == pytest.approx(rho_maxl(uniform32), abs=0.03)
    assert empirical_leakage(report, "mi") == pytest.approx(rho_mi(uniform32), abs=0.01)
    assert total_variation(report.empirical_distribution(1), query_distribution(uniform32, 1)) < 0.02


def test_same_seed_same_report(params32, store32, uniform32):
    a = run_trials(uniform32, store32, 1, 1000, seed=5)
    b = run_trials(uniform32, store32, 1, 1000, seed=5)
    assert a.to_dict() == b.to_dict()


def test_grouped_keys_match_single_trials(params32, store32, uniform32):
    report = run_trials(uniform32, store32, 2, 300, seed=9)
    support, idx = sample_keys(uniform32, 2, 300, key_stream(9, 2))
    symbols = 0
    for i in idx:
        queries = encode_queries(2, support[i], params32)
        symbols += download_symbols([answer(q, store32) for q in queries])
    assert report.symbols[2] == symbols
    assert sum(report.key_counts[2].values()) == 300
    assert report.key_counts[2][support[idx[0]]] == int(np.sum(idx == idx[0]))


def test_report_merge(params32, store32, uniform32):
    one = run_trials(uniform32, store32, 1, 100, seed=0)
    two = run_trials(uniform32, store32, 2, 300, seed=0)
    merged = one.merge(two)
    assert merged.trials == {1: 100, 2: 300}
    assert sum(merged.key_counts[2].values()) == 300
    assert set(merged.to_dict()["per_k"]) == {"1", "2"}


def test_empirical_distribution_needs_every_message(params32, store32, uniform32):
    report = run_trials(uniform32, store32, 1, 10, seed=0)
    with pytest.raises(InvalidParams):
        report.empirical_distribution(1)


def test_bad_inputs(params32, store32, uniform32):
    with pytest.raises(IndexOutOfRange):
        run_trials(uniform32, store32, 3, 10, seed=0)
    other = MessageStore.random(SystemParams(3, 3), key_stream(0, 0))
    with pytest.raises(InvalidParams):
        run_trials(uniform32, other, 1, 10, seed=0)
    with pytest.raises(InvalidParams):
        empirical_leakage(run_all(uniform32, store32, 10, seed=0), "entropy")


@pytest.mark.slow
@pytest.mark.parametrize("preset", ["uniform", "maxl"])
def test_million_trials(params32, store32, uniform32, preset):
    a = uniform32 if preset == "uniform" else maxl_optimal(params32, 7 / 6)[0]
    report = run_all(a, store32, 1_000_000, seed=11)
    assert abs(report.empirical_D - download_cost(a)) <= 3 * report.empirical_D_se
    assert empirical_leakage(report, "maxl") == pytest.approx(rho_maxl(a), abs=0.01)
    assert empirical_leakage(report, "mi") == pytest.approx(rho_mi(a), abs=0.01)
