import io
import math

import pytest

from wpir.core import SystemParams
from wpir.errors import InvalidParams, NotMonotone
from wpir.leakage import CSV_FIELDS, TradeoffPoint
from wpir.tradeoff import (
    assert_monotone,
    check_monotone,
    clean_tsc_curve,
    default_grid,
    hull_check,
    lower_hull,
    mi_hull_deviation,
    read_points_csv,
    tradeoff_curve,
    write_points_csv,
    write_points_json,
)


def test_default_grid(params32):
    grid = default_grid(params32, 5)
    assert grid[0] == 1.0
    assert grid[-1] == pytest.approx(4 / 3)
    with pytest.raises(InvalidParams):
        default_grid(params32, 1)


def test_lower_hull():
    assert lower_hull([(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]) == [(0.0, 0.0), (2.0, 0.0)]
    assert lower_hull([(0.0, 1.0), (1.0, 0.0), (2.0, 1.0)]) == [(0.0, 1.0), (1.0, 0.0), (2.0, 1.0)]


def test_hull_check():
    tsc = [(1.0, 1.0), (2.0, 0.0)]
    assert hull_check(tsc, (0.0, 2.0), [(0.5, 1.5), (1.5, 0.5)]) == pytest.approx(0.0)
    assert hull_check(tsc, (0.0, 2.0), [(0.5, 1.6)]) == pytest.approx(0.1)


def test_check_monotone(params32):
    points = [TradeoffPoint(D, rho, "mi", "oracle", params32) for D, rho in [(1.0, 0.5), (1.1, 0.3), (1.2, 0.35)]]
    assert check_monotone(points) == pytest.approx(0.05)
    assert check_monotone(points[:2]) <= 0
    assert check_monotone([]) == 0.0


def test_assert_monotone(params32):
    falling = [TradeoffPoint(D, 1.0 / D, "maxl", "closed_form", params32) for D in (1.0, 1.2, 1.4)]
    assert_monotone(falling)
    rising = falling + [TradeoffPoint(1.5, 0.9, "maxl", "baseline", params32), TradeoffPoint(1.6, 0.95, "maxl", "baseline", params32)]
    with pytest.raises(NotMonotone) as info:
        assert_monotone(rising)
    assert info.value.curve == "maxl/baseline"
    assert info.value.increase == pytest.approx(0.05)


def test_oracle_noise_is_tolerated(params32):
    points = [TradeoffPoint(D, rho, "mi", "oracle", params32) for D, rho in [(1.0, 0.3), (1.1, 0.3 + 1e-7)]]
    assert_monotone(points)
    with pytest.raises(NotMonotone):
        assert_monotone([TradeoffPoint(p.D, p.rho, "mi", "closed_form", params32) for p in points])


@pytest.mark.parametrize("metric", ["maxl", "mi"])
def test_every_curve_is_non_increasing(metric, params32, hetero32):
    for params in (params32, hetero32):
        points = tradeoff_curve(metric, params, D_grid=default_grid(params, 9), full=False)
        for method in {p.method for p in points}:
            assert check_monotone([p for p in points if p.method == method]) <= 1e-6, method


def test_mi_closed_form_needs_equal_weights(hetero32):
    points = tradeoff_curve("mi", hetero32, D_grid=default_grid(hetero32, 3), full=False)
    assert {p.method for p in points} == {"oracle", "clean_tsc"}


def test_maxl_curve(hetero32):
    points = tradeoff_curve("maxl", hetero32, D_grid=default_grid(hetero32, 5))
    assert {p.method for p in points} == {"closed_form", "oracle", "baseline", "full_oracle"}
    by_method = {}
    for p in points:
        by_method.setdefault(p.method, []).append(p)
    for closed, full in zip(by_method["closed_form"], by_method["full_oracle"]):
        assert closed.D == full.D
        assert full.rho == pytest.approx(closed.rho, abs=1e-5)
    assert check_monotone(by_method["closed_form"]) <= 1e-12
    assert by_method["closed_form"][-1].rho == pytest.approx(1.0)


def test_gamma_override(params32):
    points = tradeoff_curve("maxl", params32, gamma=(0.1, 0.3, 0.6), D_grid=[1.0], full=False)
    assert points[0].params.gamma == (0.1, 0.3, 0.6)
    assert points[0].rho == pytest.approx(1.1)


def test_mi_curve_n2():
    params = SystemParams(2, 2)
    points = tradeoff_curve("mi", params, D_grid=default_grid(params, 3), full=False)
    assert {p.method for p in points} == {"oracle", "clean_tsc"}


def test_mi_curve_3_2(params32):
    points = tradeoff_curve("mi", params32, D_grid=default_grid(params32, 3), full=False)
    closed = [p for p in points if p.method == "closed_form"]
    assert len(closed) == 3
    assert closed[0].rho == pytest.approx(math.log2(2) / 3, abs=1e-9)
    assert closed[-1].rho == pytest.approx(0.0, abs=1e-9)


def test_unknown_metric(params32):
    with pytest.raises(InvalidParams):
        tradeoff_curve("entropy", params32)


def test_csv_output(params32):
    points = tradeoff_curve("maxl", params32, D_grid=default_grid(params32, 3), full=False)
    stream = io.StringIO()
    write_points_csv(points, stream)
    text = stream.getvalue()
    assert text.splitlines()[0] == ",".join(CSV_FIELDS)
    rows = read_points_csv(io.StringIO(text))
    assert len(rows) == len(points)
    assert rows[0]["N"] == 3
    assert rows[0]["rho"] == pytest.approx(points[0].rho)


def test_json_output(params32):
    points = tradeoff_curve("maxl", params32, D_grid=[1.0], full=False)
    stream = io.StringIO()
    write_points_json(points, stream)
    assert '"method": "closed_form"' in stream.getvalue()


def test_clean_tsc_curve(params32):
    curve = clean_tsc_curve(params32, 11)
    assert len(curve) == 11
    assert curve[-1][1] == pytest.approx(0.0, abs=1e-12)
    assert all(b[1] <= a[1] + 1e-12 for a, b in zip(curve, curve[1:]))


@pytest.mark.parametrize("N, K", [(3, 2), (2, 2)])
def test_mi_hull(N, K):
    assert mi_hull_deviation(SystemParams(N, K)) <= 1e-4
