import numpy as np
import pytest

from wpir.errors import NotConverged
from wpir.solvers import project_simplex, project_split_simplex, projected_gradient, solve_lp


def test_project_simplex():
    assert project_simplex(np.array([0.5, 0.5])) == pytest.approx([0.5, 0.5])
    assert project_simplex(np.array([2.0, 0.0])) == pytest.approx([1.0, 0.0])
    assert project_simplex(np.array([0.0, 0.0, 0.0]), 0.6) == pytest.approx([0.2, 0.2, 0.2])
    assert project_simplex(np.array([1.0, 2.0]), 0.0) == pytest.approx([0.0, 0.0])


def test_project_simplex_random(rng):
    for _ in range(20):
        y = rng.normal(size=7)
        x = project_simplex(y, 0.7)
        assert x.sum() == pytest.approx(0.7)
        assert np.all(x >= 0)


def test_project_split_simplex():
    mask = np.array([True, False, False])
    x = project_split_simplex(np.array([0.0, 0.0, 1.0]), mask, 0.5)
    assert x == pytest.approx([0.5, 0.0, 0.5])
    # the cut is already satisfied
    x = project_split_simplex(np.array([1.0, 0.0, 0.0]), mask, 0.5)
    assert x == pytest.approx([1.0, 0.0, 0.0])


def _quadratic(c):
    return (lambda x: float(np.sum((x - c) ** 2)), lambda x: 2 * (x - c))


def test_projected_gradient_interior():
    c = np.array([0.2, 0.3, 0.5])
    fun, grad = _quadratic(c)
    result = projected_gradient(fun, grad, project_simplex, np.array([1.0, 0.0, 0.0]))
    assert result.converged
    assert result.x == pytest.approx(c, abs=1e-7)


def test_projected_gradient_boundary():
    fun, grad = _quadratic(np.array([1.0, 1.0, -1.0]))
    result = projected_gradient(fun, grad, project_simplex, np.full(3, 1 / 3))
    assert result.x == pytest.approx([0.5, 0.5, 0.0], abs=1e-7)


def test_projected_gradient_cap():
    fun, grad = _quadratic(np.array([1.0, 0.0, 0.0]))
    with pytest.raises(NotConverged):
        projected_gradient(fun, grad, project_simplex, np.array([0.0, 0.0, 1.0]), max_iter=1, accept=1e-12)


def test_solve_lp():
    res = solve_lp(np.array([1.0, 2.0]), A_eq=np.array([[1.0, 1.0]]), b_eq=np.array([1.0]))
    assert res.fun == pytest.approx(1.0)
    assert res.x == pytest.approx([1.0, 0.0])
    with pytest.raises(NotConverged):
        solve_lp(np.array([1.0]), A_eq=np.array([[1.0]]), b_eq=np.array([-1.0]))
