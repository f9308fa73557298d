import pytest

from wpir.errors import InvalidParams
from wpir.verify import SUITE_ALIASES, SUITES, run_suites


@pytest.mark.parametrize("name", ["maxl-kkt", "prop2", "hull"])
def test_suite_passes(name):
    (result,) = run_suites(name)
    assert result.name == name
    assert result.passed, result.details
    assert not result.details


@pytest.mark.parametrize("name", ["maxl-kkt", "prop2", "hull"])
def test_suite_perturbed_fails(name):
    (result,) = run_suites(name, perturb=True)
    assert not result.passed
    assert result.details
    assert "FAIL" in str(result)


@pytest.mark.slow
def test_prop4_suite():
    (result,) = run_suites("prop4")
    assert result.passed, result.details
    assert result.max_residual <= 1e-4


def test_alias_runs_the_same_suite():
    (result,) = run_suites("maxl-full")
    assert result.name == "prop2"
    assert result.passed


def test_unknown_suite():
    with pytest.raises(InvalidParams):
        run_suites("bogus")


def test_suite_table():
    assert set(SUITES) == {"maxl-kkt", "prop2", "prop4", "hull"}
    assert set(SUITE_ALIASES.values()) <= set(SUITES)
