import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mkme.kernels import DIRAC_MODEL, CorruptionModel
from mkme.selection import loocv_objective, select_diagonal, select_isotropic

from conftest import ref_inner


def brute_loocv(xs, theta2, cov):
    """Mean over folds of |k(x_i, .) - mean of corrupted features of the rest|^2."""
    n = len(xs)
    total = 0.0
    for i in range(n):
        rest = np.delete(xs, i, axis=0)
        w = np.full(n - 1, 1.0 / (n - 1))
        one = np.ones(1)
        total += (
            ref_inner(xs[i:i + 1], one, DIRAC_MODEL, xs[i:i + 1], one, DIRAC_MODEL, theta2)
            - 2 * ref_inner(xs[i:i + 1], one, DIRAC_MODEL, rest, w, cov, theta2)
            + ref_inner(rest, w, cov, rest, w, cov, theta2)
        )
    return total / n


def test_equilateral_dirac():
    xs = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    assert loocv_objective(xs, 0.8, DIRAC_MODEL) == pytest.approx(brute_loocv(xs, 0.8, DIRAC_MODEL), abs=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_matches_brute_force(seed):
    r = np.random.default_rng(seed)
    n, d = r.integers(3, 12), r.integers(1, 4)
    xs = r.normal(size=(n, d))
    theta2 = r.uniform(0.3, 3)
    for cov in (DIRAC_MODEL, CorruptionModel.isotropic(r.uniform(0, 2)), CorruptionModel.diagonal(r.uniform(0, 2, size=d))):
        assert loocv_objective(xs, theta2, cov) == pytest.approx(brute_loocv(xs, theta2, cov), abs=1e-10)


def test_needs_three_points():
    with pytest.raises(ValueError):
        loocv_objective(np.zeros((2, 1)), 1.0, DIRAC_MODEL)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 3))
def test_permutation_invariant(seed, s2):
    r = np.random.default_rng(seed)
    xs = r.normal(size=(8, 2))
    cov = CorruptionModel.isotropic(s2)
    assert loocv_objective(xs[r.permutation(8)], 1.0, cov) == pytest.approx(loocv_objective(xs, 1.0, cov), abs=1e-13)


def test_isotropic_beats_grid_and_dirac(rng):
    xs = rng.normal(size=(20, 1))
    theta2 = 1.0
    res = select_isotropic(xs, theta2)
    grid = np.linspace(0, 10 * theta2, 101)
    best_grid = min(loocv_objective(xs, theta2, CorruptionModel.isotropic(g)) for g in grid)
    assert res.value <= best_grid + 1e-8
    assert res.value <= loocv_objective(xs, theta2, DIRAC_MODEL)
    assert res.value == pytest.approx(loocv_objective(xs, theta2, res.cov), abs=1e-15)
    assert 1 <= res.evaluations <= 200


def test_isotropic_monotone_objective_returns_lo():
    # coincident rows: every fold error grows with the corruption variance
    xs = np.zeros((3, 1))
    res = select_isotropic(xs, 1.0, bounds=(0.5, 2.0))
    assert res.cov.variances[0] == 0.5


def test_isotropic_bounds_validation(rng):
    xs = rng.normal(size=(5, 1))
    with pytest.raises(ValueError):
        select_isotropic(xs, 1.0, bounds=(0.0, 0.0))
    with pytest.raises(ValueError):
        select_isotropic(xs, 1.0, bounds=(-1.0, 1.0))


def test_diagonal_vs_isotropic_d1(rng):
    xs = rng.normal(size=(15, 1))
    iso = select_isotropic(xs, 0.7)
    diag = select_diagonal(xs, 0.7)
    assert abs(diag.value - iso.value) <= 1e-3
    assert diag.value <= iso.value + 1e-8


def test_diagonal_nests_isotropic(rng):
    xs = rng.normal(size=(25, 3))
    theta2 = 2.0
    iso = select_isotropic(xs, theta2)
    diag = select_diagonal(xs, theta2)
    assert diag.value <= iso.value + 1e-8
    assert diag.value <= loocv_objective(xs, theta2, DIRAC_MODEL) + 1e-8
    e = diag.cov.diag(3)
    assert np.all(e >= 1e-12)


def test_diagonal_rejects_zero_init(rng):
    with pytest.raises(ValueError):
        select_diagonal(rng.normal(size=(5, 2)), 1.0, init=[0.0, 1.0])


def test_selection_deterministic(rng):
    xs = rng.normal(size=(12, 2))
    assert select_diagonal(xs, 1.0) == select_diagonal(xs, 1.0)
