import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mkme.hsic import center, hsic_from_grams, hsic_statistic, independence_test, power_study, weighted_hsic
from mkme.kernels import DIRAC_MODEL, CorruptionModel, gram, rbf

from conftest import ref_gram


def loop_hsic(K, Z):
    n = len(K)
    H = [[(1.0 if i == j else 0.0) - 1.0 / n for j in range(n)] for i in range(n)]
    def mm(A, B):
        return [[sum(A[i][k] * B[k][j] for k in range(n)) for j in range(n)] for i in range(n)]
    M = mm(mm(mm(H, K.tolist()), H), mm(mm(H, Z.tolist()), H))
    return sum(M[i][i] for i in range(n)) / n**2


def test_loop_oracle(rng):
    xs, ys = rng.normal(size=(5, 2)), rng.normal(size=(5, 1))
    K, Z = gram(xs, xs, 1.0), gram(ys, ys, 0.5)
    assert hsic_statistic(xs, ys, 1.0, 0.5) == pytest.approx(loop_hsic(K, Z), abs=1e-12)


def test_marginalized_loop_oracle(rng):
    xs, ys = rng.normal(size=(5, 2)), rng.normal(size=(5, 1))
    cx, cy = CorruptionModel.diagonal([0.2, 0.5]), CorruptionModel.isotropic(0.3)
    K, Z = ref_gram(xs, cx, xs, cx, 1.0), ref_gram(ys, cy, ys, cy, 0.5)
    assert hsic_statistic(xs, ys, 1.0, 0.5, cx, cy) == pytest.approx(loop_hsic(K, Z), abs=1e-12)


def test_constant_labels_give_zero(rng):
    xs = rng.normal(size=(6, 2))
    assert hsic_statistic(xs, np.ones((6, 1)), 1.0, 1.0) == pytest.approx(0.0, abs=1e-15)


def test_two_identical_pairs():
    xs = np.array([[0.0], [1.0]])
    K = gram(xs, xs, 1.0)
    v = hsic_statistic(xs, xs, 1.0, 1.0)
    assert v == pytest.approx(np.trace(center(K) @ center(K)) / 4, abs=1e-15) and v >= 0


def test_dirac_equals_plain(rng):
    xs, ys = rng.normal(size=(7, 2)), rng.normal(size=(7, 2))
    assert hsic_statistic(xs, ys, 0.8, 1.1, DIRAC_MODEL, DIRAC_MODEL) == hsic_from_grams(gram(xs, xs, 0.8), gram(ys, ys, 1.1))


def test_weighted_matches_trace_form(rng):
    xs, ys = rng.normal(size=(8, 2)), rng.normal(size=(8, 1))
    K, Z = gram(xs, xs, 1.0), gram(ys, ys, 1.0)
    u = np.full(8, 1 / 8)
    assert weighted_hsic(K, Z, u, u, u) == pytest.approx(hsic_from_grams(K, Z), abs=1e-14)


def test_row_mismatch():
    with pytest.raises(ValueError):
        hsic_statistic(np.zeros((3, 1)), np.zeros((4, 1)), 1.0, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 2))
def test_nonnegative_and_joint_permutation_invariant(seed, s2):
    r = np.random.default_rng(seed)
    xs, ys = r.normal(size=(9, 2)), r.normal(size=(9, 1))
    cov = CorruptionModel.isotropic(s2)
    v = hsic_statistic(xs, ys, 1.0, 1.0, cov, cov)
    assert v >= -1e-12
    p = r.permutation(9)
    assert hsic_statistic(xs[p], ys[p], 1.0, 1.0, cov, cov) == pytest.approx(v, abs=1e-12)


def test_continuous_in_sigma2(rng):
    xs, ys = rng.normal(size=(10, 1)), rng.normal(size=(10, 1))
    f = lambda s: hsic_statistic(xs, ys, 1.0, 1.0, CorruptionModel.isotropic(s), CorruptionModel.isotropic(s))
    diffs = [abs(f(0.5 + h) - f(0.5)) for h in (1e-2, 1e-4, 1e-6)]
    assert diffs[0] > diffs[1] > diffs[2] and diffs[2] < 1e-7


def test_perfect_dependence_rejected(rng):
    xs = rng.normal(size=(50, 1))
    for kind in ("kme", "skmse", "fkmse", "mkme", "mmkme"):
        assert independence_test(xs, xs.copy(), B=500, estimator=kind, seed=1).rejected


def test_forced_identity_permutation(rng):
    xs, ys = rng.normal(size=(6, 1)), rng.normal(size=(6, 1))
    res = independence_test(xs, ys, B=1, permutations=[np.arange(6)])
    assert res.p_value == 1.0


def test_independence_test_validation(rng):
    xs = rng.normal(size=(6, 1))
    with pytest.raises(ValueError):
        independence_test(xs, xs, B=0)
    with pytest.raises(ValueError):
        independence_test(xs, xs, estimator="mkme_linear")


def test_power_study_full_data_single_test(rng):
    xs = rng.normal(size=(30, 1))
    ys = xs + 0.1 * rng.normal(size=(30, 1))
    rows = power_study(xs, ys, [1.0], [0.05, 0.01], 1, 100, ["kme"], seed=2)
    assert [(r["alpha"], r["power"]) for r in rows] == [(0.05, 1.0), (0.01, 1.0)]
    with pytest.raises(ValueError):
        power_study(xs, ys, [0.01], [0.05], 1, 10, ["kme"])


def test_power_study_monotone_in_eta():
    r = np.random.default_rng(17)
    xs = r.normal(size=(200, 1))
    ys = xs + 1.0 * r.normal(size=(200, 1))
    rows = power_study(xs, ys, [0.1, 0.3], [0.05], 20, 100, ["kme"], seed=3)
    p = {row["eta"]: row["power"] for row in rows}
    assert p[0.3] >= p[0.1] - 0.1


def test_power_study_deterministic(rng):
    xs, ys = rng.normal(size=(40, 1)), rng.normal(size=(40, 1))
    a = power_study(xs, ys, [0.5], [0.05], 3, 50, ["mkme"], seed=5)
    assert a == power_study(xs, ys, [0.5], [0.05], 3, 50, ["mkme"], seed=5)
