"""Unbiased (marginalized) MMD and the permutation two-sample test."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .estimators import KME, MKME, MMKME, EstimatorParams, check_kind, pool_params, select_params
from .kernels import CorruptionModel, as_points, check_theta2, gram, marginal_gram, median_heuristic
from .rng import child_seed, substream


@dataclass
class TestResult:
    statistic: float
    null_stats: np.ndarray
    p_value: float
    rejected: bool
    alpha: float
    info: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class


def permutation_pvalue(observed: float, null) -> float:
    """``(1 + #{null >= observed}) / (B + 1)``."""
    null = np.asarray(null, dtype=float)
    return float((1 + np.count_nonzero(null >= observed)) / (null.size + 1))


def make_result(observed: float, null, alpha: float, **info) -> TestResult:
    p = permutation_pvalue(observed, null)
    return TestResult(float(observed), np.asarray(null, dtype=float), p, p < alpha, alpha, info)


def _check_sizes(s1: np.ndarray, s2: np.ndarray) -> None:
    if s1.shape[0] < 2 or s2.shape[0] < 2:
        raise ValueError(f"MMD needs at least 2 points per sample, got {s1.shape[0]} and {s2.shape[0]}")
    if s1.shape[1] != s2.shape[1]:
        raise ValueError(f"dimension mismatch: {s1.shape[1]} vs {s2.shape[1]}")


def _offdiag_mean(G: np.ndarray) -> float:
    m = G.shape[0]
    return (G.sum() - np.trace(G)) / (m * (m - 1))


def mmd2_from_grams(G11, G22, G12, b1=None, b2=None) -> float:
    """Three-term MMD^2 with within-sample diagonals excluded.

    With weights, the within-sample sums are ``sum_{i != j} b_i b_j G_ij``
    rescaled by ``m / (m - 1)``; uniform weights ``1/m`` recover the usual
    U-statistic.
    """
    if b1 is None and b2 is None:
        return float(_offdiag_mean(G11) + _offdiag_mean(G22) - 2.0 * G12.mean())
    m, n = G11.shape[0], G22.shape[0]
    b1 = np.full(m, 1.0 / m) if b1 is None else b1
    b2 = np.full(n, 1.0 / n) if b2 is None else b2
    w11 = (b1 @ G11 @ b1 - np.sum(b1 * b1 * np.diag(G11))) * m / (m - 1)
    w22 = (b2 @ G22 @ b2 - np.sum(b2 * b2 * np.diag(G22))) * n / (n - 1)
    return float(w11 + w22 - 2.0 * (b1 @ G12 @ b2))


def mmd2_unbiased(s1, s2, theta2: float) -> float:
    s1, s2 = as_points(s1, "s1"), as_points(s2, "s2")
    _check_sizes(s1, s2)
    theta2 = check_theta2(theta2)
    return mmd2_from_grams(gram(s1, s1, theta2), gram(s2, s2, theta2), gram(s1, s2, theta2))


def mmd2_marginalized(s1, cov1: CorruptionModel, s2, cov2: CorruptionModel, theta2: float) -> float:
    s1, s2 = as_points(s1, "s1"), as_points(s2, "s2")
    _check_sizes(s1, s2)
    return mmd2_from_grams(
        marginal_gram(s1, cov1, s1, cov1, theta2),
        marginal_gram(s2, cov2, s2, cov2, theta2),
        marginal_gram(s1, cov1, s2, cov2, theta2),
    )


class _PooledStatistic:
    """MMD^2 of any split of the pooled sample under fixed estimator parameters."""

    def __init__(self, pooled: np.ndarray, params: EstimatorParams):
        self.pooled = pooled
        self.params = params
        cov = params.feature_corruption
        if cov.is_dirac:
            self.G = gram(pooled, pooled, params.theta2)
        else:
            self.G = marginal_gram(pooled, cov, pooled, cov, params.theta2)
        self.uniform = params.kind in (KME, MKME, MMKME)
        self.K = self.G if cov.is_dirac else gram(pooled, pooled, params.theta2)

    def __call__(self, idx1: np.ndarray, idx2: np.ndarray) -> float:
        G = self.G
        G11, G22, G12 = G[np.ix_(idx1, idx1)], G[np.ix_(idx2, idx2)], G[np.ix_(idx1, idx2)]
        if self.uniform:
            return mmd2_from_grams(G11, G22, G12)
        b1 = self.params.weights(self.pooled[idx1], self.K[np.ix_(idx1, idx1)])
        b2 = self.params.weights(self.pooled[idx2], self.K[np.ix_(idx2, idx2)])
        return mmd2_from_grams(G11, G22, G12, b1, b2)


def two_sample_test(
    s1,
    s2,
    estimator: str = KME,
    B: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
    theta2: float | None = None,
    permutations: Iterable[Sequence[int]] | None = None,
) -> TestResult:
    """Permutation two-sample test on the (marginalized) MMD^2.

    The bandwidth defaults to the median heuristic on the pooled sample.
    Estimator parameters are selected on each sample once, averaged, and the
    pooled parameters define the statistic for the observed split and for
    every permuted split alike. Permutation ``b`` draws from its own stream
    ``(seed, "perm", b)``; ``permutations`` overrides them with explicit
    index orders of the pooled sample.
    """
    s1, s2 = as_points(s1, "s1"), as_points(s2, "s2")
    _check_sizes(s1, s2)
    if B < 1:
        raise ValueError("need at least one permutation")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    kind = check_kind(estimator)
    m, n = s1.shape[0], s2.shape[0]
    pooled = np.vstack([s1, s2])
    theta2 = median_heuristic(pooled) if theta2 is None else check_theta2(theta2)
    d = pooled.shape[1]
    params = pool_params(select_params(kind, s1, theta2), select_params(kind, s2, theta2), d)
    stat = _PooledStatistic(pooled, params)

    observed = stat(np.arange(m), np.arange(m, m + n))
    if permutations is None:
        permutations = (substream(seed, "perm", b).permutation(m + n) for b in range(B))
    null = []
    for perm in permutations:
        perm = np.asarray(perm)
        null.append(stat(perm[:m], perm[m:]))
    return make_result(observed, null, alpha, theta2=theta2, params=params)


def power_curve(
    gen1: Callable[[int, int, np.random.Generator], np.ndarray],
    gen2: Callable[[int, int, np.random.Generator], np.ndarray],
    dims: Sequence[int],
    n: int,
    trials: int,
    estimators: Sequence[str],
    seed: int = 0,
    B: int = 1000,
    alpha: float = 0.05,
) -> list[dict]:
    """Rejection rate per (dimension, estimator) over independent trials.

    ``gen(d, n, rng)`` returns an ``(n, d)`` sample. Trial ``t`` at dimension
    ``d`` draws both samples from streams keyed by ``(seed, d, t)``, so every
    estimator sees the same data.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    kinds = [check_kind(e) for e in estimators]
    rows = []
    for d in dims:
        rejections = {k: 0 for k in kinds}
        for t in range(trials):
            a = gen1(d, n, substream(seed, "sample-a", d, t))
            b = gen2(d, n, substream(seed, "sample-b", d, t))
            perm_seed = child_seed(seed, "perm", d, t)
            for k in kinds:
                res = two_sample_test(a, b, k, B=B, alpha=alpha, seed=perm_seed)
                rejections[k] += int(res.rejected)
        for k in kinds:
            rows.append({"d": d, "estimator": k, "power": rejections[k] / trials, "trials": trials})
    return rows


__all__ = [
    "TestResult",
    "make_result",
    "mmd2_from_grams",
    "mmd2_marginalized",
    "mmd2_unbiased",
    "permutation_pvalue",
    "power_curve",
    "two_sample_test",
]
