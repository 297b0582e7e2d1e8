"""HSIC (plain and marginalized) and the permutation independence test."""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .estimators import BASE_KINDS, FKMSE, KME, SKMSE, check_kind, select_lambda, select_params, shrinkage_weights
from .kernels import DIRAC_MODEL, CorruptionModel, as_points, check_theta2, gram, marginal_gram, median_heuristic
from .mmd import TestResult, make_result
from .rng import child_seed, substream


def _paired(xs, ys) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = as_points(xs, "xs"), as_points(ys, "ys")
    if xs.shape[0] != ys.shape[0]:
        raise ValueError(f"paired sample needs equal row counts, got {xs.shape[0]} and {ys.shape[0]}")
    if xs.shape[0] < 2:
        raise ValueError("paired sample needs at least 2 rows")
    return xs, ys


def center(K: np.ndarray) -> np.ndarray:
    """``H K H`` with ``H = I - 11^T / n``."""
    return K - K.mean(axis=0)[None, :] - K.mean(axis=1)[:, None] + K.mean()


def hsic_from_grams(K: np.ndarray, Z: np.ndarray) -> float:
    n = K.shape[0]
    return float(np.sum(center(K) * center(Z)) / n**2)


def hsic_statistic(
    xs,
    ys,
    theta2_x: float,
    theta2_y: float,
    cov_x: CorruptionModel = DIRAC_MODEL,
    cov_y: CorruptionModel = DIRAC_MODEL,
) -> float:
    """``tr(H K H . H Z H) / n^2`` with (marginalized) Gram matrices."""
    xs, ys = _paired(xs, ys)
    K = marginal_gram(xs, cov_x, xs, cov_x, theta2_x)
    Z = marginal_gram(ys, cov_y, ys, cov_y, theta2_y)
    return hsic_from_grams(K, Z)


def weighted_hsic(K: np.ndarray, Z: np.ndarray, b_joint: np.ndarray, b_x: np.ndarray, b_y: np.ndarray) -> float:
    """``|mu_XY - mu_X (x) mu_Y|^2`` for weighted joint and marginal embeddings.

    With all weights ``1/n`` this equals :func:`hsic_from_grams`.
    """
    kx = K @ b_x
    zy = Z @ b_y
    joint = b_joint @ (K * Z) @ b_joint
    cross = np.sum(b_joint * kx * zy)
    return float(joint - 2.0 * cross + (b_x @ kx) * (b_y @ zy))


def independence_test(
    xs,
    ys,
    B: int = 1000,
    alpha: float = 0.05,
    estimator: str = KME,
    seed: int = 0,
    theta2_x: float | None = None,
    theta2_y: float | None = None,
    permutations: Iterable[Sequence[int]] | None = None,
) -> TestResult:
    """Permutation test of independence; the null permutes the rows of ``ys``.

    Bandwidths (median heuristic by default), corruptions and shrinkage
    parameters are chosen once on the original pairs and held fixed.
    """
    xs, ys = _paired(xs, ys)
    if B < 1:
        raise ValueError("need at least one permutation")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    kind = check_kind(estimator)
    if kind not in BASE_KINDS:
        raise ValueError(f"independence test supports {', '.join(BASE_KINDS)}, got {kind!r}")
    n = xs.shape[0]
    tx = median_heuristic(xs) if theta2_x is None else check_theta2(theta2_x)
    ty = median_heuristic(ys) if theta2_y is None else check_theta2(theta2_y)
    if permutations is None:
        permutations = (substream(seed, "perm", b).permutation(n) for b in range(B))

    info = {"theta2_x": tx, "theta2_y": ty}
    if kind in (SKMSE, FKMSE):
        K, Z = gram(xs, xs, tx), gram(ys, ys, ty)
        lam_x, _ = select_lambda(K, kind)
        lam_y, _ = select_lambda(Z, kind)
        lam_xy, _ = select_lambda(K * Z, kind)
        b_x = shrinkage_weights(K, lam_x, kind)
        b_y = shrinkage_weights(Z, lam_y, kind)

        def stat(p):
            Zp = Z[np.ix_(p, p)]
            return weighted_hsic(K, Zp, shrinkage_weights(K * Zp, lam_xy, kind), b_x, b_y[p])

        info.update(lam_x=lam_x, lam_y=lam_y, lam_xy=lam_xy)
    else:
        cov_x = select_params(kind, xs, tx).feature_corruption
        cov_y = select_params(kind, ys, ty).feature_corruption
        Kc = center(marginal_gram(xs, cov_x, xs, cov_x, tx))
        Zc = center(marginal_gram(ys, cov_y, ys, cov_y, ty))

        def stat(p):
            # permuting rows and columns commutes with double centering
            return float(np.sum(Kc * Zc[np.ix_(p, p)]) / n**2)

        info.update(cov_x=cov_x, cov_y=cov_y)

    observed = stat(np.arange(n))
    null = [stat(np.asarray(p)) for p in permutations]
    return make_result(observed, null, alpha, **info)


def power_study(
    xs,
    ys,
    etas: Sequence[float],
    alphas: Sequence[float],
    repetitions: int,
    B: int,
    estimators: Sequence[str],
    seed: int = 0,
) -> list[dict]:
    """Rejection rate per (alpha, eta, estimator) on subsamples without replacement.

    Each repetition draws ``ceil(eta * n)`` rows; one test per estimator
    yields decisions at every ``alpha`` from the same p-value.
    """
    xs, ys = _paired(xs, ys)
    if repetitions < 1:
        raise ValueError("need at least one repetition")
    kinds = [check_kind(e) for e in estimators]
    n = xs.shape[0]
    sizes = []
    for eta in etas:
        if not 0.0 < eta <= 1.0:
            raise ValueError(f"subsample fraction must be in (0, 1], got {eta}")
        size = math.ceil(eta * n)
        if size < 2:
            raise ValueError(f"subsample fraction {eta} leaves fewer than 2 rows")
        sizes.append(size)
    counts = {(a, e, k): 0 for a in alphas for e in etas for k in kinds}
    for ei, (eta, size) in enumerate(zip(etas, sizes)):
        for r in range(repetitions):
            idx = np.sort(substream(seed, "subsample", ei, r).choice(n, size=size, replace=False))
            perm_seed = child_seed(seed, "perm", ei, r)
            for k in kinds:
                res = independence_test(xs[idx], ys[idx], B=B, alpha=max(alphas), estimator=k, seed=perm_seed)
                for a in alphas:
                    counts[(a, eta, k)] += int(res.p_value < a)
    return [
        {"alpha": a, "eta": e, "estimator": k, "power": counts[(a, e, k)] / repetitions, "repetitions": repetitions}
        for a in alphas
        for e in etas
        for k in kinds
    ]
