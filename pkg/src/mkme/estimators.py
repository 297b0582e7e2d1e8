"""Kernel mean estimators.

Every estimator is a :class:`MeanEstimate`: the RKHS element
``sum_i beta_i * E[k(x~_i, .)]`` with ``x~_i ~ N(x_i, corruption)``. The
empirical estimator uses uniform weights and no corruption; the marginalized
estimators keep uniform weights and carry a LOOCV-selected corruption; the
shrinkage baselines and the linear approximations reweight uncorrupted
features.

Uniform weights are ``1/n`` each (the vector written ``1_n`` below).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import LinAlgError, solve

from .kernels import (
    DIRAC_MODEL,
    CorruptionModel,
    as_points,
    average_corruption,
    check_theta2,
    gram,
    marginal_gram,
    sq_dists,
)
from .selection import loocv_objective, select_diagonal, select_isotropic

KME = "kme"
SKMSE = "skmse"
FKMSE = "fkmse"
MKME = "mkme"
MMKME = "mmkme"
MKME_LINEAR = "mkme_linear"
MMKME_LINEAR = "mmkme_linear"
KINDS = (KME, SKMSE, FKMSE, MKME, MMKME, MKME_LINEAR, MMKME_LINEAR)
# the five estimators compared throughout the experiments
BASE_KINDS = (KME, SKMSE, FKMSE, MKME, MMKME)

DEFAULT_LAMBDAS = tuple(np.logspace(-6, 2, 20))
RIDGE = 1e-10


@dataclass(frozen=True, eq=False)
class MeanEstimate:
    points: np.ndarray
    beta: np.ndarray
    corruption: CorruptionModel = field(default=DIRAC_MODEL)
    theta2: float = 1.0

    def __post_init__(self):
        pts = as_points(self.points, "points").copy()
        beta = np.asarray(self.beta, dtype=float).ravel().copy()
        if beta.shape[0] != pts.shape[0]:
            raise ValueError(f"beta has {beta.shape[0]} entries for {pts.shape[0]} points")
        if not np.all(np.isfinite(beta)):
            raise ValueError("beta contains non-finite entries")
        pts.flags.writeable = False
        beta.flags.writeable = False
        self.corruption.diag(pts.shape[1])  # dimension check
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "theta2", check_theta2(self.theta2))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __call__(self, ys) -> np.ndarray:
        return evaluate(self, ys)


def uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def fit_kme(xs, theta2: float) -> MeanEstimate:
    xs = as_points(xs)
    return MeanEstimate(xs, uniform(xs.shape[0]), DIRAC_MODEL, theta2)


def fit_marginalized(xs, theta2: float, family: str = "isotropic", cov: CorruptionModel | None = None) -> MeanEstimate:
    """Exact MKME (``family="isotropic"``) or MMKME (``"diagonal"``).

    The corruption is chosen by LOOCV unless ``cov`` pins it.
    """
    xs = as_points(xs)
    if cov is None:
        if xs.shape[0] < 3:
            raise ValueError("covariance selection needs at least 3 points")
        if family == "isotropic":
            cov = select_isotropic(xs, theta2).cov
        elif family == "diagonal":
            cov = select_diagonal(xs, theta2).cov
        else:
            raise ValueError(f"unknown corruption family {family!r}")
    return MeanEstimate(xs, uniform(xs.shape[0]), cov, theta2)


def _ridge_solve(K: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    n = K.shape[0]
    try:
        out = solve(K + RIDGE * n * np.eye(n), rhs, assume_a="sym")
    except LinAlgError as exc:
        raise ValueError("Gram matrix is singular beyond the ridge tolerance") from exc
    if not np.all(np.isfinite(out)):
        raise ValueError("Gram matrix is singular beyond the ridge tolerance")
    return out


def linear_weights(xs, theta2: float, e, form: str = "proof") -> np.ndarray:
    """Weights of the second-order (linear-form) marginalized estimator.

    ``e`` are the per-coordinate corruption variances and ``s = sum(e)``.

    ``form="proof"``:  ``(2 theta2 + s)/(2 theta2) 1_n - s/(2 theta2^2) K^-1 K' 1_n``
    ``form="statement"``: same with leading coefficient ``(theta2 + s)/(2 theta2)``
    ``form="taylor"``: the expansion ``E k(x~, .) ~ k + 1/2 sum_j e_j d^2k/dx_j^2``
    projected onto the span, ``(1 - s/(2 theta2)) 1_n + 1/(2 theta2^2) K^-1 K'_e 1_n``
    with ``K'_e(x, y) = k(x, y) * sum_j e_j (x_j - y_j)^2``.
    """
    xs = as_points(xs)
    theta2 = check_theta2(theta2)
    n, d = xs.shape
    e = np.broadcast_to(np.asarray(e, dtype=float), (d,))
    if np.any(e < 0) or not np.all(np.isfinite(e)):
        raise ValueError("corruption variances must be finite and nonnegative")
    s = float(np.sum(e))
    u = uniform(n)
    if form == "statement":
        lead = (theta2 + s) / (2.0 * theta2)
    elif form == "proof":
        lead = (2.0 * theta2 + s) / (2.0 * theta2)
    elif form == "taylor":
        lead = 1.0 - s / (2.0 * theta2)
    else:
        raise ValueError(f"unknown linear form {form!r}")
    if s == 0.0:
        return lead * u
    K = gram(xs, xs, theta2)
    if form == "taylor":
        Kp = K * sq_dists(xs * np.sqrt(e), xs * np.sqrt(e))
        return lead * u + _ridge_solve(K, Kp @ u) / (2.0 * theta2**2)
    Kp = K * sq_dists(xs, xs)
    return lead * u - (s / (2.0 * theta2**2)) * _ridge_solve(K, Kp @ u)


def fit_linear_mkme(xs, theta2: float, sigma2: float, form: str = "proof") -> MeanEstimate:
    xs = as_points(xs)
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    beta = linear_weights(xs, theta2, np.full(xs.shape[1], float(sigma2)), form)
    return MeanEstimate(xs, beta, DIRAC_MODEL, theta2)


def fit_linear_mmkme(xs, theta2: float, e, form: str = "proof") -> MeanEstimate:
    xs = as_points(xs)
    e = np.asarray(e, dtype=float).ravel()
    if e.shape[0] != xs.shape[1]:
        raise ValueError(f"need {xs.shape[1]} diagonal variances, got {e.shape[0]}")
    return MeanEstimate(xs, linear_weights(xs, theta2, e, form), DIRAC_MODEL, theta2)


# --- shrinkage baselines -----------------------------------------------------


def shrinkage_weights(K: np.ndarray, lam: float, kind: str) -> np.ndarray:
    """S-KMSE: ``1_n / (1 + lam)``; F-KMSE: solve ``(K + n lam I) b = K 1_n``."""
    n = K.shape[0]
    u = uniform(n)
    if kind == SKMSE:
        return u / (1.0 + lam)
    if kind == FKMSE:
        return _ridge_solve(K + n * lam * np.eye(n), K @ u)
    raise ValueError(f"not a shrinkage estimator: {kind!r}")


def shrinkage_loocv(K: np.ndarray, lambdas, kind: str) -> np.ndarray:
    """LOOCV score of the shrinkage estimator for every ``lam`` in ``lambdas``.

    ``K`` is the Gram matrix of the (possibly product) kernel; its diagonal
    supplies ``k(x_i, x_i)``.
    """
    K = np.asarray(K, dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    n = K.shape[0]
    if n < 3:
        raise ValueError("shrinkage LOOCV needs at least 3 points")
    m = n - 1
    scores = np.zeros(lambdas.shape)
    if kind == SKMSE:
        c = 1.0 / (1.0 + lambdas)
        total = K.sum()
        row = K.sum(axis=1)
        diag = np.diag(K)
        cross = (row - diag) / m
        within = (total - 2.0 * row + diag) / m**2
        for i in range(n):
            scores += diag[i] - 2.0 * c * cross[i] + c**2 * within[i]
        return scores / n
    if kind != FKMSE:
        raise ValueError(f"not a shrinkage estimator: {kind!r}")
    idx = np.arange(n)
    for i in range(n):
        keep = idx != i
        Ki = K[np.ix_(keep, keep)]
        evals, evecs = np.linalg.eigh(Ki)
        evals = np.clip(evals, 0.0, None)
        a = evecs.T @ np.full(m, 1.0 / m)
        b = evecs.T @ K[keep, i]
        # f_k(lam) = ev_k / (ev_k + m lam): beta = V f V^T 1_m
        f = evals[None, :] / (evals[None, :] + m * lambdas[:, None])
        scores += K[i, i] - 2.0 * (f * a * b).sum(axis=1) + (f**2 * evals * a**2).sum(axis=1)
    return scores / n


def select_lambda(K: np.ndarray, kind: str, lambdas=DEFAULT_LAMBDAS) -> tuple[float, float]:
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.size == 0 or np.any(~np.isfinite(lambdas)) or np.any(lambdas <= 0):
        raise ValueError("lambda grid must be nonempty, finite and strictly positive")
    scores = shrinkage_loocv(K, lambdas, kind)
    k = int(np.argmin(scores))
    return float(lambdas[k]), float(scores[k])


def fit_shrinkage(xs, theta2: float, kind: str, lambdas=DEFAULT_LAMBDAS) -> MeanEstimate:
    xs = as_points(xs)
    if xs.shape[0] < 3:
        raise ValueError("shrinkage estimators need at least 3 points")
    K = gram(xs, xs, theta2)
    lam, _ = select_lambda(K, kind, lambdas)
    return MeanEstimate(xs, shrinkage_weights(K, lam, kind), DIRAC_MODEL, theta2)


# --- evaluation and geometry -------------------------------------------------


def evaluate(est: MeanEstimate, ys) -> np.ndarray:
    """``g(y) = sum_i beta_i E k(x~_i, y)`` at every row of ``ys``."""
    ys = as_points(ys, "ys")
    L = marginal_gram(est.points, est.corruption, ys, DIRAC_MODEL, est.theta2)
    return est.beta @ L


def evaluate_at(est: MeanEstimate, y) -> float:
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return float(evaluate(est, y[None, :])[0])


def inner_product(a: MeanEstimate, b: MeanEstimate) -> float:
    if a.theta2 != b.theta2:
        raise ValueError(f"bandwidth mismatch: {a.theta2} vs {b.theta2}")
    if a.d != b.d:
        raise ValueError(f"dimension mismatch: {a.d} vs {b.d}")
    Q = marginal_gram(a.points, a.corruption, b.points, b.corruption, a.theta2)
    return float(a.beta @ Q @ b.beta)


def squared_distance(a: MeanEstimate, b: MeanEstimate) -> float:
    """``|a - b|^2`` in the RKHS."""
    return inner_product(a, a) - 2.0 * inner_product(a, b) + inner_product(b, b)


# --- fitted hyperparameters, reusable on new data ----------------------------


@dataclass(frozen=True)
class EstimatorParams:
    """Hyperparameters chosen for one estimator kind.

    ``noise`` is the selected corruption. MKME/MMKME embed corrupted
    features with it; the linear variants use it only to form their weights.
    """

    kind: str
    theta2: float
    noise: CorruptionModel = DIRAC_MODEL
    lam: float | None = None

    @property
    def feature_corruption(self) -> CorruptionModel:
        return self.noise if self.kind in (MKME, MMKME) else DIRAC_MODEL

    def weights(self, xs, K: np.ndarray | None = None) -> np.ndarray:
        xs = as_points(xs)
        n, d = xs.shape
        if self.kind in (KME, MKME, MMKME):
            return uniform(n)
        if self.kind in (SKMSE, FKMSE):
            if K is None:
                K = gram(xs, xs, self.theta2)
            return shrinkage_weights(K, self.lam, self.kind)
        if self.kind in (MKME_LINEAR, MMKME_LINEAR):
            return linear_weights(xs, self.theta2, self.noise.diag(d))
        raise ValueError(f"unknown estimator {self.kind!r}")

    def apply(self, xs) -> MeanEstimate:
        xs = as_points(xs)
        return MeanEstimate(xs, self.weights(xs), self.feature_corruption, self.theta2)

    def with_theta2(self, theta2: float) -> "EstimatorParams":
        return replace(self, theta2=check_theta2(theta2))


def check_kind(kind: str) -> str:
    kind = kind.strip().lower().replace("-", "_")
    if kind not in KINDS:
        raise ValueError(f"unknown estimator {kind!r}; choose from {', '.join(KINDS)}")
    return kind


def select_params(kind: str, xs, theta2: float, lambdas=DEFAULT_LAMBDAS) -> EstimatorParams:
    kind = check_kind(kind)
    xs = as_points(xs)
    theta2 = check_theta2(theta2)
    if kind == KME:
        return EstimatorParams(kind, theta2)
    if kind in (SKMSE, FKMSE):
        lam, _ = select_lambda(gram(xs, xs, theta2), kind, lambdas)
        return EstimatorParams(kind, theta2, lam=lam)
    if kind in (MKME, MKME_LINEAR):
        return EstimatorParams(kind, theta2, noise=select_isotropic(xs, theta2).cov)
    return EstimatorParams(kind, theta2, noise=select_diagonal(xs, theta2).cov)


def pool_params(a: EstimatorParams, b: EstimatorParams, d: int) -> EstimatorParams:
    """Average two fitted parameter sets (geometric mean for ``lam``)."""
    if a.kind != b.kind or a.theta2 != b.theta2:
        raise ValueError("can only pool parameters of the same estimator and bandwidth")
    lam = None if a.lam is None else math.sqrt(a.lam * b.lam)
    return EstimatorParams(a.kind, a.theta2, average_corruption(a.noise, b.noise, d), lam)


def fit(kind: str, xs, theta2: float, lambdas=DEFAULT_LAMBDAS) -> MeanEstimate:
    return select_params(kind, xs, theta2, lambdas).apply(xs)


__all__ = [
    "BASE_KINDS",
    "EstimatorParams",
    "KINDS",
    "MeanEstimate",
    "evaluate",
    "evaluate_at",
    "fit",
    "fit_kme",
    "fit_linear_mkme",
    "fit_linear_mmkme",
    "fit_marginalized",
    "fit_shrinkage",
    "inner_product",
    "linear_weights",
    "loocv_objective",
    "pool_params",
    "select_lambda",
    "select_params",
    "shrinkage_loocv",
    "shrinkage_weights",
    "squared_distance",
]
