"""Gaussian RBF kernel and its closed-form Gaussian-corruption expectations.

Bandwidths are passed as the squared bandwidth ``theta2``. All marginalized
kernels are evaluated in log space::

    log k~(x, y) = 1/2 * sum_j log(theta2 / s_j) - 1/2 * sum_j (x_j - y_j)^2 / s_j

with ``s = var_x + var_y + theta2`` per coordinate, which equals
``theta^d / |S|^(1/2) * exp(-1/2 (x-y)^T S^-1 (x-y))`` for diagonal ``S``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.spatial.distance import cdist, pdist

DIRAC = "dirac"
ISOTROPIC = "isotropic"
DIAGONAL = "diagonal"


def check_theta2(theta2: float) -> float:
    theta2 = float(theta2)
    if not (math.isfinite(theta2) and theta2 > 0.0):
        raise ValueError(f"squared bandwidth must be positive and finite, got {theta2}")
    return theta2


def as_points(xs, name: str = "xs") -> np.ndarray:
    """Coerce to a 2-D float array of finite rows; 1-D input is one column."""
    arr = np.asarray(xs, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array of points, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _as_point(x, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a single point")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")


@dataclass(frozen=True)
class CorruptionModel:
    """Gaussian corruption shared by every example.

    ``kind`` is one of ``"dirac"`` (no corruption), ``"isotropic"``
    (``sigma2 * I``) or ``"diagonal"`` (``diag(e)``). ``variances`` holds
    ``(sigma2,)`` for isotropic, the ``d`` entries of ``e`` for diagonal and
    is empty for Dirac.
    """

    kind: str = DIRAC
    variances: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in (DIRAC, ISOTROPIC, DIAGONAL):
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        v = tuple(float(e) for e in self.variances)
        object.__setattr__(self, "variances", v)
        if any(not math.isfinite(e) or e < 0.0 for e in v):
            raise ValueError(f"corruption variances must be finite and nonnegative, got {v}")
        if self.kind == DIRAC and v:
            raise ValueError("Dirac corruption carries no variances")
        if self.kind == ISOTROPIC and len(v) != 1:
            raise ValueError("isotropic corruption carries exactly one variance")
        if self.kind == DIAGONAL and not v:
            raise ValueError("diagonal corruption needs at least one variance")

    @classmethod
    def dirac(cls) -> "CorruptionModel":
        return cls(DIRAC, ())

    @classmethod
    def isotropic(cls, sigma2: float) -> "CorruptionModel":
        return cls(ISOTROPIC, (sigma2,))

    @classmethod
    def diagonal(cls, e) -> "CorruptionModel":
        return cls(DIAGONAL, tuple(np.ravel(np.asarray(e, dtype=float))))

    @property
    def is_dirac(self) -> bool:
        return self.kind == DIRAC

    def diag(self, d: int) -> np.ndarray:
        """Per-coordinate variances for data of dimension ``d``."""
        if self.kind == DIRAC:
            return np.zeros(d)
        if self.kind == ISOTROPIC:
            return np.full(d, self.variances[0])
        if len(self.variances) != d:
            raise ValueError(f"diagonal corruption has {len(self.variances)} entries, data has d={d}")
        return np.asarray(self.variances)

    def trace(self, d: int) -> float:
        return float(np.sum(self.diag(d)))

    def __str__(self) -> str:
        if self.kind == DIRAC:
            return "dirac"
        if self.kind == ISOTROPIC:
            return f"isotropic({self.variances[0]:.6g})"
        return "diagonal(" + ",".join(f"{e:.6g}" for e in self.variances) + ")"


DIRAC_MODEL = CorruptionModel.dirac()


def average_corruption(a: CorruptionModel, b: CorruptionModel, d: int) -> CorruptionModel:
    """Elementwise mean of two corruption models, keeping the simplest kind."""
    if a.is_dirac and b.is_dirac:
        return DIRAC_MODEL
    if a.kind in (DIRAC, ISOTROPIC) and b.kind in (DIRAC, ISOTROPIC):
        return CorruptionModel.isotropic(0.5 * (a.diag(1)[0] + b.diag(1)[0]))
    return CorruptionModel.diagonal(0.5 * (a.diag(d) + b.diag(d)))


def sq_dists(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, computed from exact differences."""
    _check_same_dim(xs, ys)
    return cdist(xs, ys, "sqeuclidean")


def rbf_from_sq_dists(d2: np.ndarray, theta2: float) -> np.ndarray:
    return np.exp(-0.5 * (d2 / theta2))


def rbf(x, y, theta2: float) -> float:
    x, y = _as_point(x, "x"), _as_point(y, "y")
    _check_same_dim(x, y)
    theta2 = check_theta2(theta2)
    return float(rbf_from_sq_dists(np.sum((x - y) ** 2), theta2))


def k_prime(x, y, theta2: float) -> float:
    """``exp(-|x-y|^2 / (2 theta2)) * |x-y|^2``."""
    x, y = _as_point(x, "x"), _as_point(y, "y")
    _check_same_dim(x, y)
    theta2 = check_theta2(theta2)
    d2 = np.sum((x - y) ** 2)
    return float(rbf_from_sq_dists(d2, theta2) * d2)


def gram(xs, ys, theta2: float, kind: str = "rbf") -> np.ndarray:
    """RBF (``kind="rbf"``) or k' (``kind="kprime"``) Gram matrix."""
    xs, ys = as_points(xs, "xs"), as_points(ys, "ys")
    theta2 = check_theta2(theta2)
    d2 = sq_dists(xs, ys)
    k = rbf_from_sq_dists(d2, theta2)
    if kind == "rbf":
        return k
    if kind == "kprime":
        return k * d2
    raise ValueError(f"unknown Gram kind {kind!r}")


def marginal_gram(xs, cov_x: CorruptionModel, ys, cov_y: CorruptionModel, theta2: float) -> np.ndarray:
    """Gram matrix of the doubly marginalized kernel.

    With ``cov_y`` Dirac this is the one-sided expectation (the ``L`` matrix),
    with ``xs = ys`` and equal covariances it is ``Q``.
    """
    xs, ys = as_points(xs, "xs"), as_points(ys, "ys")
    _check_same_dim(xs, ys)
    theta2 = check_theta2(theta2)
    d = xs.shape[1]
    s = cov_x.diag(d) + cov_y.diag(d) + theta2
    log_pref = 0.5 * float(np.sum(np.log(theta2 / s)))
    if np.all(s == s[0]):
        quad = sq_dists(xs, ys) / s[0]
    else:
        scale = 1.0 / np.sqrt(s)
        quad = sq_dists(xs * scale, ys * scale)
    return np.exp(log_pref - 0.5 * quad)


def marginal_gram_rows(xs, var_x, ys, var_y, theta2: float) -> np.ndarray:
    """Marginalized Gram where every row/column carries its own diagonal variances.

    ``var_x`` is ``(n, d)`` (or broadcastable), ``var_y`` is ``(m, d)``.
    """
    xs, ys = as_points(xs, "xs"), as_points(ys, "ys")
    _check_same_dim(xs, ys)
    theta2 = check_theta2(theta2)
    vx = np.broadcast_to(np.asarray(var_x, dtype=float), xs.shape)
    vy = np.broadcast_to(np.asarray(var_y, dtype=float), ys.shape)
    s = vx[:, None, :] + vy[None, :, :] + theta2
    diff = xs[:, None, :] - ys[None, :, :]
    logk = 0.5 * np.sum(np.log(theta2 / s), axis=-1) - 0.5 * np.sum(diff * diff / s, axis=-1)
    return np.exp(logk)


def marginal_double(x, cov_x: CorruptionModel, y, cov_y: CorruptionModel, theta2: float) -> float:
    x, y = _as_point(x, "x"), _as_point(y, "y")
    _check_same_dim(x, y)
    return float(marginal_gram(x[None, :], cov_x, y[None, :], cov_y, theta2)[0, 0])


def marginal_single(x_center, cov: CorruptionModel, y, theta2: float) -> float:
    """Expectation of ``rbf(x~, y)`` over ``x~ ~ N(x_center, cov)``."""
    return marginal_double(x_center, cov, y, DIRAC_MODEL, theta2)


def marginal_dense(xs, cov_x: np.ndarray, ys, cov_y: np.ndarray, theta2: float) -> np.ndarray:
    """Marginalized Gram for dense SPD covariances shared by each side.

    Used by the synthetic loss oracle, where mixture components carry full
    covariance matrices.
    """
    xs, ys = as_points(xs, "xs"), as_points(ys, "ys")
    _check_same_dim(xs, ys)
    theta2 = check_theta2(theta2)
    d = xs.shape[1]
    m = np.asarray(cov_x, dtype=float) + np.asarray(cov_y, dtype=float) + theta2 * np.eye(d)
    try:
        c = cholesky(m, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance sum is not symmetric positive definite") from exc
    logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
    # whiten with the Cholesky factor: |L^-1 (x - y)|^2 = (x-y)^T M^-1 (x-y)
    wx = solve_triangular(c, xs.T, lower=True).T
    wy = solve_triangular(c, ys.T, lower=True).T
    quad = sq_dists(wx, wy)
    return np.exp(0.5 * d * math.log(theta2) - 0.5 * logdet - 0.5 * quad)


def median_heuristic(xs) -> float:
    """Lower median of the squared distances over distinct pairs ``i < j``."""
    xs = as_points(xs)
    if xs.shape[0] < 2:
        raise ValueError("median heuristic needs at least two points")
    d2 = np.sort(pdist(xs, "sqeuclidean"))
    theta2 = float(d2[(d2.size - 1) // 2])
    if theta2 <= 0.0:
        raise ValueError("median heuristic gives zero bandwidth (too many coincident points)")
    return theta2


__all__ = [
    "CorruptionModel",
    "DIRAC_MODEL",
    "average_corruption",
    "as_points",
    "check_theta2",
    "gram",
    "k_prime",
    "marginal_dense",
    "marginal_double",
    "marginal_gram",
    "marginal_gram_rows",
    "marginal_single",
    "median_heuristic",
    "rbf",
    "sq_dists",
]
