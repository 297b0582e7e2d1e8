"""Leave-one-out selection of the corruption covariance.

The score for a shared corruption ``cov`` is the average squared RKHS
distance between each held-out feature ``k(x_i, .)`` and the corrupted mean
of the other ``n - 1`` points. Expanding the norm gives an ``O(n^2)`` closed
form in the one-sided matrix ``L`` and the two-sided matrix ``Q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import (
    DIRAC_MODEL,
    CorruptionModel,
    as_points,
    check_theta2,
    marginal_gram,
)
from .optim import NonFiniteObjective, ScalarBracket, minimize_scalar, nelder_mead

LOG_FLOOR = math.log(1e-12)


@dataclass(frozen=True)
class LoocvScore:
    value: float
    cov: CorruptionModel
    evaluations: int


def loocv_objective(xs, theta2: float, cov: CorruptionModel) -> float:
    xs = as_points(xs)
    theta2 = check_theta2(theta2)
    n = xs.shape[0]
    if n < 3:
        raise ValueError(f"LOOCV needs at least 3 points, got {n}")
    L = marginal_gram(xs, cov, xs, DIRAC_MODEL, theta2)
    Q = L if cov.is_dirac else marginal_gram(xs, cov, xs, cov, theta2)
    col = L.sum(axis=0) - np.diag(L)
    row = Q.sum(axis=1)
    total = Q.sum()
    per_point = 1.0 - 2.0 / (n - 1) * col + (total - 2.0 * row + np.diag(Q)) / (n - 1) ** 2
    return float(per_point.mean())


def select_isotropic(
    xs,
    theta2: float,
    bounds: tuple[float, float] | None = None,
    scan_points: int = 11,
    max_evals: int = 200,
) -> LoocvScore:
    """Pick ``sigma2`` in ``bounds`` (default ``[0, 10 theta2]``) minimizing LOOCV.

    A coarse uniform scan localizes the basin, then Brent's method refines it
    inside the neighbouring grid cells. Ties resolve to the smaller variance.
    """
    xs = as_points(xs)
    theta2 = check_theta2(theta2)
    lo, hi = bounds if bounds is not None else (0.0, 10.0 * theta2)
    if lo < 0 or not lo < hi:
        raise ValueError(f"isotropic search needs 0 <= lo < hi, got ({lo}, {hi})")

    evals = 0

    def objective(s2: float) -> float:
        nonlocal evals
        evals += 1
        value = loocv_objective(xs, theta2, CorruptionModel.isotropic(s2))
        if not math.isfinite(value):
            raise NonFiniteObjective(s2, value)
        return value

    grid = np.linspace(lo, hi, scan_points)
    values = [objective(float(g)) for g in grid]
    k = int(np.argmin(values))  # first index on ties, i.e. the smallest sigma2
    best_x, best_f = float(grid[k]), values[k]

    a = float(grid[max(k - 1, 0)])
    b = float(grid[min(k + 1, scan_points - 1)])
    res = minimize_scalar(
        objective,
        ScalarBracket(a, b, tol=1e-6 * (hi - lo), max_evals=max(3, max_evals - scan_points)),
    )
    if res.fun < best_f or (res.fun == best_f and res.x < best_x):
        best_x, best_f = res.x, res.fun
    return LoocvScore(best_f, CorruptionModel.isotropic(best_x), evals)


def select_diagonal(
    xs,
    theta2: float,
    init=None,
    ftol: float = 1e-8,
    max_evals: int | None = None,
) -> LoocvScore:
    """Nelder-Mead over log-variances ``u_j = log e_j``.

    ``init`` defaults to the isotropic optimum broadcast to every coordinate.
    The near-Dirac point ``e_j = 1e-12`` is always compared, so the result
    never scores worse than no corruption.
    """
    xs = as_points(xs)
    theta2 = check_theta2(theta2)
    d = xs.shape[1]
    extra = 0
    if init is None:
        iso = select_isotropic(xs, theta2)
        extra = iso.evaluations
        init = np.full(d, max(iso.cov.variances[0], 1e-12))
    init = np.broadcast_to(np.asarray(init, dtype=float), (d,)).copy()
    if np.any(~np.isfinite(init)) or np.any(init <= 0):
        raise ValueError(f"diagonal search needs strictly positive initial variances, got {init}")

    def objective(u: np.ndarray) -> float:
        return loocv_objective(xs, theta2, CorruptionModel.diagonal(np.exp(u)))

    res = nelder_mead(objective, np.log(init), step=0.25, ftol=ftol, max_evals=max_evals or 500 * d, lower=LOG_FLOOR)
    u_best, f_best = res.x, res.fun
    floor_u = np.full(d, LOG_FLOOR)
    f_floor = objective(floor_u)
    if f_floor < f_best:
        u_best, f_best = floor_u, f_floor
    return LoocvScore(float(f_best), CorruptionModel.diagonal(np.exp(u_best)), res.evals + 1 + extra)
