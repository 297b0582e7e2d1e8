"""Derivative-free optimizers and the Euclidean simplex projection.

``minimize_scalar`` is Brent's bounded minimizer (golden section with
parabolic steps, as in ``fminbnd``); ``nelder_mead`` is the classic simplex
method (as in ``fminsearch``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

_GOLDEN = 0.5 * (3.0 - math.sqrt(5.0))


class NonFiniteObjective(ValueError):
    """Raised when an objective returns NaN or inf; carries the offending point."""

    def __init__(self, where, value):
        super().__init__(f"objective is not finite at {where!r}: {value}")
        self.where = where
        self.value = value


@dataclass(frozen=True)
class ScalarBracket:
    lo: float
    hi: float
    tol: float = 1e-6
    max_evals: int = 200

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or not self.lo < self.hi:
            raise ValueError(f"bracket needs finite lo < hi, got [{self.lo}, {self.hi}]")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_evals < 3:
            raise ValueError("max_evals must be at least 3")


@dataclass
class OptResult:
    x: float | np.ndarray
    fun: float
    evals: int
    converged: bool


def _checked(f, x):
    fx = float(f(x))
    if not math.isfinite(fx):
        raise NonFiniteObjective(x, fx)
    return fx


def minimize_scalar(f: Callable[[float], float], bracket: ScalarBracket) -> OptResult:
    """Minimize ``f`` over ``[lo, hi]`` with Brent's method.

    Both endpoints are evaluated as well, so boundary minima (including a
    monotone ``f``) are returned exactly. Ties go to the smaller ``x``.
    """
    a, b = bracket.lo, bracket.hi
    # absolute tolerance on x; Brent's stopping rule uses tol1 = tol/3 per side
    tol = bracket.tol
    evals = 0

    def ev(x):
        nonlocal evals
        evals += 1
        return _checked(f, x)

    best_x, best_f = a, ev(a)
    f_hi = ev(b)
    if f_hi < best_f:
        best_x, best_f = b, f_hi

    x = w = v = a + _GOLDEN * (b - a)
    fx = fw = fv = ev(x)
    d = e = 0.0
    converged = False
    while evals < bracket.max_evals:
        m = 0.5 * (a + b)
        tol1 = tol / 3.0
        tol2 = 2.0 * tol1
        if abs(x - m) <= tol2 - 0.5 * (b - a):
            converged = True
            break
        golden = True
        if abs(e) > tol1:
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2.0 * (q - r)
            if q > 0.0:
                p = -p
            q = abs(q)
            e_prev = e
            e = d
            if abs(p) < abs(0.5 * q * e_prev) and q * (a - x) < p < q * (b - x):
                d = p / q
                u = x + d
                if u - a < tol2 or b - u < tol2:
                    d = tol1 if x < m else -tol1
                golden = False
        if golden:
            e = (b - x) if x < m else (a - x)
            d = _GOLDEN * e
        u = x + d if abs(d) >= tol1 else x + (tol1 if d > 0 else -tol1)
        u = min(max(u, bracket.lo), bracket.hi)
        fu = ev(u)
        if fu <= fx:
            if u < x:
                b = x
            else:
                a = x
            v, fv = w, fw
            w, fw = x, fx
            x, fx = u, fu
        else:
            if u < x:
                a = u
            else:
                b = u
            if fu <= fw or w == x:
                v, fv = w, fw
                w, fw = u, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu

    if fx < best_f or (fx == best_f and x < best_x):
        best_x, best_f = x, fx
    return OptResult(float(best_x), float(best_f), evals, converged)


def nelder_mead(
    f: Callable[[np.ndarray], float],
    init,
    step: float = 0.25,
    ftol: float = 1e-8,
    max_evals: int | None = None,
    lower: np.ndarray | float | None = None,
    callback: Callable[[np.ndarray, float], None] | None = None,
) -> OptResult:
    """Nelder-Mead with reflection 1, expansion 2, contraction 0.5, shrink 0.5.

    The initial simplex is ``init`` plus ``init + step * e_j`` for every
    coordinate. Stops when ``max(f) - min(f)`` over the simplex drops below
    ``ftol`` or after ``max_evals`` evaluations (default ``500 * p``).
    Vertices are ordered with a stable sort, so equal values keep index order.
    ``lower`` clamps every trial point from below.
    """
    x0 = np.atleast_1d(np.asarray(init, dtype=float)).copy()
    p = x0.size
    if max_evals is None:
        max_evals = 500 * p
    evals = 0

    def clamp(x):
        return x if lower is None else np.maximum(x, lower)

    def ev(x):
        nonlocal evals
        evals += 1
        return _checked(f, x)

    simplex = np.empty((p + 1, p))
    simplex[0] = clamp(x0)
    for j in range(p):
        v = x0.copy()
        v[j] += step
        simplex[j + 1] = clamp(v)
    fvals = np.array([ev(v) for v in simplex])

    converged = False
    while True:
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        if callback is not None:
            callback(simplex[0].copy(), float(fvals[0]))
        if fvals[-1] - fvals[0] < ftol:
            converged = True
            break
        if evals >= max_evals:
            break
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = clamp(centroid + (centroid - worst))
        fr = ev(xr)
        if fr < fvals[0]:
            xe = clamp(centroid + 2.0 * (centroid - worst))
            fe = ev(xe)
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
        else:
            if fr < fvals[-1]:
                xc = clamp(centroid + 0.5 * (xr - centroid))
                fc = ev(xc)
                accept = fc <= fr
            else:
                xc = clamp(centroid + 0.5 * (worst - centroid))
                fc = ev(xc)
                accept = fc < fvals[-1]
            if accept:
                simplex[-1], fvals[-1] = xc, fc
            else:
                best = simplex[0]
                for j in range(1, p + 1):
                    simplex[j] = clamp(best + 0.5 * (simplex[j] - best))
                    fvals[j] = ev(simplex[j])
    return OptResult(simplex[0].copy(), float(fvals[0]), evals, converged)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto ``{a >= 0, sum(a) = 1}`` (sort and threshold)."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("project_simplex expects a nonempty vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("project_simplex got non-finite input")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ks > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def simplex_qp(
    G: np.ndarray,
    h: np.ndarray,
    init=None,
    max_iter: int = 5000,
    tol: float = 1e-10,
) -> tuple[np.ndarray, list[float]]:
    """Minimize ``a^T G a - 2 a^T h`` over the probability simplex.

    Projected gradient with step ``1 / (2 * max_row_sum(|G|))``, which bounds
    the gradient's Lipschitz constant, so every step is a descent step.
    Stops once an iteration improves the objective by less than ``tol``,
    then polishes by solving the equality-constrained problem on the final
    support exactly (kept only if feasible and no worse). Returns the
    minimizer and the objective after every accepted step.
    """
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(h))):
        raise ValueError("QP data contains non-finite entries")
    C = h.shape[0]
    a = np.full(C, 1.0 / C) if init is None else project_simplex(init)

    def obj(v):
        return float(v @ G @ v - 2.0 * v @ h)

    lip = 2.0 * float(np.max(np.abs(G).sum(axis=1)))
    f = obj(a)
    history = [f]
    if lip == 0.0:
        return a, history
    for _ in range(max_iter):
        a_new = project_simplex(a - (2.0 * (G @ a) - 2.0 * h) / lip)
        f_new = obj(a_new)
        if f_new > f:
            break  # rounding-level ascent: keep the previous iterate
        improvement = f - f_new
        a, f = a_new, f_new
        history.append(f)
        if improvement < tol:
            break
    polished = _polish(G, h, a)
    if polished is not None:
        f_pol = obj(polished)
        if f_pol <= f:
            a = polished
            history.append(f_pol)
    return a, history


def _polish(G: np.ndarray, h: np.ndarray, a: np.ndarray) -> np.ndarray | None:
    """KKT solve of ``min a^T G a - 2 a^T h`` s.t. ``sum(a) = 1`` on ``supp(a)``.

    Coordinates that come out negative are dropped and the solve repeated.
    """
    support = list(np.nonzero(a > 0)[0])
    while support:
        k = len(support)
        kkt = np.zeros((k + 1, k + 1))
        kkt[:k, :k] = 2.0 * G[np.ix_(support, support)]
        kkt[:k, k] = kkt[k, :k] = 1.0
        rhs = np.append(2.0 * h[support], 1.0)
        try:
            sol = np.linalg.solve(kkt, rhs)[:k]
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(sol)):
            return None
        if np.all(sol >= 0):
            out = np.zeros_like(a)
            out[support] = sol
            return out / out.sum()
        support.pop(int(np.argmin(sol)))
    return None
