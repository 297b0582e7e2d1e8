"""Density estimation by kernel mean matching.

k-means supplies Gaussian prototypes with diagonal covariances; the mixture
weights are the simplex point whose mixture embedding is closest (in the
RKHS) to a fitted kernel mean estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .estimators import MeanEstimate, check_kind, fit
from .kernels import as_points, marginal_gram_rows, median_heuristic, sq_dists
from .optim import simplex_qp
from .rng import substream

VAR_FLOOR = 1e-6
DEFAULT_BW_GRID = (0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0)


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray  # (C, d) diagonal covariances

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        var = np.atleast_2d(np.asarray(self.variances, dtype=float))
        if mu.shape != var.shape or w.shape[0] != mu.shape[0]:
            raise ValueError(f"inconsistent mixture shapes {w.shape}, {mu.shape}, {var.shape}")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ValueError("mixture weights must lie on the simplex")
        if np.any(var <= 0) or not np.all(np.isfinite(var)):
            raise ValueError("mixture variances must be positive and finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    def with_weights(self, weights) -> "GaussianMixture":
        return GaussianMixture(weights, self.means, self.variances)


def _kmeanspp(xs: np.ndarray, C: int, rng: np.random.Generator) -> np.ndarray:
    n = xs.shape[0]
    centers = [xs[rng.integers(n)]]
    d2 = sq_dists(xs, centers[0][None, :])[:, 0]
    for _ in range(1, C):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centers.append(xs[idx])
        d2 = np.minimum(d2, sq_dists(xs, xs[idx][None, :])[:, 0])
    return np.array(centers)


def kmeans(xs, C: int, iters: int = 100, seed: int = 0) -> GaussianMixture:
    """k-means++ seeding then Lloyd iterations.

    Empty clusters are reseeded at the point farthest from its center.
    Components get per-coordinate variances plus a ``1e-6`` floor and weights
    equal to the cluster fractions.
    """
    xs = as_points(xs)
    n = xs.shape[0]
    if not 1 <= C <= n:
        raise ValueError(f"need 1 <= C <= n, got C={C}, n={n}")
    rng = substream(seed, "kmeans++")
    centers = _kmeanspp(xs, C, rng)
    labels = None
    for _ in range(iters):
        dist = sq_dists(xs, centers)
        new_labels = np.argmin(dist, axis=1)
        counts = np.bincount(new_labels, minlength=C)
        for c in np.nonzero(counts == 0)[0]:
            far = int(np.argmax(dist[np.arange(n), new_labels]))
            new_labels[far] = c
            dist[far, :] = 0.0
            counts = np.bincount(new_labels, minlength=C)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        centers = np.array([xs[labels == c].mean(axis=0) for c in range(C)])
    variances = np.array([xs[labels == c].var(axis=0) for c in range(C)]) + VAR_FLOOR
    weights = np.bincount(labels, minlength=C) / n
    return GaussianMixture(weights, centers, variances)


def qp_terms(est: MeanEstimate, protos: GaussianMixture) -> tuple[np.ndarray, np.ndarray]:
    """``G[c, c'] = <mu_c, mu_c'>`` and ``h[c] = <est, mu_c>`` in closed form."""
    if est.d != protos.means.shape[1]:
        raise ValueError("estimate and prototypes differ in dimension")
    G = marginal_gram_rows(protos.means, protos.variances, protos.means, protos.variances, est.theta2)
    H = marginal_gram_rows(est.points, est.corruption.diag(est.d), protos.means, protos.variances, est.theta2)
    return G, est.beta @ H


def match_mixture(est: MeanEstimate, protos: GaussianMixture, max_iter: int = 5000, tol: float = 1e-10) -> GaussianMixture:
    """Re-weight the prototypes to minimize the RKHS distance to ``est``.

    Starts from whichever of the cluster fractions and the uniform weights
    scores lower, then runs projected gradient on the simplex.
    """
    G, h = qp_terms(est, protos)
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(h))):
        raise ValueError("non-finite kernel terms in mixture matching")
    C = h.shape[0]
    starts = [protos.weights, np.full(C, 1.0 / C)]
    init = min(starts, key=lambda a: a @ G @ a - 2.0 * a @ h)
    alpha, _ = simplex_qp(G, h, init=init, max_iter=max_iter, tol=tol)
    alpha = np.maximum(alpha, 0.0)
    return protos.with_weights(alpha / alpha.sum())


def qp_objective(est: MeanEstimate, protos: GaussianMixture, alpha=None) -> float:
    G, h = qp_terms(est, protos)
    a = protos.weights if alpha is None else np.asarray(alpha, dtype=float)
    return float(a @ G @ a - 2.0 * a @ h)


def log_density(model: GaussianMixture, xs) -> np.ndarray:
    xs = as_points(xs)
    var = model.variances
    diff = xs[:, None, :] - model.means[None, :, :]
    comp = -0.5 * (np.sum(np.log(2.0 * np.pi * var), axis=1)[None, :] + np.sum(diff * diff / var[None], axis=2))
    with np.errstate(divide="ignore"):
        log_w = np.log(model.weights)
    return logsumexp(comp + log_w[None, :], axis=1)


def nll(model: GaussianMixture, test) -> float:
    """Average negative log-likelihood of the rows of ``test``."""
    test = as_points(test, "test")
    return float(-np.mean(log_density(model, test)))


@dataclass
class KdeResult:
    mixture: GaussianMixture
    nll: float
    multiplier: float
    theta2: float
    validation: dict = field(default_factory=dict)


def _fit_mixture(kind: str, xs: np.ndarray, theta2: float, protos: GaussianMixture) -> GaussianMixture:
    return match_mixture(fit(kind, xs, theta2), protos)


def kde_pipeline(
    xs,
    estimator: str,
    test_fraction: float = 0.3,
    bw_grid=DEFAULT_BW_GRID,
    seed: int = 0,
    prototypes: int = 10,
    test=None,
    kmeans_iters: int = 100,
) -> KdeResult:
    """Split, search the bandwidth multiplier, refit, and score test NLL.

    A fifth of the training rows is held out for the bandwidth search: for
    each multiplier ``m`` (ascending) the estimator is fit with
    ``theta2 = m * median_heuristic`` and the matched mixture is scored on the
    held-out rows; the search stops after two consecutive increases. The
    chosen multiplier is then refit on the whole training split. Pass
    ``test`` to use a separate test set instead of splitting ``xs``.
    The prototype count is capped at the number of fitting rows.
    """
    kind = check_kind(estimator)
    xs = as_points(xs)
    n = xs.shape[0]
    if test is None:
        if not 0.0 < test_fraction < 1.0:
            raise ValueError(f"test fraction must be in (0, 1), got {test_fraction}")
        n_test = int(round(test_fraction * n))
        perm = substream(seed, "split").permutation(n)
        test, train = xs[perm[:n_test]], xs[perm[n_test:]]
    else:
        test = as_points(test, "test")
        train = xs
    n_val = train.shape[0] // 5
    if test.shape[0] < 1 or n_val < 1 or train.shape[0] - n_val < 3:
        raise ValueError(f"degenerate split: {train.shape[0]} train rows, {test.shape[0]} test rows")

    inner = substream(seed, "validation-split").permutation(train.shape[0])
    val, fit_part = train[inner[:n_val]], train[inner[n_val:]]
    base = median_heuristic(fit_part)
    protos = kmeans(fit_part, min(prototypes, fit_part.shape[0]), kmeans_iters, seed)

    scores: dict[float, float] = {}
    prev, rises = None, 0
    for m in sorted(bw_grid):
        score = nll(_fit_mixture(kind, fit_part, m * base, protos), val)
        scores[m] = score
        if prev is not None and score > prev:
            rises += 1
            if rises == 2:
                break
        else:
            rises = 0
        prev = score
    best = min(scores, key=lambda m: (scores[m], m))

    theta2 = best * median_heuristic(train)
    protos_full = kmeans(train, min(prototypes, train.shape[0]), kmeans_iters, seed)
    mixture = _fit_mixture(kind, train, theta2, protos_full)
    return KdeResult(mixture, nll(mixture, test), best, theta2, scores)
