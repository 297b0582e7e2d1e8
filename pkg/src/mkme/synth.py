"""Synthetic generators and the closed-form loss against a known mixture.

The mixture generator draws 4 components with means uniform on
``(-10, 10)^d`` and Wishart(2 I, df) covariances, and adds isotropic noise of
variance 0.2. The noise is Gaussian, so it is folded into each component's
covariance and the true kernel mean stays available in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import wishart

from .density import DEFAULT_BW_GRID, kde_pipeline
from .estimators import DEFAULT_LAMBDAS, MeanEstimate, check_kind, fit, fit_marginalized, inner_product
from .kernels import CorruptionModel, marginal_dense, median_heuristic
from .rng import child_seed, substream

MOG_WEIGHTS = (0.05, 0.3, 0.4, 0.25)
NOISE_VAR = 0.2
WISHART_DF = 7


def _rng(seed, *keys) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return substream(int(seed), *keys)


@dataclass(frozen=True, eq=False)
class MoGSpec:
    pis: np.ndarray
    means: np.ndarray  # (C, d)
    covariances: np.ndarray  # (C, d, d), before the additive noise
    noise_var: float = NOISE_VAR

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @property
    def component_covariances(self) -> np.ndarray:
        return self.covariances + self.noise_var * np.eye(self.d)[None, :, :]


def sample_mog_spec(d: int, seed=0) -> MoGSpec:
    """Random 4-component mixture; Wishart df is ``max(7, d + 1)``."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    rng = _rng(seed, "mog-spec", d)
    df = max(WISHART_DF, d + 1)
    means = rng.uniform(-10.0, 10.0, size=(len(MOG_WEIGHTS), d))
    covs = wishart(df=df, scale=2.0 * np.eye(d)).rvs(size=len(MOG_WEIGHTS), random_state=rng)
    covs = np.asarray(covs, dtype=float).reshape(len(MOG_WEIGHTS), d, d)
    return MoGSpec(np.array(MOG_WEIGHTS), means, covs)


def sample_mog(spec: MoGSpec, n: int, seed=0, return_components: bool = False):
    if n < 1:
        raise ValueError("sample size must be at least 1")
    rng = _rng(seed, "mog-sample", n)
    comps = rng.choice(len(spec.pis), size=n, p=spec.pis)
    z = rng.standard_normal((n, spec.d))
    chols = np.linalg.cholesky(spec.component_covariances)
    xs = spec.means[comps] + np.einsum("nij,nj->ni", chols[comps], z)
    return (xs, comps) if return_components else xs


def loss_against_mog(est: MeanEstimate, spec: MoGSpec) -> float:
    """``|est - E_P k(x, .)|^2`` for the mixture ``P`` described by ``spec``."""
    if est.d != spec.d:
        raise ValueError(f"dimension mismatch: {est.d} vs {spec.d}")
    t2 = est.theta2
    covs = spec.component_covariances
    est_cov = np.diag(est.corruption.diag(est.d))
    C = len(spec.pis)
    cross = 0.0
    for c in range(C):
        col = marginal_dense(est.points, est_cov, spec.means[c][None, :], covs[c], t2)[:, 0]
        cross += spec.pis[c] * float(est.beta @ col)
    target = 0.0
    for c in range(C):
        for c2 in range(C):
            k = marginal_dense(spec.means[c][None, :], covs[c], spec.means[c2][None, :], covs[c2], t2)[0, 0]
            target += spec.pis[c] * spec.pis[c2] * k
    return inner_product(est, est) - 2.0 * cross + target


@dataclass(frozen=True, eq=False)
class TDistribution:
    loc: np.ndarray
    scale: np.ndarray  # SPD shape matrix
    df: float

    @property
    def d(self) -> int:
        return self.loc.shape[0]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n < 1:
            raise ValueError("sample size must be at least 1")
        z = rng.standard_normal((n, self.d))
        w = rng.chisquare(self.df, size=n)
        L = np.linalg.cholesky(self.scale)
        return self.loc + (z @ L.T) * np.sqrt(self.df / w)[:, None]


def random_t_spec(d: int, df: float = 3.0, seed=0) -> TDistribution:
    """Zero-location t distribution with shape ``A^T A / d + I``."""
    if not df > 0:
        raise ValueError(f"degrees of freedom must be positive, got {df}")
    if d < 1:
        raise ValueError("dimension must be at least 1")
    rng = _rng(seed, "t-spec", d)
    A = rng.standard_normal((d, d))
    return TDistribution(np.zeros(d), A.T @ A / d + np.eye(d), float(df))


def sample_t(d: int, df: float, n: int, seed=0) -> np.ndarray:
    spec = random_t_spec(d, df, seed)
    return spec.sample(n, _rng(seed, "t-sample", n))


@dataclass
class RiskReport:
    per_copy_losses: list
    mean: float
    stderr: float

    @classmethod
    def from_losses(cls, losses) -> "RiskReport":
        losses = [float(v) for v in losses]
        m = len(losses)
        mean = float(np.mean(losses))
        stderr = float(np.std(losses, ddof=1) / math.sqrt(m)) if m > 1 else 0.0
        return cls(losses, mean, stderr)


def risk_experiment(
    dims: Sequence[int],
    ns: Sequence[int],
    copies: int = 30,
    estimators: Sequence[str] = ("kme", "skmse", "fkmse", "mkme", "mmkme"),
    seed: int = 0,
    lambdas=DEFAULT_LAMBDAS,
) -> list[dict]:
    """Average loss per (d, n, estimator) over ``copies`` random mixtures.

    Copy ``j`` at dimension ``d`` uses the same mixture for every ``n``; the
    bandwidth is the median heuristic of each sample.
    """
    if copies < 1:
        raise ValueError("need at least one copy")
    kinds = [check_kind(e) for e in estimators]
    rows = []
    for d in dims:
        for n in ns:
            losses = {k: [] for k in kinds}
            for j in range(copies):
                spec = sample_mog_spec(d, substream(seed, "spec", d, j))
                xs = sample_mog(spec, n, substream(seed, "sample", d, n, j))
                theta2 = median_heuristic(xs)
                for k in kinds:
                    losses[k].append(loss_against_mog(fit(k, xs, theta2, lambdas), spec))
            for k in kinds:
                rep = RiskReport.from_losses(losses[k])
                rows.append({"d": d, "n": n, "estimator": k, "mean_loss": rep.mean, "stderr": rep.stderr, "report": rep})
    return rows


def sigma_sweep(d: int, n: int, sigma2_grid: Sequence[float], copies: int = 30, seed: int = 0) -> list[dict]:
    """Loss of MKME at fixed corruption variances (``sigma2 = 0`` is KME)."""
    if copies < 1:
        raise ValueError("need at least one copy")
    losses = {s2: [] for s2 in sigma2_grid}
    for j in range(copies):
        spec = sample_mog_spec(d, substream(seed, "spec", d, j))
        xs = sample_mog(spec, n, substream(seed, "sample", d, n, j))
        theta2 = median_heuristic(xs)
        for s2 in sigma2_grid:
            est = fit_marginalized(xs, theta2, cov=CorruptionModel.isotropic(s2))
            losses[s2].append(loss_against_mog(est, spec))
    rows = []
    for s2 in sigma2_grid:
        rep = RiskReport.from_losses(losses[s2])
        rows.append({"d": d, "n": n, "sigma2": s2, "mean_loss": rep.mean, "stderr": rep.stderr, "report": rep})
    return rows


def t_nll_experiment(
    dims: Sequence[int],
    ns: Sequence[int],
    copies: int = 30,
    estimators: Sequence[str] = ("kme", "skmse", "fkmse", "mkme", "mmkme"),
    seed: int = 0,
    df: float = 3.0,
    test_size: int = 1000,
    bw_grid=DEFAULT_BW_GRID,
    prototypes: int = 10,
) -> list[dict]:
    """Test NLL of kernel-mean-matched mixtures fit to t-distributed samples.

    The true distribution is known, so a fresh test sample of ``test_size``
    rows replaces the held-out split.
    """
    if copies < 1:
        raise ValueError("need at least one copy")
    kinds = [check_kind(e) for e in estimators]
    rows = []
    for d in dims:
        for n in ns:
            vals = {k: [] for k in kinds}
            for j in range(copies):
                spec = random_t_spec(d, df, substream(seed, "t-spec", d, j))
                train = spec.sample(n, substream(seed, "t-train", d, n, j))
                test = spec.sample(test_size, substream(seed, "t-test", d, j))
                run_seed = child_seed(seed, "kde", d, n, j)
                for k in kinds:
                    res = kde_pipeline(train, k, bw_grid=bw_grid, seed=run_seed, prototypes=prototypes, test=test)
                    vals[k].append(res.nll)
            for k in kinds:
                rep = RiskReport.from_losses(vals[k])
                rows.append({"d": d, "n": n, "estimator": k, "mean_nll": rep.mean, "stderr": rep.stderr, "report": rep})
    return rows
