"""Synthetic anomaly injection.

Normal samples come from a Gaussian mixture fitted to source data (BIC
chooses the component count). Anomalies are generated four ways:

* local: every component covariance scaled by ``alpha``
* global: per-feature uniform draws over the ``alpha``-scaled feature range
* clustered: every component mean scaled by ``alpha``
* dependency: normals from a Gaussian copula over kernel-density marginals,
  anomalies from the same marginals drawn independently
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtr
from scipy.stats import spearmanr

from .data import LabeledDataset, _round_half_up
from .kde import DensityEstimate, cdf_at, pdf_at

ANOMALY_TYPES = ("local", "global", "clustered", "dependency")
DEFAULT_ALPHA = {"local": 5.0, "global": 1.1, "clustered": 5.0, "dependency": None}


@dataclass(frozen=True)
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        cov = np.asarray(self.covariances, dtype=float)
        if cov.ndim == 2:
            cov = cov[None]
        if not (w.size == mu.shape[0] == cov.shape[0]):
            raise ValueError("weights, means and covariances disagree on the component count")
        if abs(w.sum() - 1.0) > 1e-9 or np.any(w < 0):
            raise ValueError("mixture weights must be non-negative and sum to 1")
        if not np.allclose(cov, np.swapaxes(cov, 1, 2)):
            raise ValueError("covariances must be symmetric")
        np.linalg.cholesky(cov)  # raises LinAlgError if not positive definite
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class SynthSpec:
    anomaly_type: str
    alpha: float | None = None
    n_normals: int = 950
    anomaly_ratio: float = 0.05
    seed: int = 0
    max_components: int = 5

    def __post_init__(self):
        if self.anomaly_type not in ANOMALY_TYPES:
            raise ValueError(f"anomaly_type must be one of {ANOMALY_TYPES}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", DEFAULT_ALPHA[self.anomaly_type])
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0 < self.anomaly_ratio < 1:
            raise ValueError("anomaly_ratio must lie strictly between 0 and 1")
        if self.n_normals < 1:
            raise ValueError("n_normals must be positive")

    @property
    def n_anomalies(self) -> int:
        return _round_half_up(self.anomaly_ratio / (1 - self.anomaly_ratio) * self.n_normals)


def two_blob_source(n: int = 2000, seed: int = 0) -> np.ndarray:
    """2-D source data: two correlated Gaussian blobs on the diagonal."""
    rng = np.random.default_rng(seed)
    cov = np.array([[1.0, 0.5], [0.5, 1.0]])
    centers = np.array([[-1.5, -1.5], [1.5, 1.5]])
    comp = rng.integers(2, size=n)
    return centers[comp] + rng.multivariate_normal(np.zeros(2), cov, size=n)


# --- Gaussian mixture fitting ---------------------------------------------

def _log_gauss(X, mean, cov):
    d = X.shape[1]
    L = np.linalg.cholesky(cov)
    sol = np.linalg.solve(L, (X - mean).T)
    log_det = 2.0 * np.log(np.diag(L)).sum()
    return -0.5 * (np.sum(sol * sol, axis=0) + log_det + d * np.log(2 * np.pi))


def _log_joint(X, weights, means, covs):
    return np.column_stack([np.log(w) + _log_gauss(X, m, c) for w, m, c in zip(weights, means, covs)])


def _kmeanspp(X, k, rng):
    centers = [X[rng.integers(len(X))]]
    for _ in range(1, k):
        d2 = np.min(((X[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        probs = d2 / total if total > 0 else None
        centers.append(X[rng.choice(len(X), p=probs)])
    return np.array(centers)


def _m_step(X, resp, reg):
    nk = resp.sum(axis=0) + 1e-12
    weights = nk / nk.sum()
    means = (resp.T @ X) / nk[:, None]
    d = X.shape[1]
    covs = np.empty((len(nk), d, d))
    for j in range(len(nk)):
        diff = X - means[j]
        covs[j] = (resp[:, j, None] * diff).T @ diff / nk[j] + reg * np.eye(d)
    return weights, means, covs


def em_fit(X, k: int, rng: np.random.Generator, max_iter: int = 200, tol: float = 1e-8, reg: float = 1e-6):
    """EM for a ``k``-component full-covariance mixture.

    Returns ``(mixture, loglik_history)`` with the total log-likelihood after
    every E-step.
    """
    X = np.asarray(X, dtype=float)
    centers = _kmeanspp(X, k, rng)
    nearest = np.argmin(((X[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
    resp = np.eye(k)[nearest]
    weights, means, covs = _m_step(X, resp, reg)
    history = []
    for _ in range(max_iter):
        log_joint = _log_joint(X, weights, means, covs)
        log_norm = logsumexp(log_joint, axis=1)
        history.append(float(log_norm.sum()))
        resp = np.exp(log_joint - log_norm[:, None])
        weights, means, covs = _m_step(X, resp, reg)
        if len(history) > 1 and abs(history[-1] - history[-2]) < tol * abs(history[-1]):
            break
    weights = weights / weights.sum()
    return GaussianMixture(weights, means, covs), history


def _n_free_params(k: int, d: int) -> int:
    return (k - 1) + k * d + k * d * (d + 1) // 2


def bic(gmm: GaussianMixture, X) -> float:
    X = np.asarray(X, dtype=float)
    ll = logsumexp(_log_joint(X, gmm.weights, gmm.means, gmm.covariances), axis=1).sum()
    return float(-2.0 * ll + _n_free_params(gmm.n_components, gmm.dim) * np.log(len(X)))


def fit_gmm(X, max_components: int = 5, seed: int = 0, reg: float = 1e-6) -> GaussianMixture:
    """Fit mixtures with 1..max_components components and keep the lowest BIC."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if n < 10 * d:
        raise ValueError(f"need at least {10 * d} rows to fit a {d}-dimensional mixture, got {n}")
    if X.var(axis=0).sum() == 0:
        raise ValueError("degenerate data: zero total variance")
    best, best_bic = None, np.inf
    for k in range(1, max_components + 1):
        gmm, _ = em_fit(X, k, np.random.default_rng([seed, k]), reg=reg)
        score = bic(gmm, X)
        if score < best_bic:
            best, best_bic = gmm, score
    return best


# --- generators -------------------------------------------------------------

def sample_gmm(gmm: GaussianMixture, n: int, rng: np.random.Generator, cov_scale: float = 1.0, mean_scale: float = 1.0) -> np.ndarray:
    comps = rng.choice(gmm.n_components, size=n, p=gmm.weights)
    z = rng.standard_normal((n, gmm.dim))
    chol = np.linalg.cholesky(gmm.covariances)
    return mean_scale * gmm.means[comps] + np.sqrt(cov_scale) * np.einsum("nij,nj->ni", chol[comps], z)


def gen_local(gmm: GaussianMixture, n: int, alpha: float, rng: np.random.Generator) -> np.ndarray:
    return sample_gmm(gmm, n, rng, cov_scale=alpha)


def gen_clustered(gmm: GaussianMixture, n: int, alpha: float, rng: np.random.Generator) -> np.ndarray:
    return sample_gmm(gmm, n, rng, mean_scale=alpha)


def gen_global(X, n: int, alpha: float, rng: np.random.Generator) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if len(X) == 0:
        raise ValueError("empty reference data")
    a, b = alpha * X.min(axis=0), alpha * X.max(axis=0)
    return rng.uniform(np.minimum(a, b), np.maximum(a, b), size=(n, X.shape[1]))


class KDEMarginal:
    """Kernel-density marginal with a numerically inverted CDF."""

    def __init__(self, x, grid_size: int = 4096, tol: float = 1e-6):
        x = np.asarray(x, dtype=float)
        sd = x.std()
        if sd == 0:
            raise ValueError("constant feature has no density")
        # Scott's rule
        self.est = DensityEstimate(x, sd * x.size ** (-0.2))
        h = self.est.bandwidth
        self.grid = np.linspace(x.min() - 8 * h, x.max() + 8 * h, grid_size)
        self.grid_cdf = self._cdf(self.grid)
        self.tol = tol

    def _cdf(self, pts, chunk: int = 1024):
        return np.concatenate([cdf_at(self.est, pts[i : i + chunk]) for i in range(0, len(pts), chunk)])

    def _pdf(self, pts, chunk: int = 1024):
        return np.concatenate([pdf_at(self.est, pts[i : i + chunk]) for i in range(0, len(pts), chunk)])

    def ppf(self, u) -> np.ndarray:
        u = np.clip(np.asarray(u, dtype=float), 1e-12, 1 - 1e-12)
        x = np.interp(u, self.grid_cdf, self.grid)
        lo, hi = self.grid[0], self.grid[-1]
        for _ in range(20):
            err = self._cdf(x) - u
            if np.max(np.abs(err)) < self.tol:
                break
            x = np.clip(x - err / np.maximum(self._pdf(x), 1e-300), lo, hi)
        return x


def gaussian_copula_corr(X) -> np.ndarray:
    """Gaussian-copula correlation matching the Spearman correlations of ``X``."""
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    if d == 1:
        return np.ones((1, 1))
    rho = spearmanr(X).statistic
    rho = np.atleast_2d(rho) if d > 2 else np.array([[1.0, rho], [rho, 1.0]])
    R = 2.0 * np.sin(np.pi * rho / 6.0)
    np.fill_diagonal(R, 1.0)
    for ridge in (0.0, 1e-8, 1e-6, 1e-4, 1e-2):
        C = (R + ridge * np.eye(d)) / (1.0 + ridge)
        try:
            np.linalg.cholesky(C)
            return C
        except np.linalg.LinAlgError:
            continue
    raise ValueError("rank-correlation matrix is not positive definite after ridge repair")


def gen_dependency(X, n: int, rng: np.random.Generator, n_anomalies: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Copula-dependent normals and independent-feature anomalies."""
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    if len(X) < 10 * d:
        raise ValueError(f"need at least {10 * d} rows, got {len(X)}")
    n_anomalies = n if n_anomalies is None else n_anomalies
    corr = gaussian_copula_corr(X)
    marginals = [KDEMarginal(X[:, j]) for j in range(d)]
    z = rng.standard_normal((n, d)) @ np.linalg.cholesky(corr).T
    u_normal = ndtr(z)
    u_anom = rng.uniform(size=(n_anomalies, d))
    normals = np.column_stack([m.ppf(u_normal[:, j]) for j, m in enumerate(marginals)])
    anomalies = np.column_stack([m.ppf(u_anom[:, j]) for j, m in enumerate(marginals)])
    return normals, anomalies


def make_synthetic_dataset(X_source, spec: SynthSpec) -> LabeledDataset:
    X_source = np.asarray(X_source, dtype=float)
    rng = np.random.default_rng(spec.seed)
    n_a = spec.n_anomalies
    if spec.anomaly_type == "dependency":
        normals, anomalies = gen_dependency(X_source, spec.n_normals, rng, n_anomalies=n_a)
    else:
        gmm = fit_gmm(X_source, spec.max_components, seed=spec.seed)
        normals = sample_gmm(gmm, spec.n_normals, rng)
        if spec.anomaly_type == "local":
            anomalies = gen_local(gmm, n_a, spec.alpha, rng)
        elif spec.anomaly_type == "clustered":
            anomalies = gen_clustered(gmm, n_a, spec.alpha, rng)
        else:
            anomalies = gen_global(normals, n_a, spec.alpha, rng)
    X = np.vstack([normals, anomalies])
    y = np.concatenate([np.zeros(len(normals), dtype=np.int64), np.ones(len(anomalies), dtype=np.int64)])
    order = rng.permutation(len(y))
    return LabeledDataset(X[order], y[order], name=f"synthetic-{spec.anomaly_type}")


__all__ = [
    "ANOMALY_TYPES",
    "GaussianMixture",
    "KDEMarginal",
    "SynthSpec",
    "bic",
    "em_fit",
    "fit_gmm",
    "gaussian_copula_corr",
    "gen_clustered",
    "gen_dependency",
    "gen_global",
    "gen_local",
    "make_synthetic_dataset",
    "sample_gmm",
    "two_blob_source",
]
