"""One-dimensional Gaussian kernel density estimation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class DegenerateBatchError(ValueError):
    """All scores in a batch coincide, so no score grid can be built."""


@dataclass(frozen=True)
class DensityEstimate:
    samples: np.ndarray
    bandwidth: float = 1.0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float).ravel()
        if s.size == 0:
            raise ValueError("density estimate needs at least one sample")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        object.__setattr__(self, "samples", s)


@dataclass(frozen=True)
class ScoreGrid:
    points: np.ndarray
    spacing: float
    lo: float
    hi: float

    @property
    def n_intervals(self) -> int:
        return self.points.size - 1


def _standardized(est: DensityEstimate, points) -> np.ndarray:
    pts = np.asarray(points, dtype=float).ravel()
    u = np.subtract.outer(pts, est.samples)
    u *= 1.0 / est.bandwidth
    return u


def _gauss(u: np.ndarray) -> np.ndarray:
    k = np.square(u)
    k *= -0.5
    np.exp(k, out=k)
    return k


def pdf_at(est: DensityEstimate, points) -> np.ndarray:
    kernel = _gauss(_standardized(est, points))
    return kernel.sum(axis=1) * (_INV_SQRT_2PI / (est.samples.size * est.bandwidth))


def pdf_grad_wrt_samples(est: DensityEstimate, points, upstream) -> np.ndarray:
    """Gradient of ``sum_k upstream[k] * pdf(points[k])`` w.r.t. each sample.

    The evaluation points are held fixed.
    """
    upstream = np.asarray(upstream, dtype=float).ravel()
    u = _standardized(est, points)
    if upstream.size != u.shape[0]:
        raise ValueError("upstream must match the number of evaluation points")
    # d/ds_i K((t - s_i)/h) = K(u) * u / h
    kernel = _gauss(u)
    kernel *= u
    h = est.bandwidth
    return (upstream @ kernel) * (_INV_SQRT_2PI / (est.samples.size * h * h))


def pdf_and_grad(est: DensityEstimate, points, upstream) -> tuple[np.ndarray, np.ndarray]:
    """``pdf_at`` and ``pdf_grad_wrt_samples`` sharing one kernel evaluation."""
    upstream = np.asarray(upstream, dtype=float).ravel()
    u = _standardized(est, points)
    kernel = _gauss(u)
    n, h = est.samples.size, est.bandwidth
    values = kernel.sum(axis=1) * (_INV_SQRT_2PI / (n * h))
    kernel *= u
    return values, (upstream @ kernel) * (_INV_SQRT_2PI / (n * h * h))


def cdf_at(est: DensityEstimate, points) -> np.ndarray:
    """Exact CDF of the kernel mixture."""
    return ndtr(_standardized(est, points)).mean(axis=1)


def make_grid(s_n, s_a, N: int) -> ScoreGrid:
    """Arithmetic grid of ``N + 1`` points spanning the combined score range."""
    if N < 2:
        raise ValueError(f"grid needs N >= 2 intervals, got {N}")
    combined = np.concatenate([np.ravel(s_n), np.ravel(s_a)]).astype(float)
    if combined.size == 0:
        raise ValueError("no scores to build a grid from")
    lo, hi = float(combined.min()), float(combined.max())
    if not hi > lo:
        raise DegenerateBatchError("all scores are identical")
    return _grid(lo, hi, N)


def _grid(lo: float, hi: float, N: int) -> ScoreGrid:
    points = np.linspace(lo, hi, N + 1)
    return ScoreGrid(points=points, spacing=(hi - lo) / N, lo=lo, hi=hi)
