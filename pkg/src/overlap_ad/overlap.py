"""Overlap loss family on a batch of normal/anomaly scores.

All losses return ``(loss, score_grads)`` where ``score_grads`` is the
gradient w.r.t. the concatenation ``[s_n, s_a]``. Intersection points, grid
node locations and trapezoid widths are treated as constants when
differentiating: only the dependence of the kernel densities on the sample
scores carries gradient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .kde import (
    DegenerateBatchError,
    DensityEstimate,
    ScoreGrid,
    _grid,
    make_grid,
    pdf_and_grad,
    pdf_at,
    pdf_grad_wrt_samples,
)

STRATEGIES = ("random", "ensemble")


@dataclass(frozen=True)
class ScoreBatch:
    s_n: np.ndarray
    s_a: np.ndarray

    def __post_init__(self):
        s_n = np.asarray(self.s_n, dtype=float).ravel()
        s_a = np.asarray(self.s_a, dtype=float).ravel()
        if s_n.size == 0 or s_a.size == 0:
            raise ValueError("both sides of a score batch must be non-empty")
        if not (np.all(np.isfinite(s_n)) and np.all(np.isfinite(s_a))):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "s_n", s_n)
        object.__setattr__(self, "s_a", s_a)

    @classmethod
    def from_scores(cls, scores, n_normal: int) -> "ScoreBatch":
        scores = np.asarray(scores, dtype=float)
        return cls(scores[:n_normal], scores[n_normal:])

    def split(self, grads: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return grads[: self.s_n.size], grads[self.s_n.size :]


@dataclass(frozen=True)
class OverlapLossConfig:
    N: int = 1000
    bandwidth: float = 1.0
    strategy: str = "random"
    extension_width: float = 3.0
    # lower integration limit of the CDFs sits this many bandwidths below
    # the combined minimum score
    cdf_tail_width: float = 3.0

    def __post_init__(self):
        if self.N < 2:
            raise ValueError(f"N must be >= 2, got {self.N}")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.extension_width < 0 or self.cdf_tail_width < 0:
            raise ValueError("extension and tail widths must be non-negative")


@dataclass(frozen=True)
class IntersectionResult:
    candidates: np.ndarray
    chosen_c: float
    strategy: str
    extended: bool
    fallback: bool
    grid: ScoreGrid

    @property
    def active(self) -> np.ndarray:
        """Intersection points the loss is evaluated at."""
        if self.strategy == "ensemble":
            return self.candidates
        return np.array([self.chosen_c])


def gaussian_intersection(mu_n: float, sigma_n: float, mu_a: float, sigma_a: float) -> float:
    """Point where the normal-score and anomaly-score Gaussian densities meet.

    ``sigma_*`` are standard deviations. Of the two crossings of unequal
    Gaussians this returns the one given by the minus branch of the
    quadratic formula; equal spreads give the midpoint of the means.
    """
    if not (sigma_n > 0 and sigma_a > 0):
        raise ValueError("standard deviations must be positive")
    if abs(sigma_n - sigma_a) < 1e-12:
        return 0.5 * (mu_n + mu_a)
    vn, va = sigma_n * sigma_n, sigma_a * sigma_a
    denom = vn - va
    a = mu_a * vn - mu_n * va
    disc = (mu_n - mu_a) ** 2 + 2.0 * denom * np.log(sigma_n / sigma_a)
    root = sigma_n * sigma_a * np.sqrt(max(disc, 0.0))
    if a >= 0:
        # (a - root) / denom rewritten to avoid cancellation
        const = mu_a**2 * vn - mu_n**2 * va - 2.0 * vn * va * np.log(sigma_n / sigma_a)
        if a + root == 0:
            return 0.5 * (mu_n + mu_a)
        return float(const / (a + root))
    return float((a - root) / denom)


def _density_diff(batch: ScoreBatch, points: np.ndarray, h: float) -> np.ndarray:
    return pdf_at(DensityEstimate(batch.s_a, h), points) - pdf_at(DensityEstimate(batch.s_n, h), points)


def _sign_changes(points: np.ndarray, diff: np.ndarray) -> np.ndarray:
    sgn = np.sign(diff)
    nonzero = np.flatnonzero(sgn)
    if nonzero.size == 0:
        return points[:0]
    # an exact zero takes the sign of the next nonzero value, so a crossing
    # that lands on a grid point is reported once, at that point
    nxt = np.minimum(np.searchsorted(nonzero, np.arange(sgn.size)), nonzero.size - 1)
    sgn = sgn[nonzero[nxt]]
    d = sgn[1:] - sgn[:-1]
    return points[1:][d != 0]


def find_intersections(batch: ScoreBatch, cfg: OverlapLossConfig, rng: np.random.Generator | None = None) -> IntersectionResult:
    h = cfg.bandwidth
    grid = make_grid(batch.s_n, batch.s_a, cfg.N)
    diff = _density_diff(batch, grid.points, h)
    candidates = _sign_changes(grid.points, diff)
    extended = fallback = False

    if candidates.size == 0:
        extended = True
        w = cfg.extension_width * h
        grid = _grid(grid.lo - w, grid.hi + w, cfg.N)
        diff = _density_diff(batch, grid.points, h)
        candidates = _sign_changes(grid.points, diff)
        if candidates.size == 0:
            fallback = True
            candidates = grid.points[[int(np.argmin(np.abs(diff)))]]

    if cfg.strategy == "random" and candidates.size > 1:
        if rng is None:
            raise ValueError("random intersection selection needs an rng")
        chosen = float(candidates[rng.integers(candidates.size)])
    else:
        chosen = float(candidates[candidates.size // 2])
    return IntersectionResult(candidates, chosen, cfg.strategy, extended, fallback, grid)


def _trapezoid_nodes(lo: float, c: float, N: int) -> tuple[np.ndarray, np.ndarray]:
    nodes = np.linspace(lo, c, N + 1)
    weights = np.full(N + 1, (c - lo) / N)
    weights[[0, -1]] *= 0.5
    return nodes, weights


def trapezoid_cdf(density, c: float, lo: float, N: int) -> float:
    """Trapezoidal integral of ``density`` over ``[lo, c]``, clamped to [0, 1].

    ``density`` is a callable evaluated at the ``N + 1`` uniform nodes.
    """
    if c < lo:
        raise ValueError(f"upper limit {c} lies below lower limit {lo}")
    if c == lo:
        return 0.0
    nodes, weights = _trapezoid_nodes(lo, c, N)
    return float(np.clip(weights @ np.asarray(density(nodes)), 0.0, 1.0))


def _clamped_cdf(est: DensityEstimate, c: float, lo: float, N: int) -> tuple[float, np.ndarray]:
    if c <= lo:
        return 0.0, np.zeros(est.samples.size)
    nodes, weights = _trapezoid_nodes(lo, c, N)
    density, grad = pdf_and_grad(est, nodes, weights)
    raw = float(weights @ density)
    if raw <= 0.0:
        return 0.0, np.zeros(est.samples.size)
    if raw >= 1.0:
        return 1.0, np.zeros(est.samples.size)
    return raw, grad


def cdf_lower_limit(batch: ScoreBatch, cfg: OverlapLossConfig) -> float:
    combined_min = min(batch.s_n.min(), batch.s_a.min())
    return float(combined_min - cfg.cdf_tail_width * cfg.bandwidth)


def overlap_area(batch: ScoreBatch, c: float, cfg: OverlapLossConfig, lo: float | None = None) -> tuple[float, np.ndarray]:
    """``1 - F_n(c) + F_a(c)`` for a fixed intersection point ``c``."""
    if lo is None:
        lo = cdf_lower_limit(batch, cfg)
    lo = min(lo, c)
    est_n = DensityEstimate(batch.s_n, cfg.bandwidth)
    est_a = DensityEstimate(batch.s_a, cfg.bandwidth)
    f_n, g_n = _clamped_cdf(est_n, c, lo, cfg.N)
    f_a, g_a = _clamped_cdf(est_a, c, lo, cfg.N)
    return 1.0 - f_n + f_a, np.concatenate([-g_n, g_a])


def overlap_loss(
    batch: ScoreBatch,
    cfg: OverlapLossConfig = OverlapLossConfig(),
    rng: np.random.Generator | None = None,
    intersection: IntersectionResult | None = None,
    lo: float | None = None,
) -> tuple[float, np.ndarray]:
    """Overlap loss of a score batch.

    Pass ``intersection`` to reuse a previous intersection search, which
    freezes the selected point(s), and ``lo`` to pin the lower integration
    limit. Both are constants for differentiation anyway; pinning them makes
    the loss itself comparable under finite differences.
    """
    if intersection is None:
        intersection = find_intersections(batch, cfg, rng)
    if lo is None:
        lo = cdf_lower_limit(batch, cfg)
    cs = intersection.active
    total = 0.0
    grads = np.zeros(batch.s_n.size + batch.s_a.size)
    for c in cs:
        loss, g = overlap_area(batch, float(c), cfg, lo)
        total += loss
        grads += g
    return total / cs.size, grads / cs.size


def overlap_arbitrary(
    batch: ScoreBatch, cfg: OverlapLossConfig = OverlapLossConfig(), grid: ScoreGrid | None = None
) -> tuple[float, np.ndarray]:
    """Integral of the pointwise minimum of the two densities.

    ``grid`` defaults to the grid over the combined score range.
    """
    if grid is None:
        grid = make_grid(batch.s_n, batch.s_a, cfg.N)
    est_n = DensityEstimate(batch.s_n, cfg.bandwidth)
    est_a = DensityEstimate(batch.s_a, cfg.bandwidth)
    f_n = pdf_at(est_n, grid.points)
    f_a = pdf_at(est_a, grid.points)
    weights = np.full(grid.points.size, grid.spacing)
    weights[[0, -1]] *= 0.5
    normal_active = f_n <= f_a
    loss = float(weights @ np.where(normal_active, f_n, f_a))
    g_n = pdf_grad_wrt_samples(est_n, grid.points, weights * normal_active)
    g_a = pdf_grad_wrt_samples(est_a, grid.points, weights * ~normal_active)
    return loss, np.concatenate([g_n, g_a])


def ranking_term(batch: ScoreBatch) -> tuple[float, np.ndarray]:
    """Mean over all cross pairs of ``max(0, s_n - s_a)``."""
    gap = batch.s_n[:, None] - batch.s_a[None, :]
    active = gap > 0
    n_pairs = gap.size
    loss = float(np.where(active, gap, 0.0).sum() / n_pairs)
    g_n = active.sum(axis=1) / n_pairs
    g_a = -active.sum(axis=0) / n_pairs
    return loss, np.concatenate([g_n, g_a])


def overlap_combined(
    batch: ScoreBatch, cfg: OverlapLossConfig = OverlapLossConfig(), grid: ScoreGrid | None = None
) -> tuple[float, np.ndarray]:
    l1, g1 = overlap_arbitrary(batch, cfg, grid)
    l2, g2 = ranking_term(batch)
    return l1 + l2, g1 + g2


def overlap_gaussian(batch: ScoreBatch) -> tuple[float, np.ndarray]:
    """Overlap of Gaussians fitted to each side by sample moments.

    The intersection point is held constant; gradients flow through the
    fitted means and standard deviations.
    """
    if batch.s_n.size < 2 or batch.s_a.size < 2:
        raise ValueError("each side needs at least two scores")
    mu_n, sd_n = batch.s_n.mean(), batch.s_n.std(ddof=1)
    mu_a, sd_a = batch.s_a.mean(), batch.s_a.std(ddof=1)
    if sd_n <= 0 or sd_a <= 0:
        raise DegenerateBatchError("zero score variance on one side")
    c = gaussian_intersection(mu_n, sd_n, mu_a, sd_a)
    z_n = (c - mu_n) / sd_n
    z_a = (c - mu_a) / sd_a
    loss = float(1.0 - ndtr(z_n) + ndtr(z_a))

    pdf = lambda z: np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)  # noqa: E731
    # d/dmu Phi((c - mu)/sd) = -phi/sd ; d/dsd = -phi*z/sd
    dmu_n, dsd_n = pdf(z_n) / sd_n, pdf(z_n) * z_n / sd_n
    dmu_a, dsd_a = -pdf(z_a) / sd_a, -pdf(z_a) * z_a / sd_a

    def through_moments(s, mu, sd, dmu, dsd):
        n = s.size
        return dmu / n + dsd * (s - mu) / ((n - 1) * sd)

    return loss, np.concatenate([
        through_moments(batch.s_n, mu_n, sd_n, dmu_n, dsd_n),
        through_moments(batch.s_a, mu_a, sd_a, dmu_a, dsd_a),
    ])


__all__ = [
    "DegenerateBatchError",
    "IntersectionResult",
    "OverlapLossConfig",
    "ScoreBatch",
    "cdf_lower_limit",
    "find_intersections",
    "gaussian_intersection",
    "overlap_area",
    "overlap_arbitrary",
    "overlap_combined",
    "overlap_gaussian",
    "overlap_loss",
    "ranking_term",
    "trapezoid_cdf",
]
