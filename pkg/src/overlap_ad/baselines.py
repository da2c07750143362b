"""Decoupled anomaly-detection losses evaluated on raw network scores.

Each loss uses a mean reduction (per sample, or per cross pair for the
hinge loss) so its value does not depend on batch size.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .overlap import ScoreBatch

INVERSE_EPS = 1e-6


@dataclass(frozen=True)
class BaselineConfig:
    bnd: float = 5.0
    margin: float = 5.0
    mu_nn: float = 0.0
    mu_an: float = 4.0
    mu_aa: float = 8.0
    deviation_draws: int = 5000
    # "reference": z-score against N(0, 1) draws; "batch": against batch moments
    deviation_reference: str = "reference"

    def __post_init__(self):
        if self.bnd <= 0 or self.margin <= 0:
            raise ValueError("BND and M must be positive")
        if self.deviation_draws < 2:
            raise ValueError("deviation_draws must be at least 2")
        if self.deviation_reference not in ("reference", "batch"):
            raise ValueError(f"unknown deviation_reference {self.deviation_reference!r}")


@dataclass(frozen=True)
class PairBatch:
    features: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        if self.features.shape[0] == 0 or self.features.shape[0] != self.targets.size:
            raise ValueError("pair batch must be non-empty with one target per pair")


def minus_loss(batch: ScoreBatch, cfg: BaselineConfig = BaselineConfig()) -> tuple[float, np.ndarray]:
    s_n, s_a = batch.s_n, batch.s_a
    short = cfg.bnd - np.abs(s_a)
    loss = np.abs(s_n).mean() + np.maximum(short, 0.0).mean()
    g_n = np.sign(s_n) / s_n.size
    g_a = np.where(short > 0, -np.sign(s_a), 0.0) / s_a.size
    return float(loss), np.concatenate([g_n, g_a])


def inverse_loss(batch: ScoreBatch) -> tuple[float, np.ndarray]:
    s_n, s_a = batch.s_n, batch.s_a
    mag = np.abs(s_a) + INVERSE_EPS
    loss = np.abs(s_n).mean() + (1.0 / mag).mean()
    g_n = np.sign(s_n) / s_n.size
    g_a = -np.sign(s_a) / (mag * mag) / s_a.size
    return float(loss), np.concatenate([g_n, g_a])


def hinge_loss(batch: ScoreBatch, cfg: BaselineConfig = BaselineConfig()) -> tuple[float, np.ndarray]:
    """Mean over all (normal, anomaly) pairs of ``max(0, M + s_n - s_a)``."""
    slack = cfg.margin + batch.s_n[:, None] - batch.s_a[None, :]
    active = slack > 0
    n_pairs = slack.size
    loss = np.where(active, slack, 0.0).sum() / n_pairs
    g_n = active.sum(axis=1) / n_pairs
    g_a = -active.sum(axis=0) / n_pairs
    return float(loss), np.concatenate([g_n, g_a])


def deviation_reference(cfg: BaselineConfig, rng: np.random.Generator) -> tuple[float, float]:
    ref = rng.standard_normal(cfg.deviation_draws)
    return float(ref.mean()), float(ref.std())


def deviation_loss(
    batch: ScoreBatch,
    cfg: BaselineConfig = BaselineConfig(),
    rng: np.random.Generator | None = None,
    reference: tuple[float, float] | None = None,
) -> tuple[float, np.ndarray]:
    """Deviation loss on z-scored anomaly scores.

    The z-scoring moments are constants for differentiation. They come from
    ``reference`` if given, otherwise from fresh standard-normal draws (or
    from the batch itself when ``cfg.deviation_reference == "batch"``).
    """
    if reference is None:
        if cfg.deviation_reference == "batch":
            both = np.concatenate([batch.s_n, batch.s_a])
            reference = (float(both.mean()), float(both.std()) or 1.0)
        else:
            if rng is None:
                raise ValueError("deviation loss needs an rng to draw its reference sample")
            reference = deviation_reference(cfg, rng)
    mu, sd = reference
    z_n = (batch.s_n - mu) / sd
    z_a = (batch.s_a - mu) / sd
    short = cfg.margin - z_a
    loss = np.abs(z_n).mean() + np.maximum(short, 0.0).mean()
    g_n = np.sign(z_n) / (sd * z_n.size)
    g_a = np.where(short > 0, -1.0, 0.0) / (sd * z_a.size)
    return float(loss), np.concatenate([g_n, g_a])


def build_pairs(x_n: np.ndarray, x_a: np.ndarray, pairs_per_type: int, cfg: BaselineConfig, rng: np.random.Generator) -> PairBatch:
    """Sample (normal, normal), (anomaly, normal) and (anomaly, anomaly) pairs."""
    x_n = np.asarray(x_n, dtype=float)
    x_a = np.asarray(x_a, dtype=float)
    if len(x_n) == 0 or len(x_a) == 0:
        raise ValueError("pair construction needs at least one sample of each class")
    if pairs_per_type < 1:
        raise ValueError("pairs_per_type must be positive")
    k = pairs_per_type
    draw_n = lambda: x_n[rng.integers(len(x_n), size=k)]  # noqa: E731
    draw_a = lambda: x_a[rng.integers(len(x_a), size=k)]  # noqa: E731
    nn = np.hstack([draw_n(), draw_n()])
    an = np.hstack([draw_a(), draw_n()])
    aa = np.hstack([draw_a(), draw_a()])
    targets = np.repeat([cfg.mu_nn, cfg.mu_an, cfg.mu_aa], k).astype(float)
    return PairBatch(np.vstack([nn, an, aa]), targets)


def ordinal_loss(pair_scores, pair_targets) -> tuple[float, np.ndarray]:
    """Mean absolute deviation of pair scores from their ordinal targets."""
    s = np.asarray(pair_scores, dtype=float).ravel()
    t = np.asarray(pair_targets, dtype=float).ravel()
    if s.size != t.size:
        raise ValueError(f"{s.size} pair scores but {t.size} targets")
    r = s - t
    return float(np.abs(r).mean()), np.sign(r) / s.size


def ordinal_pair_features(x: np.ndarray, anchors_n: np.ndarray, anchors_a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pairs for scoring test rows: ``(anchor_a, x)`` and ``(x, anchor_n)``.

    Averaging the scores of both pair kinds yields a score that is high for
    anomalies (targets 8 and 4) and low for normals (targets 4 and 0).
    """
    x = np.asarray(x, dtype=float)
    n, e_a, e_n = len(x), len(anchors_a), len(anchors_n)
    with_a = np.hstack([np.repeat(anchors_a[None], n, axis=0).reshape(n * e_a, -1), np.repeat(x, e_a, axis=0)])
    with_n = np.hstack([np.repeat(x, e_n, axis=0), np.repeat(anchors_n[None], n, axis=0).reshape(n * e_n, -1)])
    return with_a, with_n
