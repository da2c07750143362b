"""Finite-difference oracle shared by the unit and acceptance tests.

Every quantity the losses treat as a constant for differentiation
(intersection point, integration grid, z-scoring reference) is computed once
from the unperturbed scores and then pinned, so the central differences see
the same function the analytic gradient describes.
"""
from __future__ import annotations

import numpy as np

from overlap_ad import baselines as bl
from overlap_ad import overlap as ov
from overlap_ad.autonn import backward, forward, init_network
from overlap_ad.bench import LOSSES, OVERLAP_LOSSES
from overlap_ad.kde import make_grid

STEP = 1e-5
# gradients below this magnitude are compared absolutely
FLOOR = 1e-6
KINK_GAP = 1e-3


def rel_err(analytic, numeric) -> np.ndarray:
    a, n = np.asarray(analytic, float), np.asarray(numeric, float)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), FLOOR)


def central_diff(f, x: np.ndarray, step: float = STEP) -> np.ndarray:
    x = np.array(x, dtype=float)
    out = np.empty_like(x)
    flat, g = x.reshape(-1), out.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        up = f(x)
        flat[i] = keep - step
        down = f(x)
        flat[i] = keep
        g[i] = (up - down) / (2 * step)
    return out


def frozen_score_loss(loss: str, scores0: np.ndarray, n_normal: int, rng: np.random.Generator,
                      ocfg=ov.OverlapLossConfig(), bcfg=bl.BaselineConfig(), targets=None):
    """Return ``f(scores) -> (value, grad)`` with detached quantities pinned at ``scores0``."""
    b0 = ov.ScoreBatch.from_scores(scores0, n_normal) if loss != "ordinal" else None
    if loss == "overlap":
        inter = ov.find_intersections(b0, ocfg, rng)
        lo = ov.cdf_lower_limit(b0, ocfg)
        return lambda s: ov.overlap_loss(ov.ScoreBatch.from_scores(s, n_normal), ocfg, intersection=inter, lo=lo)
    if loss in ("overlap_arbitrary", "overlap_combined"):
        grid = make_grid(b0.s_n, b0.s_a, ocfg.N)
        fn = ov.overlap_arbitrary if loss == "overlap_arbitrary" else ov.overlap_combined
        return lambda s: fn(ov.ScoreBatch.from_scores(s, n_normal), ocfg, grid)
    if loss == "overlap_ranking":
        return lambda s: ov.ranking_term(ov.ScoreBatch.from_scores(s, n_normal))
    if loss == "overlap_gaussian":
        return lambda s: ov.overlap_gaussian(ov.ScoreBatch.from_scores(s, n_normal))
    if loss == "minus":
        return lambda s: bl.minus_loss(ov.ScoreBatch.from_scores(s, n_normal), bcfg)
    if loss == "inverse":
        return lambda s: bl.inverse_loss(ov.ScoreBatch.from_scores(s, n_normal))
    if loss == "hinge":
        return lambda s: bl.hinge_loss(ov.ScoreBatch.from_scores(s, n_normal), bcfg)
    if loss == "deviation":
        ref = bl.deviation_reference(bcfg, rng)
        return lambda s: bl.deviation_loss(ov.ScoreBatch.from_scores(s, n_normal), bcfg, reference=ref)
    if loss == "ordinal":
        return lambda s: bl.ordinal_loss(s, targets)
    raise ValueError(loss)


def kink_distance(loss: str, s: np.ndarray, n_normal: int, bcfg=bl.BaselineConfig(), targets=None, ref=None) -> float:
    """Distance of the scores from the nearest non-differentiable point of ``loss``."""
    s_n, s_a = s[:n_normal], s[n_normal:]
    if loss in ("minus", "inverse"):
        gaps = [s_n, s_a] + ([bcfg.bnd - np.abs(s_a)] if loss == "minus" else [])
    elif loss == "hinge":
        gaps = [bcfg.margin + s_n[:, None] - s_a[None, :]]
    elif loss == "overlap_ranking" or loss == "overlap_combined":
        gaps = [s_n[:, None] - s_a[None, :]]
    elif loss == "deviation":
        mu, sd = ref
        gaps = [(s_n - mu) / sd, bcfg.margin - (s_a - mu) / sd]
    elif loss == "ordinal":
        gaps = [s - targets]
    else:
        return np.inf
    return float(min(np.min(np.abs(g)) for g in gaps))


def network_instance(loss: str, seed: int, d: int = 3, hidden: int = 5):
    """A random small network, input batch and (for ordinal) pair targets.

    Instances too close to a ReLU or loss kink are redrawn.
    """
    rng = np.random.default_rng(seed)
    in_dim = 2 * d if loss == "ordinal" else d
    while True:
        net = init_network(in_dim, hidden, int(rng.integers(2**31)), batch_norm=loss in OVERLAP_LOSSES)
        n_n, n_a = int(rng.integers(3, 9)), int(rng.integers(3, 9))
        if loss == "ordinal":
            x = rng.normal(size=(n_n + n_a, in_dim))
            targets = rng.choice([0.0, 4.0, 8.0], size=n_n + n_a)
        else:
            x = np.vstack([rng.normal(size=(n_n, d)), rng.normal(1.0, 1.5, size=(n_a, d))])
            targets = None
        scores, cache = forward(net, x, "train")
        if np.min(np.abs(cache.pre_act)) < KINK_GAP:
            continue
        ref = bl.deviation_reference(bl.BaselineConfig(), np.random.default_rng(seed + 1)) if loss == "deviation" else None
        if kink_distance(loss, scores, n_n, targets=targets, ref=ref) < KINK_GAP:
            continue
        return net, x, n_n, targets


def check_network_gradient(loss: str, seed: int) -> float:
    """Max elementwise relative error of the parameter gradient for one instance."""
    if loss not in LOSSES:
        raise ValueError(loss)
    net, x, n_n, targets = network_instance(loss, seed)
    scores0, cache = forward(net, x, "train")
    f = frozen_score_loss(loss, scores0, n_n, np.random.default_rng(seed + 1), targets=targets)
    _, g_scores = f(scores0)
    analytic = backward(net, cache, g_scores)
    worst = 0.0
    for name, p in net.params().items():

        def value(_, name=name):
            return f(forward(net, x, "train")[0])[0]

        numeric = central_diff_inplace(value, p)
        worst = max(worst, float(rel_err(analytic[name], numeric).max()))
    return worst


def central_diff_inplace(f, p: np.ndarray, step: float = STEP) -> np.ndarray:
    """Central differences of ``f`` w.r.t. the array ``p`` perturbed in place."""
    out = np.empty_like(p)
    flat, g = p.reshape(-1), out.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        up = f(p)
        flat[i] = keep - step
        down = f(p)
        flat[i] = keep
        g[i] = (up - down) / (2 * step)
    return out
