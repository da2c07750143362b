"""Ranking metrics and the paired Wilcoxon signed-rank test."""
from __future__ import annotations

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

EXACT_MAX_N = 25


def _check_binary(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).astype(np.int64).ravel()
    if s.size != y.size:
        raise ValueError("scores and labels differ in length")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return s, y


def auc_roc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative (ties count 1/2)."""
    s, y = _check_binary(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC-ROC needs both classes")
    ranks = rankdata(s)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def auc_pr(scores, labels) -> float:
    """Average precision over the descending-score ranking.

    Ties are broken by input order (stable sort).
    """
    s, y = _check_binary(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("AUC-PR needs at least one positive")
    order = np.argsort(-s, kind="stable")
    hits = y[order]
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, hits.size + 1)
    return float(precision[hits == 1].sum() / n_pos)


def _signed_rank_null_counts(doubled_ranks: np.ndarray) -> np.ndarray:
    """Number of sign patterns giving each value of 2 * W+."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: counts.size - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(x, y, alternative: str = "greater", method: str = "auto") -> tuple[float, float]:
    """Paired signed-rank test on ``d = x - y``.

    Returns ``(W+, p)`` where W+ sums the ranks of positive differences.
    Zero differences are dropped and tied ``|d|`` share average ranks. The
    null distribution is exact (enumerated by dynamic programming) for up to
    25 pairs and a tie- and continuity-corrected normal approximation above.
    """
    if alternative not in ("greater", "less", "two-sided"):
        raise ValueError(f"unknown alternative {alternative!r}")
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ValueError("x and y must have equal length")
    d = x - y
    d = d[d != 0]
    n = d.size
    if n == 0:
        raise ValueError("all paired differences are zero")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())

    if method == "auto":
        method = "exact" if n <= EXACT_MAX_N else "approx"

    if method == "exact":
        doubled = np.rint(2 * ranks).astype(np.int64)
        counts = _signed_rank_null_counts(doubled)
        obs = int(round(2 * w_plus))
        total = float(2**n)
        p_greater = counts[obs:].sum() / total
        p_less = counts[: obs + 1].sum() / total
    elif method == "approx":
        mean = n * (n + 1) / 4.0
        _, tie_sizes = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_sizes**3 - tie_sizes) / 48.0
        sd = np.sqrt(var)
        p_greater = float(ndtr(-(w_plus - mean - 0.5) / sd))
        p_less = float(ndtr((w_plus - mean + 0.5) / sd))
    else:
        raise ValueError(f"unknown method {method!r}")

    if alternative == "greater":
        p = p_greater
    elif alternative == "less":
        p = p_less
    else:
        p = min(1.0, 2 * min(p_greater, p_less))
    return w_plus, float(p)
