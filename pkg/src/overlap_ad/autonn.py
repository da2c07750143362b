"""Small dense scorer network with hand-written backprop and SGD.

The network maps ``x -> ReLU(x W_t + b_t) -> h w_s + b_s -> BatchNorm`` and
produces one anomaly score per row. Batch normalization is non-affine (no
learned scale or shift) so that the downstream density estimate always sees
standardized scores.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PARAM_NAMES = ("rep_weights", "rep_bias", "score_weights", "score_bias")


@dataclass
class ScorerNetwork:
    rep_weights: np.ndarray
    rep_bias: np.ndarray
    score_weights: np.ndarray
    score_bias: np.ndarray
    running_mean: float = 0.0
    running_var: float = 1.0
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    batch_norm: bool = True
    activation: str = "relu"
    # bumped on every parameter update so stale caches can be detected
    version: int = field(default=0, compare=False)

    @property
    def input_dim(self) -> int:
        return self.rep_weights.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.rep_weights.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "ScorerNetwork":
        return ScorerNetwork(
            **{name: arr.copy() for name, arr in self.params().items()},
            running_mean=self.running_mean,
            running_var=self.running_var,
            bn_momentum=self.bn_momentum,
            bn_eps=self.bn_eps,
            batch_norm=self.batch_norm,
            activation=self.activation,
            version=self.version,
        )


@dataclass
class OptimizerState:
    learning_rate: float = 0.001
    momentum: float = 0.7
    weight_decay: float = 0.01
    velocity: dict[str, np.ndarray] | None = None

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


@dataclass
class ForwardCache:
    net_id: int
    net_version: int
    mode: str
    x: np.ndarray
    pre_act: np.ndarray
    hidden: np.ndarray
    raw: np.ndarray
    normed: np.ndarray
    std: float


def init_network(input_dim: int, hidden_dim: int, seed: int, batch_norm: bool = True) -> ScorerNetwork:
    """Uniform fan-in initialization, zero biases, fresh batch-norm stats."""
    if input_dim < 1 or hidden_dim < 1:
        raise ValueError(f"dimensions must be positive, got ({input_dim}, {hidden_dim})")
    rng = np.random.default_rng(seed)
    bound_t = 1.0 / np.sqrt(input_dim)
    bound_s = 1.0 / np.sqrt(hidden_dim)
    return ScorerNetwork(
        rep_weights=rng.uniform(-bound_t, bound_t, size=(input_dim, hidden_dim)),
        rep_bias=np.zeros(hidden_dim),
        score_weights=rng.uniform(-bound_s, bound_s, size=hidden_dim),
        score_bias=np.zeros(1),
        batch_norm=batch_norm,
    )


def representation(net: ScorerNetwork, batch: np.ndarray) -> np.ndarray:
    """Hidden-layer (post-ReLU) embedding of each row."""
    batch = _check_batch(net, batch)
    return np.maximum(batch @ net.rep_weights + net.rep_bias, 0.0)


def forward(net: ScorerNetwork, batch: np.ndarray, mode: str = "train") -> tuple[np.ndarray, ForwardCache]:
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    x = _check_batch(net, batch)
    if mode == "train" and net.batch_norm and x.shape[0] < 2:
        raise ValueError("train-mode batch normalization needs at least 2 rows")

    pre_act = x @ net.rep_weights + net.rep_bias
    hidden = np.maximum(pre_act, 0.0)
    raw = hidden @ net.score_weights + net.score_bias[0]

    if not net.batch_norm:
        normed, std = raw, 1.0
    elif mode == "train":
        mean = raw.mean()
        var = raw.var()
        std = float(np.sqrt(var + net.bn_eps))
        normed = (raw - mean) / std
        n = raw.shape[0]
        m = net.bn_momentum
        net.running_mean = (1 - m) * net.running_mean + m * float(mean)
        net.running_var = (1 - m) * net.running_var + m * float(var) * n / (n - 1)
    else:
        std = float(np.sqrt(net.running_var + net.bn_eps))
        normed = (raw - net.running_mean) / std

    cache = ForwardCache(id(net), net.version, mode, x, pre_act, hidden, raw, normed, std)
    return normed, cache


def backward(net: ScorerNetwork, cache: ForwardCache, score_grads: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a loss w.r.t. every parameter given dL/dscore."""
    if cache.net_id != id(net) or cache.net_version != net.version:
        raise ValueError("stale or mismatched forward cache")
    g = np.asarray(score_grads, dtype=float)
    if g.shape != cache.normed.shape:
        raise ValueError(f"score_grads has shape {g.shape}, expected {cache.normed.shape}")

    if not net.batch_norm:
        d_raw = g
    elif cache.mode == "train":
        xhat = cache.normed
        d_raw = (g - g.mean() - xhat * np.mean(g * xhat)) / cache.std
    else:
        d_raw = g / cache.std

    d_hidden = np.outer(d_raw, net.score_weights)
    d_pre = d_hidden * (cache.pre_act > 0)
    return {
        "rep_weights": cache.x.T @ d_pre,
        "rep_bias": d_pre.sum(axis=0),
        "score_weights": cache.hidden.T @ d_raw,
        "score_bias": np.array([d_raw.sum()]),
    }


def sgd_step(net: ScorerNetwork, grads: dict[str, np.ndarray], opt: OptimizerState) -> None:
    """In-place SGD update with momentum and L2 weight decay."""
    params = net.params()
    if opt.velocity is None:
        opt.velocity = {name: np.zeros_like(p) for name, p in params.items()}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        v = opt.momentum * opt.velocity[name] + (g + opt.weight_decay * p)
        opt.velocity[name] = v
        p -= opt.learning_rate * v
    net.version += 1


def param_change_norm(net: ScorerNetwork, net0: ScorerNetwork) -> float:
    """Sum over parameter arrays of the squared distance to ``net0``."""
    total = 0.0
    for name, p in net.params().items():
        p0 = getattr(net0, name)
        if p.shape != p0.shape:
            raise ValueError(f"shape mismatch for {name}: {p.shape} vs {p0.shape}")
        total += float(np.sum((p - p0) ** 2))
    return total


def _check_batch(net: ScorerNetwork, batch) -> np.ndarray:
    x = np.asarray(batch, dtype=float)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(f"batch shape {x.shape} incompatible with input_dim={net.input_dim}")
    return x
