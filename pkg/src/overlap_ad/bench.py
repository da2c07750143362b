"""Experiment harness: configs, training loop, evaluation, suites and reports."""
from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import baselines as bl
from . import overlap as ov
from .autonn import (
    OptimizerState,
    ScorerNetwork,
    backward,
    forward,
    init_network,
    param_change_norm,
    representation,
    sgd_step,
)
from .data import LabeledDataset, SplitSpec, epoch_batches, load_csv, reveal_labels, stratified_split, zscore_fit_apply
from .kde import DegenerateBatchError
from .metrics import auc_pr, auc_roc, wilcoxon_signed_rank
from .synth import SynthSpec, make_synthetic_dataset, two_blob_source

log = logging.getLogger(__name__)

OVERLAP_LOSSES = ("overlap", "overlap_arbitrary", "overlap_ranking", "overlap_combined", "overlap_gaussian")
BASELINE_LOSSES = ("minus", "inverse", "hinge", "deviation", "ordinal")
LOSSES = OVERLAP_LOSSES + BASELINE_LOSSES
# losses whose scores are trained toward a magnitude rather than a direction
ABS_SCORED = ("minus", "inverse")


class TrainingAborted(RuntimeError):
    pass


@dataclass
class NetworkConfig:
    hidden_dim: int = 20
    epochs: int = 20
    batch_size: int = 256
    lr: float = 0.001
    momentum: float = 0.7
    weight_decay: float = 0.01
    # True, False, or "auto" (on for the overlap family, off for baselines)
    batch_norm: bool | str = "auto"
    # cap on the global L2 norm of each parameter gradient; None disables
    grad_clip: float | None = 10.0


@dataclass
class ExperimentConfig:
    loss: str = "overlap"
    dataset: dict = field(default_factory=lambda: {"synth": {"type": "clustered"}})
    network: NetworkConfig = field(default_factory=NetworkConfig)
    overlap: dict = field(default_factory=dict)
    baseline: dict = field(default_factory=dict)
    gamma_l: float = 0.1
    train_fraction: float = 0.7
    repeats: int = 5
    seed: int = 0
    name: str | None = None
    ordinal_anchors: int = 30
    record_timing: bool = False
    output: str | None = None

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}; expected one of {LOSSES}")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if isinstance(self.network, dict):
            self.network = NetworkConfig(**self.network)
        # validate eagerly
        self.overlap_config()
        self.baseline_config()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("output", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def overlap_config(self) -> ov.OverlapLossConfig:
        return ov.OverlapLossConfig(**self.overlap)

    def baseline_config(self) -> bl.BaselineConfig:
        return bl.BaselineConfig(**self.baseline)

    def uses_batch_norm(self) -> bool:
        bn = self.network.batch_norm
        if bn == "auto":
            return self.loss in OVERLAP_LOSSES
        return bool(bn)

    @property
    def label(self) -> str:
        return self.name or self.loss


@dataclass
class ResultRecord:
    config_hash: str
    name: str
    dataset: str
    loss: str
    seed: int
    gamma_l: float
    auc_roc: float | None = None
    auc_pr: float | None = None
    train_seconds: float | None = None
    final_loss: float | None = None
    param_change_norm: float | None = None
    status: str = "ok"
    error: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class TrainedModel:
    net: ScorerNetwork
    loss: str
    anchors_n: np.ndarray | None = None
    anchors_a: np.ndarray | None = None

    def score(self, X) -> np.ndarray:
        """Anomaly scores (higher = more anomalous) in eval mode."""
        X = np.asarray(X, dtype=float)
        if self.loss == "ordinal":
            with_a, with_n = bl.ordinal_pair_features(X, self.anchors_n, self.anchors_a)
            s_a, _ = forward(self.net, with_a, "eval")
            s_n, _ = forward(self.net, with_n, "eval")
            n = len(X)
            return s_a.reshape(n, -1).mean(axis=1) + s_n.reshape(n, -1).mean(axis=1)
        s, _ = forward(self.net, X, "eval")
        return np.abs(s) if self.loss in ABS_SCORED else s


@dataclass
class TrainHistory:
    epoch_loss: list = field(default_factory=list)
    skipped_batches: int = 0
    grad_norms: list = field(default_factory=list)
    initial_net: ScorerNetwork | None = None


# --- dataset resolution ---------------------------------------------------

def load_dataset(source: dict) -> LabeledDataset:
    """Build a dataset from ``{"path": ...}`` or ``{"synth": {...}}``."""
    if "path" in source:
        return load_csv(source["path"], name=source.get("name"))
    if "synth" in source:
        s = dict(source["synth"])
        src = s.pop("source", "two_blob")
        src_seed = s.pop("source_seed", 0)
        if src == "two_blob":
            X_source = two_blob_source(seed=src_seed)
        else:
            base = load_csv(src)
            X_source = base.features[base.labels == 0]
        spec = SynthSpec(
            anomaly_type=s.pop("type"),
            alpha=s.pop("alpha", None),
            n_normals=s.pop("n_normals", 950),
            anomaly_ratio=s.pop("ratio", 0.05),
            seed=s.pop("seed", 0),
        )
        if s:
            raise ValueError(f"unknown synth keys: {sorted(s)}")
        ds = make_synthetic_dataset(X_source, spec)
        if "name" in source:
            ds = LabeledDataset(ds.features, ds.labels, name=source["name"])
        return ds
    raise ValueError("dataset source needs a 'path' or 'synth' entry")


def prepare_split(ds: LabeledDataset, config: ExperimentConfig, seed: int):
    """Stratified split, label reveal and standardization for one repeat."""
    split_seed, reveal_seed = np.random.SeedSequence(seed).generate_state(2)
    train, test = stratified_split(ds, SplitSpec(config.train_fraction, config.gamma_l, int(split_seed)))
    train = reveal_labels(train, config.gamma_l, int(reveal_seed))
    train, test, _ = zscore_fit_apply(train, test)
    return train, test


# --- training ---------------------------------------------------------------

def _batch_loss(loss: str, batch: ov.ScoreBatch, ocfg, bcfg, rng) -> tuple[float, np.ndarray]:
    if loss == "overlap":
        return ov.overlap_loss(batch, ocfg, rng)
    if loss == "overlap_arbitrary":
        return ov.overlap_arbitrary(batch, ocfg)
    if loss == "overlap_ranking":
        return ov.ranking_term(batch)
    if loss == "overlap_combined":
        return ov.overlap_combined(batch, ocfg)
    if loss == "overlap_gaussian":
        return ov.overlap_gaussian(batch)
    if loss == "minus":
        return bl.minus_loss(batch, bcfg)
    if loss == "inverse":
        return bl.inverse_loss(batch)
    if loss == "hinge":
        return bl.hinge_loss(batch, bcfg)
    if loss == "deviation":
        return bl.deviation_loss(batch, bcfg, rng)
    raise ValueError(f"no score-batch loss named {loss!r}")


def train(config: ExperimentConfig, train_set: LabeledDataset, seed: int = 0) -> tuple[TrainedModel, TrainHistory]:
    """Fixed-epoch mini-batch training of the scorer on one training split."""
    if len(train_set.labeled_anomalies) == 0:
        raise ValueError("training needs at least one labeled anomaly (gamma_l > 0)")
    init_seed, loop_seed = np.random.SeedSequence([seed, 1]).generate_state(2)
    rng = np.random.default_rng(loop_seed)
    nc = config.network
    ocfg, bcfg = config.overlap_config(), config.baseline_config()
    d = train_set.features.shape[1]
    in_dim = 2 * d if config.loss == "ordinal" else d
    net = init_network(in_dim, nc.hidden_dim, int(init_seed), batch_norm=config.uses_batch_norm())
    history = TrainHistory(initial_net=net.copy())
    opt = OptimizerState(nc.lr, nc.momentum, nc.weight_decay)
    pairs_per_type = max(1, nc.batch_size // 3)

    for epoch in range(nc.epochs):
        losses, skipped, total = [], 0, 0
        for x_n, x_a in epoch_batches(train_set, nc.batch_size, rng):
            total += 1
            try:
                if config.loss == "ordinal":
                    pairs = bl.build_pairs(x_n, x_a, pairs_per_type, bcfg, rng)
                    scores, cache = forward(net, pairs.features, "train")
                    value, grads = bl.ordinal_loss(scores, pairs.targets)
                else:
                    scores, cache = forward(net, np.vstack([x_n, x_a]), "train")
                    batch = ov.ScoreBatch.from_scores(scores, len(x_n))
                    value, grads = _batch_loss(config.loss, batch, ocfg, bcfg, rng)
            except DegenerateBatchError as exc:
                skipped += 1
                log.warning("epoch %d: skipped degenerate batch (%s)", epoch, exc)
                continue
            param_grads = backward(net, cache, grads)
            gnorm = np.sqrt(sum(float(np.sum(g * g)) for g in param_grads.values()))
            history.grad_norms.append(gnorm)
            if nc.grad_clip is not None and gnorm > nc.grad_clip:
                param_grads = {k: g * (nc.grad_clip / gnorm) for k, g in param_grads.items()}
            sgd_step(net, param_grads, opt)
            losses.append(value)
        history.skipped_batches += skipped
        if skipped * 2 > total:
            raise TrainingAborted(f"epoch {epoch}: {skipped} of {total} batches were degenerate")
        history.epoch_loss.append(float(np.mean(losses)))

    model = TrainedModel(net, config.loss)
    if config.loss == "ordinal":
        anchor_rng = np.random.default_rng([seed, 2])
        pool_n, pool_a = train_set.unlabeled, train_set.labeled_anomalies
        model.anchors_n = pool_n[anchor_rng.integers(len(pool_n), size=config.ordinal_anchors)]
        model.anchors_a = pool_a[anchor_rng.integers(len(pool_a), size=config.ordinal_anchors)]
    return model, history


def evaluate(model: TrainedModel, test_set: LabeledDataset) -> tuple[float, float]:
    scores = model.score(test_set.features)
    return auc_roc(scores, test_set.labels), auc_pr(scores, test_set.labels)


def run_once(config: ExperimentConfig, ds: LabeledDataset, seed: int) -> ResultRecord:
    record = ResultRecord(config.config_hash(), config.label, ds.name, config.loss, seed, config.gamma_l)
    train_set, test_set = prepare_split(ds, config, seed)
    start = time.perf_counter()
    model, history = train(config, train_set, seed)
    elapsed = time.perf_counter() - start
    record.auc_roc, record.auc_pr = evaluate(model, test_set)
    record.final_loss = history.epoch_loss[-1]
    record.param_change_norm = param_change_norm(model.net, history.initial_net)
    if config.record_timing:
        record.train_seconds = elapsed
    return record


def run_suite(config: ExperimentConfig, out=None, dataset: LabeledDataset | None = None) -> list[ResultRecord]:
    """Run ``config.repeats`` repeats with seeds ``seed, seed + 1, ...``.

    Each record is appended to ``out`` (JSON lines) as soon as it exists.
    Failed repeats are logged and kept as records with ``status="failed"``.
    """
    ds = dataset if dataset is not None else load_dataset(config.dataset)
    records = []
    for r in range(config.repeats):
        seed = config.seed + r
        try:
            rec = run_once(config, ds, seed)
        except (TrainingAborted, ValueError, FloatingPointError) as exc:
            log.error("%s seed %d failed: %s", config.label, seed, exc)
            rec = ResultRecord(config.config_hash(), config.label, ds.name, config.loss, seed,
                               config.gamma_l, status="failed", error=str(exc))
        records.append(rec)
        if out is not None:
            with Path(out).open("a", encoding="utf-8") as fh:
                fh.write(rec.to_json() + "\n")
    return records


def read_records(path) -> list[ResultRecord]:
    with Path(path).open(encoding="utf-8") as fh:
        return [ResultRecord(**json.loads(line)) for line in fh if line.strip()]


# --- reporting --------------------------------------------------------------

def stars(p: float | None) -> str:
    if p is None:
        return ""
    return "***" if p < 0.01 else "**" if p < 0.05 else "*" if p < 0.10 else ""


def report(records, group=("loss", "dataset"), baseline: str = "overlap", metric: str = "auc_pr") -> dict:
    """Aggregate successful records and test ``baseline`` against the rest.

    ``group[0]`` names the compared method; the remaining keys (plus
    ``gamma_l``) identify the paired units of the one-sided Wilcoxon test,
    which compares per-unit means of ``metric``.
    """
    group = tuple(group)
    keys = group if "gamma_l" in group else group + ("gamma_l",)
    ok = [r for r in records if r.status == "ok"]
    cells: dict[tuple, list[float]] = {}
    for r in ok:
        cells.setdefault(tuple(getattr(r, k) for k in keys), []).append(getattr(r, metric))

    rows = []
    for key in sorted(cells, key=lambda k: tuple(map(str, k))):
        vals = np.asarray(cells[key])
        rows.append({**dict(zip(keys, key)), "n": int(vals.size), "mean": float(vals.mean()),
                     "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0})

    means = {tuple(row[k] for k in keys): row["mean"] for row in rows}
    units = sorted({k[1:] for k in means}, key=lambda k: tuple(map(str, k)))
    methods = sorted({k[0] for k in means}, key=str)
    tests = []
    for other in methods:
        if other == baseline:
            continue
        paired = [u for u in units if (baseline, *u) in means and (other, *u) in means]
        x = [means[(baseline, *u)] for u in paired]
        y = [means[(other, *u)] for u in paired]
        p = None
        if paired and any(a != b for a, b in zip(x, y)):
            _, p = wilcoxon_signed_rank(x, y, alternative="greater")
        tests.append({"baseline": baseline, "competitor": other, "n_pairs": len(paired),
                      "p_value": p, "stars": stars(p) if p is not None else "n/a"})
    return {"metric": metric, "keys": list(keys), "rows": rows, "tests": tests}


def format_report(rep: dict) -> str:
    keys = rep["keys"]
    lines = ["\t".join(keys + [f"{rep['metric']} mean", "std", "n"])]
    for row in rep["rows"]:
        lines.append("\t".join([str(row[k]) for k in keys] + [f"{row['mean']:.4f}", f"{row['std']:.4f}", str(row["n"])]))
    lines.append("")
    lines.append("baseline\tcompetitor\tpairs\tp (one-sided)\tmark")
    for t in rep["tests"]:
        p = "n/a" if t["p_value"] is None else f"{t['p_value']:.4g}"
        lines.append(f"{t['baseline']}\t{t['competitor']}\t{t['n_pairs']}\t{p}\t{t['stars']}")
    return "\n".join(lines)


def dump_embeddings(config: ExperimentConfig, out) -> int:
    """Train on the first repeat and write the hidden representation of every test row."""
    ds = load_dataset(config.dataset)
    train_set, test_set = prepare_split(ds, config, config.seed)
    model, _ = train(config, train_set, config.seed)
    X = test_set.features
    if config.loss == "ordinal":
        X_emb, _ = bl.ordinal_pair_features(X, model.anchors_n[:1], model.anchors_a[:1])
        emb = representation(model.net, X_emb)
    else:
        emb = representation(model.net, X)
    scores = model.score(X)
    header = ",".join([f"h{j}" for j in range(emb.shape[1])] + ["score", "label"])
    body = [",".join([repr(float(v)) for v in e] + [repr(float(s)), str(int(y))])
            for e, s, y in zip(emb, scores, test_set.labels)]
    Path(out).write_text("\n".join([header] + body) + "\n", encoding="utf-8")
    return len(body)
