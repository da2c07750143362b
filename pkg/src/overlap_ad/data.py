"""Datasets, the stratified split protocol, label revealing and batch sampling."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator

import numpy as np


@dataclass(frozen=True)
class LabeledDataset:
    """Features plus true labels and a mask of which labels training may see.

    Only anomalies are ever revealed, so ``visibility`` implies ``labels``.
    ``index`` holds each row's position in the dataset it was split from.
    """

    features: np.ndarray
    labels: np.ndarray
    visibility: np.ndarray | None = None
    index: np.ndarray | None = None
    name: str = "dataset"

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        if x.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        y = np.asarray(self.labels).astype(np.int64).ravel()
        if y.size != x.shape[0]:
            raise ValueError("one label per row required")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        vis = np.zeros_like(y) if self.visibility is None else np.asarray(self.visibility).astype(np.int64).ravel()
        if vis.size != y.size:
            raise ValueError("one visibility flag per row required")
        if np.any((vis == 1) & (y == 0)):
            raise ValueError("only anomalies may have visible labels")
        idx = np.arange(y.size) if self.index is None else np.asarray(self.index, dtype=np.int64)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "visibility", vis)
        object.__setattr__(self, "index", idx)

    def __len__(self) -> int:
        return self.labels.size

    @property
    def n_anomalies(self) -> int:
        return int(self.labels.sum())

    @property
    def unlabeled(self) -> np.ndarray:
        """Feature rows of the unlabeled pool (may contain hidden anomalies)."""
        return self.features[self.visibility == 0]

    @property
    def labeled_anomalies(self) -> np.ndarray:
        return self.features[self.visibility == 1]

    def subset(self, rows) -> "LabeledDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return LabeledDataset(self.features[rows], self.labels[rows], self.visibility[rows], self.index[rows], self.name)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    gamma_l: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie strictly between 0 and 1")
        if not 0 <= self.gamma_l <= 1:
            raise ValueError("gamma_l must lie in [0, 1]")


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def load_csv(path, name: str | None = None) -> LabeledDataset:
    """Numeric feature columns followed by a 0/1 label column.

    A first line with any non-numeric field is taken as a header.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(f.strip() for f in r)]
    if rows and not all(_is_number(f) for f in rows[0]):
        rows = rows[1:]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    width = len(rows[0])
    if width < 2:
        raise ValueError(f"{path}: need at least one feature column and a label column")
    values = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"{path}: row {i + 1} has {len(row)} fields, expected {width}")
        try:
            values[i] = [float(f) for f in row]
        except ValueError as exc:
            raise ValueError(f"{path}: row {i + 1} is not numeric") from exc
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{path}: NaN or infinite values are not allowed")
    labels = values[:, -1]
    if not np.isin(labels, (0.0, 1.0)).all():
        raise ValueError(f"{path}: labels must be 0 or 1")
    return LabeledDataset(values[:, :-1], labels.astype(np.int64), name=name or path.stem)


def write_csv(ds: LabeledDataset, path) -> None:
    path = Path(path)
    header = [f"x{j}" for j in range(ds.features.shape[1])] + ["label"]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row, y in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in row] + [int(y)])


def stratified_split(ds: LabeledDataset, spec: SplitSpec) -> tuple[LabeledDataset, LabeledDataset]:
    rng = np.random.default_rng(spec.seed)
    train_rows, test_rows = [], []
    for cls in (0, 1):
        members = np.flatnonzero(ds.labels == cls)
        if members.size == 0:
            raise ValueError(f"class {cls} has no members")
        members = rng.permutation(members)
        k = _round_half_up(spec.train_fraction * members.size)
        train_rows.append(members[:k])
        test_rows.append(members[k:])
    train = ds.subset(np.sort(np.concatenate(train_rows)))
    test = ds.subset(np.sort(np.concatenate(test_rows)))
    return train, test


def reveal_labels(train: LabeledDataset, gamma_l: float, seed: int) -> LabeledDataset:
    """Reveal the labels of a ``gamma_l`` fraction of the training anomalies.

    At least one anomaly is revealed whenever ``gamma_l > 0``; the rest stay
    in the unlabeled pool as contamination.
    """
    anomalies = np.flatnonzero(train.labels == 1)
    if anomalies.size == 0:
        raise ValueError("training set contains no anomalies")
    m = _round_half_up(gamma_l * anomalies.size)
    if gamma_l > 0:
        m = max(m, 1)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(anomalies, size=m, replace=False)
    vis = np.zeros_like(train.labels)
    vis[chosen] = 1
    return replace(train, visibility=vis)


def zscore_fit_apply(train: LabeledDataset, test: LabeledDataset):
    """Standardize both sets with training statistics.

    Returns ``(train, test, (mean, std))``; zero-variance features become 0.
    """
    if len(train) == 0:
        raise ValueError("empty training set")
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    safe = np.where(std > 0, std, 1.0)

    def apply(ds):
        z = (ds.features - mean) / safe
        z[:, std == 0] = 0.0
        return replace(ds, features=z)

    return apply(train), apply(test), (mean, std)


def sample_batch(train: LabeledDataset, batch_size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One balanced batch: half unlabeled rows, half labeled anomalies.

    Unlabeled rows are drawn without replacement, labeled anomalies with
    replacement since there are usually only a handful.
    """
    pool_n, pool_a = train.unlabeled, train.labeled_anomalies
    if len(pool_a) == 0:
        raise ValueError("no labeled anomalies to sample from")
    half = batch_size // 2
    rows_n = rng.choice(len(pool_n), size=min(half, len(pool_n)), replace=False)
    rows_a = rng.integers(len(pool_a), size=batch_size - half)
    return pool_n[rows_n], pool_a[rows_a]


def epoch_batches(train: LabeledDataset, batch_size: int, rng: np.random.Generator) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Batches for one pass over the unlabeled pool.

    The pool is permuted once per epoch and cut into ``batch_size // 2``
    sized chunks (a short remainder is dropped); each chunk is paired with
    as many labeled anomalies drawn with replacement.
    """
    pool_n, pool_a = train.unlabeled, train.labeled_anomalies
    if len(pool_a) == 0:
        raise ValueError("no labeled anomalies to sample from")
    half = batch_size // 2
    order = rng.permutation(len(pool_n))
    n_batches = max(1, len(pool_n) // half)
    for b in range(n_batches):
        rows_n = order[b * half : (b + 1) * half]
        rows_a = rng.integers(len(pool_a), size=half)
        yield pool_n[rows_n], pool_a[rows_a]
