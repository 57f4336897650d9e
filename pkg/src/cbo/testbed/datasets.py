"""Synthetic classification data for desk-scale adversarial experiments."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FEATURE_LO = 0.1
FEATURE_HI = 0.9


@dataclass(frozen=True)
class SyntheticDataset:
    features: np.ndarray   # (N, p) in [0,1]^p
    labels: np.ndarray     # (N,) ints in [0, C)
    n_classes: int

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    @property
    def imbalance_ratio(self) -> float:
        counts = self.class_counts
        return float(counts.min() / counts.max())

    def __len__(self) -> int:
        return self.features.shape[0]


def _class_counts_for_ratio(N: int, C: int, imbalance_ratio: float) -> np.ndarray:
    """Geometric decay of per-class counts hitting the requested min/max ratio."""
    raw = imbalance_ratio ** (np.arange(C) / max(C - 1, 1))
    share = raw / raw.sum()
    counts = np.floor(N * share).astype(int)
    counts = np.maximum(counts, 1)
    remainders = N * share - counts
    while counts.sum() < N:
        k = int(np.argmax(remainders))
        counts[k] += 1
        remainders[k] = -np.inf
    while counts.sum() > N:
        k = int(np.argmax(counts))
        counts[k] -= 1
    return counts


def make_gaussian_blobs(seed: int, N: int, C: int, p: int,
                        imbalance_ratio: float = 1.0,
                        separation: float = 3.0) -> SyntheticDataset:
    """C Gaussian clusters with geometric class-count decay, rescaled into
    [0.1, 0.9]^p so that attack boxes built from the features never degenerate.
    """
    if not 0.0 < imbalance_ratio <= 1.0:
        raise ValueError("imbalance_ratio must lie in (0, 1]")
    if N < C:
        raise ValueError("need at least one example per class")
    rng = np.random.default_rng(seed)
    counts = _class_counts_for_ratio(N, C, imbalance_ratio)
    means = rng.normal(0.0, 1.0, size=(C, p))
    means *= separation / np.maximum(np.linalg.norm(means, axis=1, keepdims=True), 1e-12)
    xs, ys = [], []
    for cls in range(C):
        xs.append(means[cls] + rng.normal(0.0, 1.0, size=(counts[cls], p)))
        ys.append(np.full(counts[cls], cls, dtype=int))
    features = np.vstack(xs)
    labels = np.concatenate(ys)
    # global per-coordinate min-max rescale into the interior feature band
    lo = features.min(axis=0)
    hi = features.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    features = FEATURE_LO + (FEATURE_HI - FEATURE_LO) * (features - lo) / span
    order = rng.permutation(N)
    return SyntheticDataset(features=features[order], labels=labels[order], n_classes=C)


def split_dataset(dataset: SyntheticDataset, train_fraction: float,
                  seed: int) -> tuple[SyntheticDataset, SyntheticDataset]:
    """Per-class split so both halves keep the imbalance profile."""
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for cls in range(dataset.n_classes):
        idx = np.flatnonzero(dataset.labels == cls)
        idx = idx[rng.permutation(idx.size)]
        cut = max(1, int(round(train_fraction * idx.size)))
        if idx.size > 1:
            cut = min(cut, idx.size - 1)
        train_idx.append(idx[:cut])
        test_idx.append(idx[cut:])
    tr = np.concatenate(train_idx)
    te = np.concatenate(test_idx)
    return (
        SyntheticDataset(dataset.features[tr], dataset.labels[tr], dataset.n_classes),
        SyntheticDataset(dataset.features[te], dataset.labels[te], dataset.n_classes),
    )


def save_dataset(dataset: SyntheticDataset, path: "str | Path"):
    """CSV with header label,f0,...,f{p-1}; floats at full round-trip precision."""
    path = Path(path)
    p = dataset.features.shape[1]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"f{k}" for k in range(p)])
        for y, row in zip(dataset.labels, dataset.features):
            writer.writerow([int(y)] + [f"{v:.17g}" for v in row])


def load_dataset(path: "str | Path", n_classes: int | None = None) -> SyntheticDataset:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "label":
            raise ValueError(f"{path}: expected a 'label,f0,...' header")
        rows = list(reader)
    labels = np.array([int(r[0]) for r in rows], dtype=int)
    features = np.array([[float(v) for v in r[1:]] for r in rows], dtype=float)
    C = n_classes if n_classes is not None else int(labels.max()) + 1
    return SyntheticDataset(features=features, labels=labels, n_classes=C)
