"""Dataset generation and ingestion: Gaussian class blobs and labeled CSVs.

Features are z-score normalized with statistics computed on the training
split only. Splits default to 80/10/10 and are reproducible by seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ConfigError


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    classes: int
    feature_names: list[str]

    @property
    def features(self) -> int:
        return self.x_train.shape[1]

    def size(self) -> int:
        return len(self.x_train) + len(self.x_val) + len(self.x_test)


def _split(x: np.ndarray, y: np.ndarray, fractions: tuple[float, float, float],
           rng: np.random.Generator) -> tuple:
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"dataset.split: fractions {fractions} must sum to 1")
    n = len(x)
    perm = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    tr, va, te = perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]
    return x[tr], y[tr], x[va], y[va], x[te], y[te]


def blob_arrays(features: int, classes: int, samples_per_class: int,
                spread: float, rng: np.random.Generator,
                center_scale: float = 3.0) -> tuple[np.ndarray, np.ndarray]:
    """Raw balanced Gaussian class blobs, class-ordered."""
    if features < 1:
        raise ConfigError(f"dataset.features: {features} must be >= 1")
    if classes < 2:
        raise ConfigError(f"dataset.classes: {classes} must be >= 2")
    if samples_per_class < 1:
        raise ConfigError("dataset.samples_per_class: must be >= 1")
    centers = rng.normal(0.0, center_scale, size=(classes, features))
    xs, ys = [], []
    for c in range(classes):
        xs.append(centers[c] + rng.normal(0.0, spread, size=(samples_per_class, features)))
        ys.append(np.full(samples_per_class, c, dtype=np.int64))
    return np.concatenate(xs).astype(np.float32), np.concatenate(ys)


def generate_blobs(features: int, classes: int, samples_per_class: int,
                   spread: float, seed: int, center_scale: float = 3.0,
                   split: tuple[float, float, float] = (0.8, 0.1, 0.1)) -> Dataset:
    """Balanced Gaussian class blobs, shuffled and split 80/10/10."""
    rng = nn.stream_rng(seed, "data")
    x, y = blob_arrays(features, classes, samples_per_class, spread, rng, center_scale)
    parts = _split(x, y, split, rng)
    return Dataset(*parts, classes=classes,
                   feature_names=[f"f{i}" for i in range(features)])


def normalize(data: Dataset) -> Dataset:
    """Z-score every feature using train-split statistics (no leakage)."""
    mean = data.x_train.mean(axis=0)
    std = data.x_train.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    for attr in ("x_train", "x_val", "x_test"):
        arr = getattr(data, attr)
        if len(arr):
            setattr(data, attr, ((arr - mean) / std).astype(arr.dtype))
    return data


def load_csv(path: str, label_column: str, drop_labels: list | None = None,
             split: tuple[float, float, float] = (0.8, 0.1, 0.1),
             seed: int = 0) -> Dataset:
    """Load a header CSV: numeric feature columns plus one integer label column.

    Rows carrying a label listed in drop_labels are removed before the
    remaining labels are remapped to contiguous ids.
    """
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ConfigError(f"dataset.path: {path} is empty") from None
            rows = list(reader)
    except OSError as exc:
        raise ConfigError(f"dataset.path: cannot read {path}: {exc}") from exc

    if label_column not in header:
        raise ConfigError(
            f"dataset.label_column: {label_column!r} not in header {header}")
    label_idx = header.index(label_column)
    feature_names = [h for i, h in enumerate(header) if i != label_idx]

    features, labels = [], []
    for r, row in enumerate(rows, start=2):  # 1-based, header is line 1
        if len(row) != len(header):
            raise ConfigError(f"dataset.path: row {r} has {len(row)} cells, expected {len(header)}")
        try:
            labels.append(int(float(row[label_idx])))
        except ValueError:
            raise ConfigError(
                f"dataset.path: row {r}, column {label_column!r}: "
                f"non-integer label {row[label_idx]!r}") from None
        feats = []
        for i, cell in enumerate(row):
            if i == label_idx:
                continue
            try:
                feats.append(float(cell))
            except ValueError:
                raise ConfigError(
                    f"dataset.path: row {r}, column {header[i]!r}: "
                    f"non-numeric value {cell!r}") from None
        features.append(feats)

    x = np.array(features, dtype=np.float32)
    y = np.array(labels, dtype=np.int64)
    if drop_labels:
        keep = ~np.isin(y, list(drop_labels))
        x, y = x[keep], y[keep]
    if len(x) == 0:
        raise ConfigError("dataset.path: no rows left after filtering")
    uniq = np.unique(y)
    if len(uniq) < 2:
        raise ConfigError(f"dataset: needs >= 2 classes, found {len(uniq)}")
    remap = {old: new for new, old in enumerate(uniq.tolist())}
    y = np.array([remap[v] for v in y.tolist()], dtype=np.int64)

    rng = nn.stream_rng(seed, "data")
    parts = _split(x, y, split, rng)
    data = Dataset(*parts, classes=len(uniq), feature_names=feature_names)
    return normalize(data)


def write_csv(data_x: np.ndarray, data_y: np.ndarray, path: str,
              feature_names: list[str] | None = None) -> None:
    names = feature_names or [f"f{i}" for i in range(data_x.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + ["label"])
        for row, label in zip(data_x, data_y):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
