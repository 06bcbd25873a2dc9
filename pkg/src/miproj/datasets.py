"""Loaders for the three benchmark datasets and feature standardization.

Each loader parses the canonical public file format, enforces the exact
row/column contract for that dataset, and produces dense labels in
[0, M).  Gzip-compressed files are read transparently.
"""

from __future__ import annotations

import gzip
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["Dataset", "StandardizeRecord", "load_dataset", "standardize"]

# dataset contract: (n_train, n_test, n_features, n_classes)
_CONTRACTS = {
    "satellite": (4435, 2000, 36, 6),
    "letter": (16000, 4000, 16, 26),
    "usps": (7291, 2007, 256, 10),
}

_DEFAULT_FILES = {
    "satellite": {"train": "sat.trn", "test": "sat.tst"},
    "letter": {"data": "letter-recognition.data"},
    "usps": {"train": "zip.train.gz", "test": "zip.test.gz"},
}

# class 6 is absent from the satellite source labels
_SATELLITE_LABELS = {1: 0, 2: 1, 3: 2, 4: 3, 5: 4, 7: 5}


@dataclass(frozen=True, eq=False)
class Dataset:
    """In-memory train/test split with dense integer labels."""

    train_features: np.ndarray
    train_labels: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray
    n_classes: int
    name: str

    def __post_init__(self):
        for feats, labs, split in (
            (self.train_features, self.train_labels, "train"),
            (self.test_features, self.test_labels, "test"),
        ):
            if feats.ndim != 2 or labs.shape != (feats.shape[0],):
                raise ValueError(f"{split} features/labels shapes disagree")
            if labs.size and (labs.min() < 0 or labs.max() >= self.n_classes):
                raise ValueError(f"{split} labels outside [0, {self.n_classes})")
        if self.train_features.shape[1] != self.test_features.shape[1]:
            raise ValueError("train and test feature dimensions differ")

    @property
    def n_features(self):
        return self.train_features.shape[1]


@dataclass(frozen=True, eq=False)
class StandardizeRecord:
    """Per-feature affine transform fitted on a training split."""

    mean: np.ndarray
    scale: np.ndarray

    def apply(self, features):
        return (np.asarray(features, dtype=float) - self.mean) / self.scale

    def invert(self, features):
        return np.asarray(features, dtype=float) * self.scale + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}


def _open_text(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rt")
    return open(path, "r")


def _resolve_paths(name, paths):
    wanted = _DEFAULT_FILES[name]
    if isinstance(paths, (str, Path)):
        base = Path(paths)
        return {role: base / fname for role, fname in wanted.items()}
    resolved = {}
    for role in wanted:
        if role not in paths:
            raise ValueError(f"paths for {name!r} must provide {sorted(wanted)}")
        resolved[role] = Path(paths[role])
    return resolved


def _parse_numeric_rows(path, n_fields, kind, n_rows=None):
    """Whitespace-separated rows of n_fields values; errors carry line numbers."""
    rows = []
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if n_rows is not None and len(rows) == n_rows:
                raise ValueError(f"{path}:{lineno}: more than the expected {n_rows} rows")
            if len(tokens) != n_fields:
                raise ValueError(f"{path}:{lineno}: expected {n_fields} fields, got {len(tokens)}")
            try:
                rows.append([kind(tok) for tok in tokens])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric field") from None
    if n_rows is not None and len(rows) != n_rows:
        raise ValueError(f"{path}: expected {n_rows} rows, got {len(rows)}")
    return rows


def _load_satellite(paths):
    splits = {}
    for role, n_rows in (("train", 4435), ("test", 2000)):
        rows = _parse_numeric_rows(paths[role], 37, int, n_rows)
        feats = np.array([r[:36] for r in rows], dtype=float)
        labels = np.empty(len(rows), dtype=np.int64)
        for i, r in enumerate(rows):
            if r[36] not in _SATELLITE_LABELS:
                raise ValueError(f"{paths[role]}:{i + 1}: unknown label {r[36]}")
            labels[i] = _SATELLITE_LABELS[r[36]]
        splits[role] = (feats, labels)
    return splits["train"], splits["test"]


def _load_letter(paths):
    feats = []
    labels = []
    path = paths["data"]
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if len(feats) == 20000:
                raise ValueError(f"{path}:{lineno}: more than the expected 20000 rows")
            tokens = line.split(",")
            if len(tokens) != 17:
                raise ValueError(f"{path}:{lineno}: expected 17 fields, got {len(tokens)}")
            letter = tokens[0]
            if len(letter) != 1 or not ("A" <= letter <= "Z"):
                raise ValueError(f"{path}:{lineno}: unknown label {letter!r}")
            labels.append(ord(letter) - ord("A"))
            try:
                feats.append([int(t) for t in tokens[1:]])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric field") from None
    feats = np.array(feats, dtype=float)
    labels = np.array(labels, dtype=np.int64)
    if feats.shape[0] != 20000:
        raise ValueError(f"{path}: expected 20000 rows, got {feats.shape[0]}")
    # first 16000 rows are the standard training split
    return (feats[:16000], labels[:16000]), (feats[16000:], labels[16000:])


def _load_usps(paths):
    splits = {}
    for role, n_rows in (("train", 7291), ("test", 2007)):
        rows = _parse_numeric_rows(paths[role], 257, float, n_rows)
        feats = np.array([r[1:] for r in rows], dtype=float)
        labels = np.empty(len(rows), dtype=np.int64)
        for i, r in enumerate(rows):
            lab = r[0]
            if abs(lab - round(lab)) > 1e-9 or not (0 <= round(lab) <= 9):
                raise ValueError(f"{paths[role]}:{i + 1}: unknown label {lab}")
            labels[i] = int(round(lab))
        splits[role] = (feats, labels)
    return splits["train"], splits["test"]


def load_dataset(name, paths):
    """Load one benchmark dataset and verify its shape contract.

    ``paths`` is either a directory containing the canonical file names
    or a mapping from role ('train'/'test' or 'data') to file path.
    """
    if name not in _CONTRACTS:
        raise ValueError(f"unknown dataset {name!r}; choose from {sorted(_CONTRACTS)}")
    resolved = _resolve_paths(name, paths)
    loader = {"satellite": _load_satellite, "letter": _load_letter, "usps": _load_usps}[name]
    (train_x, train_y), (test_x, test_y) = loader(resolved)
    n_tr, n_te, p, m = _CONTRACTS[name]
    if train_x.shape != (n_tr, p):
        raise ValueError(f"{name}: expected train shape {(n_tr, p)}, got {train_x.shape}")
    if test_x.shape != (n_te, p):
        raise ValueError(f"{name}: expected test shape {(n_te, p)}, got {test_x.shape}")
    return Dataset(
        train_features=train_x,
        train_labels=train_y,
        test_features=test_x,
        test_labels=test_y,
        n_classes=m,
        name=name,
    )


def standardize(ds):
    """Per-feature centering/scaling fitted on the training split only.

    Zero-variance features keep scale 1 so they map to exact zeros.
    Returns the transformed dataset and the fitted transform record.
    """
    if ds.train_features.shape[0] == 0:
        raise ValueError("train split is empty")
    mean = ds.train_features.mean(axis=0)
    scale = ds.train_features.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    record = StandardizeRecord(mean=mean, scale=scale)
    out = Dataset(
        train_features=record.apply(ds.train_features),
        train_labels=ds.train_labels,
        test_features=record.apply(ds.test_features),
        test_labels=ds.test_labels,
        n_classes=ds.n_classes,
        name=ds.name,
    )
    return out, record
