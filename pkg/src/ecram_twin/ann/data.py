"""Handwritten-digit dataset loading and validation."""

from __future__ import annotations

import csv
import os
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

N_FEATURES = 64
N_CLASSES = 10


class DatasetError(ValueError):
    """Malformed dataset file; the message names the offending line."""


@dataclass(frozen=True)
class DigitsDataset:
    """8x8 grayscale digits, features scaled to [0, 1]."""

    features: np.ndarray  # (n, 64)
    labels: np.ndarray  # (n,)

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        y = np.asarray(self.labels)
        if X.ndim != 2 or X.shape[1] != N_FEATURES:
            raise DatasetError(f"features must have shape (n, {N_FEATURES}), got {X.shape}")
        if y.shape != (X.shape[0],):
            raise DatasetError("one label per sample required")
        if not np.all(np.isfinite(X)):
            raise DatasetError("features must be finite")
        if np.any((y < 0) | (y >= N_CLASSES)) or not np.all(y == np.round(y)):
            raise DatasetError("labels must be integers in [0, 9]")
        X.setflags(write=False)
        y = y.astype(np.int64)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        missing = sorted(set(range(N_CLASSES)) - set(np.unique(y).tolist()))
        if missing:
            warnings.warn(f"dataset is missing class(es) {missing}", UserWarning, stacklevel=3)

    def __len__(self) -> int:
        return self.labels.size

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=N_CLASSES)


def _parse_rows(path: Path, scale: Optional[float]):
    X, y = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not s.strip() for s in row):
                continue
            if lineno == 1 and not _is_number(row[0]):
                continue  # header
            if len(row) != N_FEATURES + 1:
                raise DatasetError(f"{path}:{lineno}: expected {N_FEATURES + 1} values, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-numeric value") from None
            label = vals[-1]
            if label != int(label) or not 0 <= label < N_CLASSES:
                raise DatasetError(f"{path}:{lineno}: label {label} not in 0-9")
            X.append(vals[:-1])
            y.append(int(label))
    if not X:
        raise DatasetError(f"{path}: no samples")
    X = np.array(X)
    if scale is None:
        scale = 16.0 if X.max() > 1.0 else 1.0
    return X / scale, np.array(y)


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def load_digits(source: Union[str, Path, None] = "builtin", scale: Optional[float] = None) -> DigitsDataset:
    """Load the optical digits data.

    Parameters
    ----------
    source : str or path
        ``"builtin"`` (or None) for the 1797-sample copy shipped with
        scikit-learn, or a CSV with 64 feature columns followed by the label
        (the UCI ``optdigits.tra``/``.tes`` files have this layout).  Several
        files can be joined with ``os.pathsep``.
    scale : float, optional
        Divisor for the features; defaults to 16 when values exceed 1.
    """
    if source is None or str(source) == "builtin":
        from sklearn.datasets import load_digits as _sk_digits

        d = _sk_digits()
        return DigitsDataset(d.data / (16.0 if scale is None else scale), d.target)
    parts = [Path(p) for p in str(source).split(os.pathsep) if p] if not Path(str(source)).exists() else [Path(source)]
    Xs, ys = [], []
    for p in parts:
        X, y = _parse_rows(p, scale)
        Xs.append(X)
        ys.append(y)
    return DigitsDataset(np.vstack(Xs), np.concatenate(ys))
