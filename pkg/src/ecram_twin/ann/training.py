"""Stratified k-fold training of the digit classifier, ideal or with device weights."""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.model_selection import StratifiedKFold

from .data import N_CLASSES, DigitsDataset
from .device import WeightArray
from .network import DEVICE, MLP, NetworkConfig, TrainingError, backward_sgd_step

LOG_HEADER = ["fold", "epoch", "train_loss", "test_loss", "test_accuracy"]


def stratified_folds(labels: np.ndarray, folds: int, seed: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Shuffled stratified ``(train, test)`` index splits.

    Raises
    ------
    ValueError
        If some class has fewer samples than ``folds``.
    """
    labels = np.asarray(labels)
    counts = np.bincount(labels, minlength=N_CLASSES)
    small = [c for c in range(counts.size) if 0 < counts[c] < folds]
    if small:
        raise ValueError(f"class(es) {small} have fewer samples than folds={folds}")
    skf = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    return [(tr, te) for tr, te in skf.split(np.zeros(labels.size), labels)]


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int = N_CLASSES) -> np.ndarray:
    """Counts with true classes on rows."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def normalize_rows(cm: np.ndarray) -> np.ndarray:
    cm = np.asarray(cm, dtype=float)
    tot = cm.sum(axis=1, keepdims=True)
    return np.divide(cm, tot, out=np.zeros_like(cm), where=tot > 0)


class DeviceNetwork:
    """An :class:`MLP` whose weights and biases live in differential conductance pairs.

    All parameters share one flat :class:`WeightArray`; layer ``k`` occupies
    a contiguous block viewed as ``(n_out, n_in + 1)`` with the bias last.
    """

    def __init__(self, net: MLP, config: NetworkConfig, rng: np.random.Generator):
        self.net = net
        self.config = config
        blocks = [np.column_stack([w, b]) for w, b in zip(net.W, net.b)]
        self.shapes = [blk.shape for blk in blocks]
        edges = np.cumsum([0] + [blk.size for blk in blocks])
        self.slices = [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]
        flat = np.concatenate([blk.ravel() for blk in blocks])
        self.array = WeightArray.from_weights(flat, config.device_model, rng=rng, carry=config.carry)
        self.pulse_count = 0
        self._sync()

    @property
    def layers(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Per-layer ``(G+, G-)`` views shaped like the augmented weight matrices."""
        return [(self.array.g_plus[s].reshape(sh), self.array.g_minus[s].reshape(sh))
                for s, sh in zip(self.slices, self.shapes)]

    def _sync(self) -> None:
        w = self.array.weights()
        for k, (s, sh) in enumerate(zip(self.slices, self.shapes)):
            blk = w[s].reshape(sh)
            self.net.W[k] = blk[:, :-1].copy()
            self.net.b[k] = blk[:, -1].copy()

    def sgd_step(self, X: np.ndarray, y: np.ndarray, lr: float) -> float:
        dW, db, loss = self.net.gradients(X, y)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss {loss} in device mode")
        req = np.concatenate([np.column_stack([gw, gb]).ravel() for gw, gb in zip(dW, db)])
        rep = self.array.update(-lr * req)
        self.pulse_count += int(np.abs(rep.pulses).sum())
        if not self.array.in_range():
            raise TrainingError("conductance left [g_min, g_max]")
        self._sync()
        return loss

    def apply_retention(self, window_ratio: float) -> None:
        self.array.apply_retention(window_ratio)
        self._sync()

    def conductances(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        return [(gp.copy(), gm.copy()) for gp, gm in self.layers]


def apply_epoch_retention(dnet: DeviceNetwork, window_ratio: Optional[float] = None) -> DeviceNetwork:
    """Drift every conductance by one epoch's power-law factor."""
    dnet.apply_retention(dnet.config.retention_window if window_ratio is None else window_ratio)
    return dnet


@dataclass
class FoldResult:
    fold: int
    train_loss: np.ndarray  # per epoch
    test_loss: np.ndarray
    test_accuracy: np.ndarray  # fraction
    confusion: np.ndarray  # counts on the fold's test set after the last epoch
    n_train: int
    n_test: int
    pulses: int = 0

    @property
    def final_accuracy(self) -> float:
        return float(self.test_accuracy[-1])


@dataclass
class CrossValidationResult:
    config: NetworkConfig
    folds: List[FoldResult] = field(default_factory=list)

    @property
    def final_accuracies(self) -> np.ndarray:
        return np.array([f.final_accuracy for f in self.folds])

    @property
    def mean_final_accuracy(self) -> float:
        return float(self.final_accuracies.mean())

    @property
    def mean_accuracy_curve(self) -> np.ndarray:
        return np.mean([f.test_accuracy for f in self.folds], axis=0)

    @property
    def confusion_counts(self) -> np.ndarray:
        """Summed over folds; each sample appears in exactly one test fold."""
        return np.sum([f.confusion for f in self.folds], axis=0)

    @property
    def mean_confusion(self) -> np.ndarray:
        return np.mean([f.confusion for f in self.folds], axis=0)

    @property
    def normalized_confusion(self) -> np.ndarray:
        return normalize_rows(self.confusion_counts)

    def log_rows(self):
        for f in self.folds:
            for e in range(f.test_accuracy.size):
                yield [f.fold, e + 1, f.train_loss[e], f.test_loss[e], f.test_accuracy[e]]

    def write_log(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(LOG_HEADER)
            for row in self.log_rows():
                w.writerow(row[:2] + [repr(float(v)) for v in row[2:]])
        return path

    def write_confusion(self, path, normalized: bool = False) -> Path:
        path = Path(path)
        cm = self.normalized_confusion if normalized else self.confusion_counts
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["true\\pred"] + [str(c) for c in range(cm.shape[1])])
            for i, row in enumerate(cm):
                w.writerow([i] + [repr(float(v)) if normalized else int(v) for v in row])
        return path


def _fold_streams(seed: int, fold: int):
    init, shuffle, noise = np.random.SeedSequence([seed, fold]).spawn(3)
    return np.random.default_rng(init), np.random.default_rng(shuffle), np.random.default_rng(noise)


def train_fold(config: NetworkConfig, X: np.ndarray, y: np.ndarray, train_idx: np.ndarray, test_idx: np.ndarray,
               fold: int = 0, progress: Optional[Callable[[int, int, float], None]] = None) -> FoldResult:
    """Train one fold from scratch and evaluate on its held-out samples after every epoch."""
    if len(config.layer_sizes) and config.layer_sizes[0] != X.shape[1]:
        raise ValueError(f"input layer {config.layer_sizes[0]} != feature count {X.shape[1]}")
    if np.intersect1d(train_idx, test_idx).size:
        raise ValueError("train and test indices overlap")
    init_rng, shuffle_rng, noise_rng = _fold_streams(config.seed, fold)
    net = MLP.initialize(config.layer_sizes, init_rng, scale=config.init_scale, loss=config.loss,
                         logit_scale=config.logit_scale)
    dnet = DeviceNetwork(net, config, noise_rng) if config.device_mode == DEVICE else None
    Xtr, ytr = X[train_idx], y[train_idx]
    Xte, yte = X[test_idx], y[test_idx]
    E, bs, lr = config.epochs, config.batch_size, config.learning_rate
    tr_loss, te_loss, te_acc = np.zeros(E), np.zeros(E), np.zeros(E)
    for epoch in range(E):
        order = shuffle_rng.permutation(ytr.size)
        total = 0.0
        for start in range(0, order.size, bs):
            b = order[start:start + bs]
            if dnet is not None:
                loss = dnet.sgd_step(Xtr[b], ytr[b], lr)
            else:
                loss = backward_sgd_step(net, Xtr[b], ytr[b], lr)
            total += loss * b.size
        if dnet is not None:
            apply_epoch_retention(dnet)
        tr_loss[epoch] = total / order.size
        te_loss[epoch] = net.loss_value(Xte, yte)
        te_acc[epoch] = float(np.mean(net.predict(Xte) == yte))
        if progress is not None:
            progress(fold, epoch + 1, te_acc[epoch])
    cm = confusion_matrix(yte, net.predict(Xte))
    return FoldResult(fold, tr_loss, te_loss, te_acc, cm, ytr.size, yte.size,
                      dnet.pulse_count if dnet is not None else 0)


def _train_fold_job(args):
    return train_fold(*args)


def cross_validate(config: NetworkConfig, dataset: DigitsDataset, jobs: int = 1,
                   progress: Optional[Callable[[int, int, float], None]] = None,
                   folds_to_run: Optional[Sequence[int]] = None) -> CrossValidationResult:
    """Stratified k-fold cross-validation.

    Folds are independent and may run in ``jobs`` worker processes; the
    result does not depend on ``jobs``.  ``progress`` is only called when
    folds run in this process.
    """
    X, y = dataset.features, dataset.labels
    splits = stratified_folds(y, config.folds, config.seed)
    which = range(config.folds) if folds_to_run is None else list(folds_to_run)
    tasks = [(config, X, y, splits[k][0], splits[k][1], k) for k in which]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
            results = list(ex.map(_train_fold_job, tasks))
    else:
        results = [train_fold(*t, progress=progress) for t in tasks]
    return CrossValidationResult(config, results)
