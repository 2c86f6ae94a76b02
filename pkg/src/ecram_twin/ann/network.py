"""Fully connected tanh network trained by stochastic gradient descent."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..synapse.model import SynapticDeviceModel

IDEAL = "ideal"
DEVICE = "device"
CROSS_ENTROPY = "cross_entropy"
MSE = "mse"


class TrainingError(RuntimeError):
    """Non-finite loss or invalid training configuration."""


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture and training hyper-parameters.

    ``logit_scale`` multiplies the tanh outputs before the softmax of the
    cross-entropy loss.  ``retention_window`` is the effective ``t/t0`` of
    the power-law drift applied after every epoch in device mode.
    """

    layer_sizes: Tuple[int, ...] = (64, 54, 10)
    activation: str = "tanh"
    learning_rate: float = 0.01
    epochs: int = 50
    folds: int = 5
    seed: int = 0
    batch_size: int = 1
    device_mode: str = IDEAL
    device_model: SynapticDeviceModel = field(default_factory=SynapticDeviceModel)
    loss: str = CROSS_ENTROPY
    logit_scale: float = 4.0
    init_scale: float = 1.0
    retention_window: float = 10.0
    carry: bool = True

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(n) for n in self.layer_sizes))
        if len(self.layer_sizes) < 2 or any(n < 1 for n in self.layer_sizes):
            raise ValueError("need at least 2 layers of positive width")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.activation != "tanh":
            raise ValueError("only the tanh activation is implemented")
        if self.device_mode not in (IDEAL, DEVICE):
            raise ValueError(f"device_mode must be '{IDEAL}' or '{DEVICE}'")
        if self.loss not in (CROSS_ENTROPY, MSE):
            raise ValueError(f"loss must be '{CROSS_ENTROPY}' or '{MSE}'")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.retention_window < 1:
            raise ValueError("retention_window must be >= 1")

    def replace(self, **changes) -> "NetworkConfig":
        return replace(self, **changes)


class MLP:
    """Weights ``W[l]`` of shape ``(n_out, n_in)`` and biases ``b[l]``; every layer uses tanh."""

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray], loss: str = CROSS_ENTROPY,
                 logit_scale: float = 4.0):
        self.W = [np.array(w, dtype=float) for w in weights]
        self.b = [np.array(v, dtype=float) for v in biases]
        for k, (w, v) in enumerate(zip(self.W, self.b)):
            if w.ndim != 2 or v.shape != (w.shape[0],):
                raise ValueError(f"layer {k}: weight/bias shapes {w.shape}/{v.shape} inconsistent")
            if k and w.shape[1] != self.W[k - 1].shape[0]:
                raise ValueError(f"layer {k}: fan-in {w.shape[1]} != previous width {self.W[k - 1].shape[0]}")
        self.loss = loss
        self.logit_scale = logit_scale

    @classmethod
    def initialize(cls, sizes: Sequence[int], rng: np.random.Generator, scale: float = 1.0, loss=CROSS_ENTROPY,
                   logit_scale: float = 4.0) -> "MLP":
        """Glorot-uniform weights, zero biases."""
        W, b = [], []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            lim = scale * np.sqrt(6.0 / (n_in + n_out))
            W.append(rng.uniform(-lim, lim, size=(n_out, n_in)))
            b.append(np.zeros(n_out))
        return cls(W, b, loss, logit_scale)

    @classmethod
    def zeros(cls, sizes: Sequence[int], **kw) -> "MLP":
        return cls([np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])], [np.zeros(o) for o in sizes[1:]], **kw)

    @property
    def sizes(self) -> List[int]:
        return [self.W[0].shape[1]] + [w.shape[0] for w in self.W]

    def copy(self) -> "MLP":
        return MLP(self.W, self.b, self.loss, self.logit_scale)

    def forward(self, x: np.ndarray) -> List[np.ndarray]:
        """Activations of every layer (input first) for one sample or a batch of rows."""
        a = np.asarray(x, dtype=float)
        if a.shape[-1] != self.W[0].shape[1]:
            raise ValueError(f"expected {self.W[0].shape[1]} features, got {a.shape[-1]}")
        acts = [a]
        for w, v in zip(self.W, self.b):
            a = np.tanh(a @ w.T + v)
            acts.append(a)
        return acts

    def predict_scores(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[-1]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_scores(x), axis=-1)

    # -- loss -----------------------------------------------------------------

    def _loss_and_grad(self, out: np.ndarray, y: np.ndarray):
        """Per-sample loss and its gradient with respect to the network outputs."""
        out2 = np.atleast_2d(out)
        y = np.atleast_1d(y)
        n, k = out2.shape
        if self.loss == CROSS_ENTROPY:
            z = self.logit_scale * out2
            z = z - z.max(axis=1, keepdims=True)
            e = np.exp(z)
            p = e / e.sum(axis=1, keepdims=True)
            loss = -np.log(p[np.arange(n), y])
            g = p.copy()
            g[np.arange(n), y] -= 1.0
            g *= self.logit_scale
        else:
            t = np.zeros_like(out2)
            t[np.arange(n), y] = 1.0
            diff = out2 - t
            loss = 0.5 * np.sum(diff**2, axis=1)
            g = diff
        return loss, g

    def loss_value(self, X: np.ndarray, y: np.ndarray) -> float:
        out = self.forward(X)[-1]
        return float(np.mean(self._loss_and_grad(out, y)[0]))

    def gradients(self, X: np.ndarray, y: np.ndarray):
        """Mean-loss gradients ``(dW, db, loss)`` over a batch by backpropagation."""
        X2 = np.atleast_2d(X)
        y = np.atleast_1d(y)
        acts = self.forward(X2)
        loss, g = self._loss_and_grad(acts[-1], y)
        n = X2.shape[0]
        delta = g * (1.0 - acts[-1] ** 2) / n
        dW = [None] * len(self.W)
        db = [None] * len(self.W)
        for k in range(len(self.W) - 1, -1, -1):
            dW[k] = delta.T @ acts[k]
            db[k] = delta.sum(axis=0)
            if k:
                delta = (delta @ self.W[k]) * (1.0 - acts[k] ** 2)
        return dW, db, float(np.mean(loss))


def backward_sgd_step(net: MLP, X: np.ndarray, y: np.ndarray, lr: float) -> float:
    """One in-place SGD step on a batch; returns the batch loss before the update."""
    if np.asarray(y).size == 0:
        raise TrainingError("empty batch")
    dW, db, loss = net.gradients(X, y)
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss}; max |W| = {max(np.max(np.abs(w)) for w in net.W):.3g}")
    for k in range(len(net.W)):
        net.W[k] -= lr * dW[k]
        net.b[k] -= lr * db[k]
    return loss


def numerical_gradients(net: MLP, X: np.ndarray, y: np.ndarray, h: float = 1e-6):
    """Central finite-difference gradients (for verification)."""
    dW, db = [], []
    for params, out in ((net.W, dW), (net.b, db)):
        for p in params:
            g = np.zeros_like(p)
            it = np.nditer(p, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                old = p[idx]
                p[idx] = old + h
                lp = net.loss_value(X, y)
                p[idx] = old - h
                lm = net.loss_value(X, y)
                p[idx] = old
                g[idx] = (lp - lm) / (2 * h)
            out.append(g)
    return dW, db
