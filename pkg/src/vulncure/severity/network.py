"""Severity regressors: closed-form linear model and a small fully connected
network trained with Adam, both in plain numpy."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .features import FEATURE_ORDER, N_FEATURES, CweTable, Sample, stack

log = logging.getLogger(__name__)

DNN_HIDDEN = (128, 128, 256, 256)
PRNG_NAME = "numpy.random.PCG64"
MODEL_FORMAT = "vulncure-severity-model/1"


class ModelKind(str, Enum):
    LINEAR = "Linear"
    DNN = "DNN"


class Activation(str, Enum):
    RELU = "ReLU"
    SIGMOID = "Sigmoid"
    IDENTITY = "Identity"


class SolverError(RuntimeError):
    pass


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _activate(z: np.ndarray, act: Activation) -> np.ndarray:
    if act is Activation.RELU:
        return np.maximum(z, 0.0)
    if act is Activation.SIGMOID:
        return sigmoid(z)
    return z


@dataclass
class Layer:
    weights: np.ndarray  # (fan_in, fan_out)
    biases: np.ndarray  # (fan_out,)
    activation: Activation


@dataclass
class AdamConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 128
    epochs: int = 100


@dataclass
class RegressionModel:
    kind: ModelKind
    layers: list[Layer]
    training_meta: dict = field(default_factory=dict)
    cwe_table: CweTable = field(default_factory=lambda: CweTable(()))
    feature_order: tuple[str, ...] = FEATURE_ORDER

    # -- inference ---------------------------------------------------------

    def forward(self, X: np.ndarray) -> tuple[np.ndarray, list]:
        """Network output in [0, 1] scale plus the per-layer cache needed
        for backpropagation."""
        cache = []
        a = X
        for layer in self.layers:
            z = a @ layer.weights + layer.biases
            cache.append((a, z))
            a = _activate(z, layer.activation)
        return a[:, 0], cache

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Predicted v3 base scores in [0, 10]."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out, _ = self.forward(X)
        return np.clip(out * 10.0, 0.0, 10.0)

    # -- training support -------------------------------------------------

    def loss_and_grads(self, X: np.ndarray, y: np.ndarray):
        """Mean squared error over the batch and its gradients per layer as
        (dW, db) pairs."""
        out, cache = self.forward(X)
        n = X.shape[0]
        diff = out - y
        loss = float(np.mean(diff**2))
        delta = (2.0 / n) * diff[:, None]  # dL/da for the output layer
        grads = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            a_in, z = cache[i]
            if layer.activation is Activation.SIGMOID:
                s = sigmoid(z)
                delta = delta * s * (1.0 - s)
            elif layer.activation is Activation.RELU:
                delta = delta * (z > 0)
            grads[i] = (a_in.T @ delta, delta.sum(axis=0))
            if i:
                delta = delta @ layer.weights.T
        return loss, grads

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in (layer.weights, layer.biases)]

    # -- serialization ----------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": MODEL_FORMAT,
                "kind": self.kind.value,
                "feature_order": list(self.feature_order),
                "cwe_table": list(self.cwe_table.ranked),
                "layers": [
                    {
                        "activation": layer.activation.value,
                        "weights": layer.weights.tolist(),
                        "biases": layer.biases.tolist(),
                    }
                    for layer in self.layers
                ],
                "training_meta": self.training_meta,
            },
            sort_keys=True,
        ) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RegressionModel":
        doc = json.loads(text)
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {doc.get('format')!r}")
        if tuple(doc["feature_order"]) != FEATURE_ORDER:
            raise ValueError("model was trained with a different feature ordering")
        layers = [
            Layer(
                np.array(lay["weights"], dtype=np.float64).reshape(-1, len(lay["biases"])),
                np.array(lay["biases"], dtype=np.float64),
                Activation(lay["activation"]),
            )
            for lay in doc["layers"]
        ]
        return cls(
            ModelKind(doc["kind"]),
            layers,
            doc.get("training_meta", {}),
            CweTable(tuple(doc.get("cwe_table", ()))),
        )


def init_network(
    widths: Sequence[int], rng: np.random.Generator, output: Activation = Activation.SIGMOID
) -> list[Layer]:
    """Glorot-uniform weights, zero biases, ReLU hidden layers."""
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        act = output if i == len(widths) - 2 else Activation.RELU
        layers.append(Layer(W, np.zeros(fan_out), act))
    return layers


def train_linear(
    train: Sequence[Sample], ridge: float = 1e-8, cwe_table: Optional[CweTable] = None
) -> RegressionModel:
    """Least squares via the normal equations; *ridge* is added to the
    diagonal of the non-bias block."""
    X, y = stack(train)
    if len(y) == 0:
        raise ValueError("empty training set")
    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    A = Xa.T @ Xa
    A[np.arange(N_FEATURES), np.arange(N_FEATURES)] += ridge
    try:
        w = np.linalg.solve(A, Xa.T @ y)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"normal equations are singular: {exc}") from exc
    resid = Xa @ w - y
    meta = {
        "solver": "normal-equations",
        "ridge": ridge,
        "n_train": int(len(y)),
        "final_train_loss": float(np.mean(resid**2)),
    }
    layer = Layer(w[:-1].reshape(-1, 1), w[-1:].copy(), Activation.IDENTITY)
    return RegressionModel(ModelKind.LINEAR, [layer], meta, cwe_table or CweTable(()))


def train_dnn(
    train: Sequence[Sample],
    seed: int,
    config: Optional[AdamConfig] = None,
    hidden: Sequence[int] = DNN_HIDDEN,
    cwe_table: Optional[CweTable] = None,
) -> RegressionModel:
    """Fully connected ReLU network with a sigmoid output unit, trained on
    MSE with Adam. A fixed seed reproduces the weights exactly."""
    cfg = config or AdamConfig()
    X, y = stack(train)
    if len(y) == 0:
        raise ValueError("empty training set")
    rng = np.random.Generator(np.random.PCG64(seed))
    model = RegressionModel(
        ModelKind.DNN, init_network([X.shape[1], *hidden, 1], rng), {}, cwe_table or CweTable(())
    )
    initial_loss = model.loss_and_grads(X, y)[0]
    history = train_adam(model, X, y, cfg, rng)
    model.training_meta = {
        "seed": seed,
        "prng": PRNG_NAME,
        "epochs": cfg.epochs,
        "learning_rate": cfg.learning_rate,
        "beta1": cfg.beta1,
        "beta2": cfg.beta2,
        "eps": cfg.eps,
        "batch_size": cfg.batch_size,
        "hidden": list(hidden),
        "init": "glorot-uniform",
        "n_train": int(len(y)),
        "initial_train_loss": initial_loss,
        "final_train_loss": model.loss_and_grads(X, y)[0],
        "epoch_losses": history,
    }
    return model


def train_adam(
    model: RegressionModel,
    X: np.ndarray,
    y: np.ndarray,
    cfg: AdamConfig,
    rng: np.random.Generator,
) -> list[float]:
    params = model.parameters()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    t = 0
    history = []
    n = X.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start: start + cfg.batch_size]
            loss, grads = model.loss_and_grads(X[idx], y[idx])
            total += loss * len(idx)
            t += 1
            flat = [g for pair in grads for g in pair]
            for p, g, mi, vi in zip(params, flat, m, v):
                mi *= cfg.beta1
                mi += (1 - cfg.beta1) * g
                vi *= cfg.beta2
                vi += (1 - cfg.beta2) * g * g
                m_hat = mi / (1 - cfg.beta1**t)
                v_hat = vi / (1 - cfg.beta2**t)
                p -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
        history.append(total / n)
        log.debug("epoch %d loss %.6f", epoch + 1, history[-1])
    return history


def predict_score(model: RegressionModel, features: np.ndarray) -> float:
    return float(model.predict(np.asarray(features, dtype=np.float64))[0])
