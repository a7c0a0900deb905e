"""Small fully connected ReLU Q-network with hand-written backprop and RMSprop."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HIDDEN_LAYERS = 6
HIDDEN_UNITS = 20
CHECKPOINT_FORMAT = "execq.qnet"
CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    pass


@dataclass
class QNetwork:
    """Weights ``(W, b)`` per layer, ``W`` shaped (fan_out, fan_in).

    Every layer but the last is followed by a ReLU; the last maps to a scalar.
    """

    layers: list[tuple[np.ndarray, np.ndarray]]

    def __post_init__(self):
        prev = None
        for W, b in self.layers:
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ValueError("each layer needs W (out, in) and b (out,)")
            if prev is not None and W.shape[1] != prev:
                raise ValueError(f"layer expects {W.shape[1]} inputs, previous layer gives {prev}")
            prev = W.shape[0]
        if prev != 1:
            raise ValueError("output head must be scalar")

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(W.shape[0] for W, _ in self.layers[:-1])

    def arrays(self) -> list[np.ndarray]:
        return [a for layer in self.layers for a in layer]

    def __eq__(self, other) -> bool:
        if not isinstance(other, QNetwork) or len(self.layers) != len(other.layers):
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


def init_network(input_dim: int, seed: int, hidden=(HIDDEN_UNITS,) * HIDDEN_LAYERS,
                 allowed_dims=(3, 4, 5)) -> QNetwork:
    """Glorot-uniform weights, zero biases."""
    if allowed_dims is not None and input_dim not in allowed_dims:
        raise ValueError(f"unsupported input dimension {input_dim}")
    rng = np.random.default_rng(seed)
    sizes = [input_dim, *hidden, 1]
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append((rng.uniform(-limit, limit, size=(fan_out, fan_in)), np.zeros(fan_out)))
    return QNetwork(layers)


def _as_batch(params: QNetwork, inputs) -> tuple[np.ndarray, bool]:
    X = np.asarray(inputs, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != params.input_dim:
        raise ValueError(f"input has dimension {X.shape[1]}, network expects {params.input_dim}")
    return X, single


def forward(params: QNetwork, inputs):
    """Q-values for one input vector (returns float) or a batch (returns 1-D array)."""
    h, single = _as_batch(params, inputs)
    *hidden, (W_out, b_out) = params.layers
    for W, b in hidden:
        h = np.maximum(h @ W.T + b, 0.0)
    out = (h @ W_out.T + b_out)[:, 0]
    return float(out[0]) if single else out


def loss_and_gradient(params: QNetwork, inputs, targets):
    """Summed squared error and its exact gradient (same layout as ``params.layers``)."""
    X, _ = _as_batch(params, inputs)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if len(X) == 0:
        raise ValueError("empty batch")
    if len(y) != len(X):
        raise ValueError("inputs and targets differ in length")
    acts = [X]
    h = X
    *hidden, (W_out, b_out) = params.layers
    for W, b in hidden:
        h = np.maximum(h @ W.T + b, 0.0)
        acts.append(h)
    pred = (h @ W_out.T + b_out)[:, 0]
    resid = pred - y
    loss = float(resid @ resid)

    grads = []
    delta = (2.0 * resid)[:, None]
    for idx in range(len(params.layers) - 1, -1, -1):
        W, _ = params.layers[idx]
        a_in = acts[idx]
        grads.append((delta.T @ a_in, delta.sum(axis=0)))
        if idx > 0:
            # relu'(z) taken as 0 at the kink, i.e. where the activation is 0
            delta = (delta @ W) * (a_in > 0.0)
    grads.reverse()
    return loss, grads


@dataclass
class RmsPropState:
    lr: float = 1e-3
    decay: float = 0.9
    eps: float = 1e-8
    acc: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: QNetwork, lr=1e-3, decay=0.9, eps=1e-8) -> "RmsPropState":
        return cls(lr, decay, eps, [np.zeros_like(a) for a in params.arrays()])


def rmsprop_step(params: QNetwork, state: RmsPropState, grads) -> tuple[QNetwork, RmsPropState]:
    flat = [g for layer in grads for g in layer]
    if len(flat) != len(state.acc):
        raise ValueError("gradient does not match optimizer state")
    for g in flat:
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient")
    acc = [state.decay * a + (1.0 - state.decay) * g * g for a, g in zip(state.acc, flat)]
    new = [p - state.lr * g / np.sqrt(a + state.eps)
           for p, g, a in zip(params.arrays(), flat, acc)]
    layers = [(new[i], new[i + 1]) for i in range(0, len(new), 2)]
    return QNetwork(layers), RmsPropState(state.lr, state.decay, state.eps, acc)


def copy_params(params: QNetwork) -> QNetwork:
    return QNetwork([(W.copy(), b.copy()) for W, b in params.layers])


def params_to_dict(params: QNetwork) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "input_dim": params.input_dim,
        "hidden": list(params.hidden),
        "layers": [
            {"shape": list(W.shape), "weight": W.tolist(), "bias": b.tolist()}
            for W, b in params.layers
        ],
    }


def params_from_dict(d: dict) -> QNetwork:
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a Q-network checkpoint")
    if d.get("version", 0) > CHECKPOINT_VERSION:
        raise ValueError(f"checkpoint version {d['version']} is newer than supported")
    layers = []
    for layer in d["layers"]:
        W = np.array(layer["weight"], dtype=np.float64).reshape(layer["shape"])
        layers.append((W, np.array(layer["bias"], dtype=np.float64)))
    return QNetwork(layers)


def save_params(params: QNetwork, path) -> None:
    Path(path).write_text(json.dumps(params_to_dict(params)))


def load_params(path) -> QNetwork:
    return params_from_dict(json.loads(Path(path).read_text()))
