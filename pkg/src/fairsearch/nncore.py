"""From-scratch dense binary classifier on numpy.

Holds the network type, forward prediction, squared-error loss, exact
backpropagation to parameters and to inputs, and a deterministic
mini-batch trainer (SGD or Adam). Everything is float64; identical seeds
reproduce bit-identical networks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ShapeError, TrainingDiverged

RELU = "relu"
SIGMOID = "sigmoid"

# Hidden widths used for the six-weight-layer default architecture.
FCNN6_HIDDEN = (64, 32, 16, 8, 4)


@dataclass
class Layer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


class DenseNetwork:
    """Fully-connected net; hidden ReLU layers, single sigmoid output."""

    def __init__(self, layers: Sequence[Layer]):
        if not layers:
            raise ConfigError("network needs at least one layer")
        for prev, cur in zip(layers, layers[1:]):
            if cur.in_dim != prev.out_dim:
                raise ShapeError(
                    f"layer dims do not chain: {prev.out_dim} -> {cur.in_dim}"
                )
        last = layers[-1]
        if last.activation != SIGMOID or last.out_dim != 1:
            raise ConfigError("final layer must be a 1-unit sigmoid")
        for ly in layers:
            if ly.activation not in (RELU, SIGMOID):
                raise ConfigError(f"unknown activation {ly.activation!r}")
            if not (np.isfinite(ly.weights).all() and np.isfinite(ly.bias).all()):
                raise ConfigError("non-finite weights or biases")
        self.layers = list(layers)
        self.final_loss = float("nan")  # set by train()

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return 1

    def copy(self) -> "DenseNetwork":
        return DenseNetwork(
            [Layer(ly.weights.copy(), ly.bias.copy(), ly.activation) for ly in self.layers]
        )


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"  # "adam" or "sgd"
    rng_seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")

    def fingerprint(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "optimizer": self.optimizer,
            "rng_seed": self.rng_seed,
        }


def new_network(
    input_dim: int,
    hidden: Sequence[int] = FCNN6_HIDDEN,
    rng_seed: int = 0,
) -> DenseNetwork:
    """Build an untrained net with Xavier-uniform weights from a seeded RNG."""
    if input_dim < 1:
        raise ConfigError("input_dim must be >= 1")
    rng = np.random.default_rng(rng_seed)
    dims = [input_dim, *hidden, 1]
    layers = []
    for i, (n_in, n_out) in enumerate(zip(dims, dims[1:])):
        limit = np.sqrt(6.0 / (n_in + n_out))
        w = rng.uniform(-limit, limit, size=(n_out, n_in))
        b = np.zeros(n_out)
        act = SIGMOID if i == len(dims) - 2 else RELU
        layers.append(Layer(w, b, act))
    return DenseNetwork(layers)


def _as_batch(net: DenseNetwork, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != net.input_dim:
        raise ShapeError(f"expected input of length {net.input_dim}, got shape {v.shape}")
    return v[None, :]


def _apply(act: str, z: np.ndarray) -> np.ndarray:
    if act == RELU:
        return np.maximum(z, 0.0)
    # Clipping keeps exp() finite; sigmoid saturates well before +-500.
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


def _forward_cached(net: DenseNetwork, X: np.ndarray):
    """Forward pass keeping per-layer activations for backprop."""
    acts = [X]
    h = X
    for ly in net.layers:
        z = h @ ly.weights.T + ly.bias
        h = _apply(ly.activation, z)
        acts.append(h)
    return acts


def forward_batch(net: DenseNetwork, X: np.ndarray) -> np.ndarray:
    """Predictions in [0,1] for a (n, input_dim) batch."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ShapeError(f"expected (n, {net.input_dim}) batch, got shape {X.shape}")
    h = X
    for ly in net.layers:
        h = _apply(ly.activation, h @ ly.weights.T + ly.bias)
    return h[:, 0]


def forward_from_preact(net: DenseNetwork, z1: np.ndarray) -> np.ndarray:
    """Finish a forward pass given the first layer's pre-activation.

    Lets callers that evaluate many inputs sharing most coordinates split
    the first-layer product into cached partial sums.
    """
    h = _apply(net.layers[0].activation, z1)
    for ly in net.layers[1:]:
        h = _apply(ly.activation, h @ ly.weights.T + ly.bias)
    return h[:, 0]


def forward(net: DenseNetwork, v: np.ndarray) -> float:
    """Prediction in [0,1] for a single feature vector."""
    return float(forward_batch(net, _as_batch(net, v))[0])


def loss_mse(y: float, yhat: float) -> float:
    """Squared-error loss (y - yhat)**2."""
    return float((y - yhat) ** 2)


def _backward(net: DenseNetwork, acts: list, dloss_dyhat: np.ndarray):
    """Shared backprop core.

    dloss_dyhat has shape (n,); returns (d_input, [(dW, db), ...]) where the
    parameter gradients are summed over the batch.
    """
    yhat = acts[-1][:, 0]
    # d/dz of sigmoid output
    delta = (dloss_dyhat * yhat * (1.0 - yhat))[:, None]
    grads = []
    for idx in range(len(net.layers) - 1, -1, -1):
        ly = net.layers[idx]
        h_prev = acts[idx]
        dW = delta.T @ h_prev
        db = delta.sum(axis=0)
        grads.append((dW, db))
        if idx > 0:
            delta = delta @ ly.weights
            delta *= acts[idx] > 0.0  # ReLU mask (h>0 iff z>0)
    grads.reverse()
    d_input = delta @ net.layers[0].weights
    return d_input, grads


def input_gradient_batch(net: DenseNetwork, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-row gradient of (y_i - f(x_i))**2 with respect to x_i."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ShapeError(f"expected (n, {net.input_dim}) batch, got shape {X.shape}")
    y = np.broadcast_to(np.asarray(y, dtype=np.float64), (X.shape[0],))
    acts = _forward_cached(net, X)
    dloss = 2.0 * (acts[-1][:, 0] - y)
    d_input, _ = _backward(net, acts, dloss)
    return d_input


def input_gradient(net: DenseNetwork, v: np.ndarray, y: float) -> np.ndarray:
    """Exact gradient of loss_mse(y, forward(net, v)) with respect to v."""
    return input_gradient_batch(net, _as_batch(net, v), np.array([y]))[0]


def param_gradients(net: DenseNetwork, X: np.ndarray, y: np.ndarray):
    """Gradients of the mean squared-error loss over the batch, per layer.

    Returns a list of (dW, db) matching net.layers. A single example may be
    passed as a 1-d vector with a scalar label.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ShapeError(f"expected (n, {net.input_dim}) batch, got shape {X.shape}")
    y = np.broadcast_to(np.asarray(y, dtype=np.float64), (X.shape[0],))
    acts = _forward_cached(net, X)
    dloss = 2.0 * (acts[-1][:, 0] - y) / X.shape[0]
    _, grads = _backward(net, acts, dloss)
    return grads


def _stack_data(data) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, tuple) and len(data) == 2:
        X = np.asarray(data[0], dtype=np.float64)
        Y = np.asarray(data[1], dtype=np.float64)
    else:
        pairs = list(data)
        if not pairs:
            raise ConfigError("training data is empty")
        X = np.stack([np.asarray(v, dtype=np.float64) for v, _ in pairs])
        Y = np.array([float(y) for _, y in pairs])
    if X.size == 0:
        raise ConfigError("training data is empty")
    return X, Y


def train(net: DenseNetwork, data, cfg: TrainConfig) -> DenseNetwork:
    """Train a copy of `net` on (vector, label) pairs; the input net is untouched.

    Deterministic given cfg.rng_seed. Raises TrainingDiverged if the epoch
    loss goes non-finite. The final epoch loss is stored on the returned
    network as `final_loss`.
    """
    X, Y = _stack_data(data)
    if X.shape[1] != net.input_dim:
        raise ShapeError(f"data dim {X.shape[1]} != network input dim {net.input_dim}")
    if cfg.batch_size > X.shape[0]:
        raise ConfigError(f"batch_size {cfg.batch_size} exceeds dataset size {X.shape[0]}")

    out = net.copy()
    rng = np.random.default_rng(cfg.rng_seed)
    n = X.shape[0]

    use_adam = cfg.optimizer == "adam"
    if use_adam:
        m = [(np.zeros_like(ly.weights), np.zeros_like(ly.bias)) for ly in out.layers]
        v = [(np.zeros_like(ly.weights), np.zeros_like(ly.bias)) for ly in out.layers]
        t = 0

    final_loss = float("nan")
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = X[idx], Y[idx]
            acts = _forward_cached(out, xb)
            resid = acts[-1][:, 0] - yb
            loss_sum += float(resid @ resid)
            dloss = (2.0 / xb.shape[0]) * resid
            _, grads = _backward(out, acts, dloss)
            if use_adam:
                t += 1
                c1 = 1.0 - cfg.adam_beta1**t
                c2 = 1.0 - cfg.adam_beta2**t
                for ly, (gw, gb), (mw, mb), (vw, vb) in zip(out.layers, grads, m, v):
                    mw *= cfg.adam_beta1
                    mw += (1.0 - cfg.adam_beta1) * gw
                    vw *= cfg.adam_beta2
                    vw += (1.0 - cfg.adam_beta2) * gw * gw
                    ly.weights -= cfg.learning_rate * (mw / c1) / (np.sqrt(vw / c2) + cfg.adam_eps)
                    mb *= cfg.adam_beta1
                    mb += (1.0 - cfg.adam_beta1) * gb
                    vb *= cfg.adam_beta2
                    vb += (1.0 - cfg.adam_beta2) * gb * gb
                    ly.bias -= cfg.learning_rate * (mb / c1) / (np.sqrt(vb / c2) + cfg.adam_eps)
            else:
                for ly, (gw, gb) in zip(out.layers, grads):
                    ly.weights -= cfg.learning_rate * gw
                    ly.bias -= cfg.learning_rate * gb
        final_loss = loss_sum / n
        if not np.isfinite(final_loss):
            raise TrainingDiverged(f"training loss became non-finite at epoch {epoch}")
    out.final_loss = final_loss
    return out


def predict_label(net: DenseNetwork, v: np.ndarray, threshold: float = 0.5) -> int:
    """Hard 0/1 label; ties at the threshold resolve to 1."""
    if not (0.0 < threshold < 1.0):
        raise ConfigError(f"threshold must lie in (0, 1), got {threshold}")
    return int(forward(net, v) >= threshold)


def predict_labels(net: DenseNetwork, X: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    if not (0.0 < threshold < 1.0):
        raise ConfigError(f"threshold must lie in (0, 1), got {threshold}")
    return (forward_batch(net, X) >= threshold).astype(np.int8)


def save_model(net: DenseNetwork, path, fingerprint: dict | None = None) -> None:
    """Write the net as JSON; float64 repr round-trips bit-exactly."""
    doc = {
        "format": "fairsearch-dense-v1",
        "input_dim": net.input_dim,
        "layers": [
            {
                "activation": ly.activation,
                "weights": ly.weights.tolist(),
                "bias": ly.bias.tolist(),
            }
            for ly in net.layers
        ],
        "fingerprint": fingerprint or {},
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path) -> tuple[DenseNetwork, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != "fairsearch-dense-v1":
        raise ConfigError(f"{path}: not a fairsearch model file")
    layers = [
        Layer(
            np.asarray(spec["weights"], dtype=np.float64),
            np.asarray(spec["bias"], dtype=np.float64),
            spec["activation"],
        )
        for spec in doc["layers"]
    ]
    net = DenseNetwork(layers)
    if net.input_dim != doc["input_dim"]:
        raise ConfigError(f"{path}: input_dim mismatch")
    return net, doc.get("fingerprint", {})
