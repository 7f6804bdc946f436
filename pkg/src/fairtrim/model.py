"""Two-hidden-layer tanh classifier with exact differential primitives.

Everything is float64 numpy, trained with plain mini-batch gradient descent.
Determinism contract: the parameter vector after training is a pure function
of (dataset bytes, hyperparameters); both the init stream and the per-epoch
shuffle stream are derived from ``weight_init_seed``.

The Hessian-vector product uses the forward-over-reverse (Pearlmutter)
construction and never materializes the Hessian. Gradients and HVPs are
checked against central finite differences in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import Dataset, kept_columns_after_drop
from .errors import DimensionMismatch, EmptyDataset, RangeError

N_CLASSES = 2
ACTIVATION = "tanh"
_INIT_STREAM = 0
_SHUFFLE_STREAM = 1
MODEL_FORMAT = "fairtrim-model"
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Hyperparameters:
    hidden1: int
    hidden2: int
    batch_size: int
    epochs: int = 1000
    learning_rate: float = 0.01
    weight_init_seed: int = 0

    def __post_init__(self):
        if self.hidden1 < 1 or self.hidden2 < 1:
            raise RangeError("hidden layer sizes must be >= 1")
        if self.batch_size < 1:
            raise RangeError("batch_size must be >= 1")
        if self.epochs < 0:
            raise RangeError("epochs must be >= 0")
        if not (self.learning_rate > 0 and np.isfinite(self.learning_rate)):
            raise RangeError("learning_rate must be positive and finite")


def param_count(input_dim: int, hidden1: int, hidden2: int) -> int:
    return (
        input_dim * hidden1 + hidden1
        + hidden1 * hidden2 + hidden2
        + hidden2 * N_CLASSES + N_CLASSES
    )


def _unpack(theta: np.ndarray, d: int, h1: int, h2: int):
    """Views into the flat parameter vector, layout W1,b1,W2,b2,W3,b3."""
    o = 0
    W1 = theta[o : o + d * h1].reshape(d, h1); o += d * h1
    b1 = theta[o : o + h1]; o += h1
    W2 = theta[o : o + h1 * h2].reshape(h1, h2); o += h1 * h2
    b2 = theta[o : o + h2]; o += h2
    W3 = theta[o : o + h2 * N_CLASSES].reshape(h2, N_CLASSES); o += h2 * N_CLASSES
    b3 = theta[o : o + N_CLASSES]
    return W1, b1, W2, b2, W3, b3


def _pack(W1, b1, W2, b2, W3, b3) -> np.ndarray:
    return np.concatenate(
        [W1.ravel(), b1.ravel(), W2.ravel(), b2.ravel(), W3.ravel(), b3.ravel()]
    )


@dataclass(frozen=True, eq=False)
class Model:
    input_dim: int
    hidden1: int
    hidden2: int
    theta: np.ndarray  # flat float64, see _unpack for layout
    activation: str = ACTIVATION
    final_train_loss: float | None = None

    def __post_init__(self):
        if self.activation != ACTIVATION:
            raise RangeError(f"unsupported activation {self.activation!r}")
        expected = param_count(self.input_dim, self.hidden1, self.hidden2)
        if self.theta.shape != (expected,):
            raise DimensionMismatch(
                f"theta has shape {self.theta.shape}, expected ({expected},)"
            )
        self.theta.setflags(write=False)

    @property
    def n_params(self) -> int:
        return self.theta.size

    def unpack(self):
        return _unpack(self.theta, self.input_dim, self.hidden1, self.hidden2)

    def with_theta(self, theta: np.ndarray) -> "Model":
        return replace(self, theta=np.array(theta, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class FeatureMaskedModel:
    """Predicts on full-width vectors by selecting the columns ``inner`` saw.

    Built for models retrained after drop_sensitive: the wrapper lives in the
    original feature space, so it can be evaluated on the same synthetic pools
    as unmasked models while provably ignoring the masked columns.
    """

    inner: Model
    keep: np.ndarray  # indices into full-width vectors
    input_dim: int  # full width

    def __post_init__(self):
        if self.inner.input_dim != self.keep.size:
            raise DimensionMismatch(
                f"mask keeps {self.keep.size} columns but inner model "
                f"expects {self.inner.input_dim}"
            )
        self.keep.setflags(write=False)


def mask_sensitive(inner: Model, original: Dataset) -> FeatureMaskedModel:
    """Wrap a model trained after drop_sensitive(original)."""
    return FeatureMaskedModel(
        inner=inner, keep=kept_columns_after_drop(original), input_dim=original.width
    )


def _check_features(m, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != m.input_dim:
        raise DimensionMismatch(
            f"feature matrix has shape {X.shape}, model expects (*, {m.input_dim})"
        )
    return X


# --- forward / loss ---------------------------------------------------------

def _forward(theta, d, h1, h2, X):
    W1, b1, W2, b2, W3, b3 = _unpack(theta, d, h1, h2)
    z1 = X @ W1 + b1
    a1 = np.tanh(z1)
    z2 = a1 @ W2 + b2
    a2 = np.tanh(z2)
    z3 = a2 @ W3 + b3
    shift = z3 - z3.max(axis=1, keepdims=True)
    logp = shift - np.log(np.exp(shift).sum(axis=1, keepdims=True))
    return a1, a2, logp


def predict_proba(m, X: np.ndarray) -> np.ndarray:
    """(n, 2) class probabilities."""
    if isinstance(m, FeatureMaskedModel):
        X = _check_features(m, X)
        return predict_proba(m.inner, X[:, m.keep])
    X = _check_features(m, X)
    _, _, logp = _forward(m.theta, m.input_dim, m.hidden1, m.hidden2, X)
    return np.exp(logp)


def predict_batch(m, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Predicted labels and winning-class probabilities (confidence >= 0.5)."""
    p = predict_proba(m, X)
    labels = np.argmax(p, axis=1).astype(np.int64)
    conf = p[np.arange(p.shape[0]), labels]
    return labels, conf


def predict(m, x: np.ndarray) -> tuple[int, float]:
    labels, conf = predict_batch(m, np.asarray(x, dtype=np.float64).reshape(1, -1))
    return int(labels[0]), float(conf[0])


def mean_loss(m: Model, X: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy of the batch."""
    X = _check_features(m, X)
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (X.shape[0],):
        raise DimensionMismatch(f"labels shape {y.shape} does not match {X.shape[0]} rows")
    if X.shape[0] == 0:
        raise EmptyDataset("loss over an empty batch is undefined")
    _, _, logp = _forward(m.theta, m.input_dim, m.hidden1, m.hidden2, X)
    return float(-logp[np.arange(X.shape[0]), y].mean())


# --- gradients --------------------------------------------------------------

def _backward(theta, d, h1, h2, X, y, scale):
    """Gradient of sum_i scale_i * loss_i. ``scale`` is (n,) weights."""
    W1, b1, W2, b2, W3, b3 = _unpack(theta, d, h1, h2)
    a1, a2, logp = _forward(theta, d, h1, h2, X)
    p = np.exp(logp)
    dz3 = p.copy()
    dz3[np.arange(X.shape[0]), y] -= 1.0
    dz3 *= scale[:, None]
    gW3 = a2.T @ dz3
    gb3 = dz3.sum(axis=0)
    da2 = dz3 @ W3.T
    dz2 = da2 * (1.0 - a2 * a2)
    gW2 = a1.T @ dz2
    gb2 = dz2.sum(axis=0)
    da1 = dz2 @ W2.T
    dz1 = da1 * (1.0 - a1 * a1)
    gW1 = X.T @ dz1
    gb1 = dz1.sum(axis=0)
    return _pack(gW1, gb1, gW2, gb2, gW3, gb3)


def mean_grad(m: Model, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of the mean cross-entropy over the batch, shape (n_params,)."""
    X = _check_features(m, X)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    if n == 0:
        raise EmptyDataset("gradient over an empty batch is undefined")
    scale = np.full(n, 1.0 / n)
    return _backward(m.theta, m.input_dim, m.hidden1, m.hidden2, X, y, scale)


def grad_loss(m: Model, x: np.ndarray, y: int) -> np.ndarray:
    """Gradient of one example's cross-entropy, shape (n_params,)."""
    X = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return mean_grad(m, X, np.asarray([y], dtype=np.int64))


def per_example_grads(m: Model, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row i is grad_theta of example i's own loss; shape (n, n_params)."""
    X = _check_features(m, X)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    if n == 0:
        raise EmptyDataset("gradients over an empty batch are undefined")
    W1, b1, W2, b2, W3, b3 = m.unpack()
    a1, a2, logp = _forward(m.theta, m.input_dim, m.hidden1, m.hidden2, X)
    p = np.exp(logp)
    dz3 = p
    dz3[np.arange(n), y] -= 1.0
    da2 = dz3 @ W3.T
    dz2 = da2 * (1.0 - a2 * a2)
    da1 = dz2 @ W2.T
    dz1 = da1 * (1.0 - a1 * a1)
    blocks = [
        np.einsum("ni,nj->nij", X, dz1).reshape(n, -1),
        dz1,
        np.einsum("ni,nj->nij", a1, dz2).reshape(n, -1),
        dz2,
        np.einsum("ni,nj->nij", a2, dz3).reshape(n, -1),
        dz3,
    ]
    return np.hstack(blocks)


# --- Hessian-vector product -------------------------------------------------

def hvp(m: Model, v: np.ndarray, batch: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    """H @ v for the mean-loss Hessian over ``batch``, without forming H.

    Forward-over-reverse: propagate the directional tangent of every forward
    intermediate, then the tangent of every backward intermediate. Exact up
    to float64 rounding.
    """
    X, y = batch
    X = _check_features(m, X)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    if n == 0:
        raise EmptyDataset("HVP over an empty batch is undefined")
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (m.n_params,):
        raise DimensionMismatch(f"v has shape {v.shape}, expected ({m.n_params},)")

    d, h1, h2 = m.input_dim, m.hidden1, m.hidden2
    W1, b1, W2, b2, W3, b3 = m.unpack()
    V1, c1, V2, c2, V3, c3 = _unpack(v, d, h1, h2)

    # forward pass and its tangent
    a1, a2, logp = _forward(m.theta, d, h1, h2, X)
    p = np.exp(logp)
    s1 = 1.0 - a1 * a1  # tanh'
    s2 = 1.0 - a2 * a2
    Rz1 = X @ V1 + c1
    Ra1 = s1 * Rz1
    Rz2 = Ra1 @ W2 + a1 @ V2 + c2
    Ra2 = s2 * Rz2
    Rz3 = Ra2 @ W3 + a2 @ V3 + c3
    Rp = p * (Rz3 - (p * Rz3).sum(axis=1, keepdims=True))

    # backward pass and its tangent (mean loss: 1/n on the top delta)
    dz3 = p.copy()
    dz3[np.arange(n), y] -= 1.0
    dz3 /= n
    da2 = dz3 @ W3.T
    dz2 = da2 * s2
    da1 = dz2 @ W2.T
    dz1 = da1 * s1

    Rdz3 = Rp / n
    RgW3 = Ra2.T @ dz3 + a2.T @ Rdz3
    Rgb3 = Rdz3.sum(axis=0)
    Rda2 = Rdz3 @ W3.T + dz3 @ V3.T
    Rdz2 = Rda2 * s2 - 2.0 * da2 * a2 * Ra2
    RgW2 = Ra1.T @ dz2 + a1.T @ Rdz2
    Rgb2 = Rdz2.sum(axis=0)
    Rda1 = Rdz2 @ W2.T + dz2 @ V2.T
    Rdz1 = Rda1 * s1 - 2.0 * da1 * a1 * Ra1
    RgW1 = X.T @ Rdz1
    Rgb1 = Rdz1.sum(axis=0)
    return _pack(RgW1, Rgb1, RgW2, Rgb2, RgW3, Rgb3)


# --- training ---------------------------------------------------------------

def _init_theta(input_dim: int, h1: int, h2: int, seed: int) -> np.ndarray:
    """uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) for each layer's W and b."""
    rng = np.random.default_rng([seed, _INIT_STREAM])
    parts = []
    for fan_in, fan_out in ((input_dim, h1), (h1, h2), (h2, N_CLASSES)):
        bound = 1.0 / np.sqrt(fan_in)
        parts.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
        parts.append(rng.uniform(-bound, bound, size=fan_out))
    # layout order is W1,b1,W2,b2,W3,b3, same as _pack
    return np.concatenate(parts)


def train(d: Dataset, hp: Hyperparameters, init: Model | None = None) -> Model:
    """Mini-batch gradient descent on mean cross-entropy.

    One epoch = one fresh permutation of the rows split into consecutive
    batches (last batch may be short). The permutation stream is derived from
    weight_init_seed, so retraining is bit-reproducible.
    """
    n = len(d)
    if n == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    X, y = d.encoded, d.labels
    dim = d.width
    if init is not None:
        if init.input_dim != dim:
            raise DimensionMismatch(
                f"warm start expects {init.input_dim} features, dataset has {dim}"
            )
        theta = init.theta.copy()
        h1, h2 = init.hidden1, init.hidden2
        if (h1, h2) != (hp.hidden1, hp.hidden2):
            raise DimensionMismatch("warm start hidden sizes disagree with hyperparameters")
    else:
        h1, h2 = hp.hidden1, hp.hidden2
        theta = _init_theta(dim, h1, h2, hp.weight_init_seed)

    shuffle = np.random.default_rng([hp.weight_init_seed, _SHUFFLE_STREAM])
    for _ in range(hp.epochs):
        perm = shuffle.permutation(n)
        for start in range(0, n, hp.batch_size):
            idx = perm[start : start + hp.batch_size]
            scale = np.full(idx.size, 1.0 / idx.size)
            g = _backward(theta, dim, h1, h2, X[idx], y[idx], scale)
            theta -= hp.learning_rate * g

    m = Model(input_dim=dim, hidden1=h1, hidden2=h2, theta=theta)
    return replace(m, final_train_loss=mean_loss(m, X, y))


# --- persistence ------------------------------------------------------------

def save_model(m: Model, path: str | Path) -> None:
    obj = {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "input_dim": m.input_dim,
        "hidden1": m.hidden1,
        "hidden2": m.hidden2,
        "activation": m.activation,
        "final_train_loss": m.final_train_loss,
        "theta": m.theta.tolist(),  # repr-exact floats, round-trips bitwise
    }
    with open(path, "w") as fh:
        json.dump(obj, fh)


def load_model(path: str | Path) -> Model:
    with open(path) as fh:
        obj = json.load(fh)
    if obj.get("format") != MODEL_FORMAT or obj.get("version") != MODEL_FORMAT_VERSION:
        raise DimensionMismatch(
            f"{path} is not a version-{MODEL_FORMAT_VERSION} {MODEL_FORMAT} file"
        )
    return Model(
        input_dim=int(obj["input_dim"]),
        hidden1=int(obj["hidden1"]),
        hidden2=int(obj["hidden2"]),
        theta=np.asarray(obj["theta"], dtype=np.float64),
        activation=obj["activation"],
        final_train_loss=obj["final_train_loss"],
    )
