"""Dense feed-forward networks written directly in numpy.

Rows are samples: a layer computes ``act(X @ W.T + b)`` with ``W`` shaped
``(out, in)``. Gradients are produced by an explicit reverse pass and checked
against central finite differences in the test-suite.
"""

from __future__ import annotations

import base64
import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidWeights,
    NonFiniteActivation,
    NonFiniteLoss,
    ShapeMismatch,
    StaleCache,
    UnsupportedVersion,
)

RELU, SIGMOID, IDENTITY = "relu", "sigmoid", "identity"
PROB_EPS = 1e-7
MLP_SCHEMA = "icsids.mlp/1"

_version_counter = itertools.count(1)


def relu(z):
    return np.maximum(z, 0.0)


def sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


_ACT = {RELU: relu, SIGMOID: sigmoid, IDENTITY: lambda z: z}


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == RELU:
        return (z > 0).astype(z.dtype)  # derivative at exactly 0 taken as 0
    if name == SIGMOID:
        return a * (1.0 - a)
    return np.ones_like(z)


@dataclass
class DenseLayer:
    W: np.ndarray
    b: np.ndarray
    activation: str = RELU

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64).ravel()
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ShapeMismatch(f"W {self.W.shape} incompatible with b {self.b.shape}")
        if self.activation not in _ACT:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]


def glorot_limit(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def dense(n_in: int, n_out: int, activation: str, rng: np.random.Generator) -> DenseLayer:
    lim = glorot_limit(n_in, n_out)
    W = rng.uniform(-lim, lim, size=(n_out, n_in))
    assert np.all(np.abs(W) <= lim)
    return DenseLayer(W, np.zeros(n_out), activation)


@dataclass(eq=False)
class MlpModel:
    layers: list[DenseLayer]
    dropout_rate: float = 0.0
    version: int = field(default_factory=lambda: next(_version_counter), repr=False)

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.n_out != b.n_in:
                raise ShapeMismatch(f"layer output {a.n_out} feeds layer input {b.n_in}")

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].n_in] + [l.n_out for l in self.layers]

    def params(self) -> list[np.ndarray]:
        return [p for l in self.layers for p in (l.W, l.b)]

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def touch(self) -> None:
        """Mark parameters as changed; outstanding forward caches become stale."""
        self.version = next(_version_counter)

    def copy(self) -> "MlpModel":
        return MlpModel(
            [DenseLayer(l.W.copy(), l.b.copy(), l.activation) for l in self.layers],
            self.dropout_rate,
        )


def build_mlp(
    dims: Sequence[int],
    rng: np.random.Generator,
    hidden: str = RELU,
    output: str = SIGMOID,
    dropout_rate: float = 0.0,
) -> MlpModel:
    """Glorot-uniform initialised network with ``len(dims) - 1`` layers."""
    if len(dims) < 2:
        raise ValueError("need at least input and output dims")
    n = len(dims) - 1
    layers = [dense(dims[i], dims[i + 1], output if i == n - 1 else hidden, rng) for i in range(n)]
    return MlpModel(layers, dropout_rate)


# -- forward / backward -------------------------------------------------------


@dataclass
class Cache:
    model_id: int
    version: int
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    post: list[np.ndarray]
    masks: list[np.ndarray | None]


def forward(model: MlpModel, X, training: bool = False, rng: np.random.Generator | None = None):
    """Run the network; returns ``(output, cache)``.

    In training mode with a positive dropout rate every hidden activation is
    masked and scaled by ``1/(1-rate)`` (inverted dropout), so inference needs
    no correction.
    """
    A = np.asarray(X, dtype=np.float64)
    if A.ndim != 2 or A.shape[1] != model.layers[0].n_in:
        raise DimensionMismatch(f"input shape {A.shape}, expected (*, {model.layers[0].n_in})")
    use_dropout = training and model.dropout_rate > 0.0
    if use_dropout and rng is None:
        raise ValueError("training-mode dropout needs an rng")
    keep = 1.0 - model.dropout_rate
    inputs, pre, post, masks = [], [], [], []
    last = len(model.layers) - 1
    for i, layer in enumerate(model.layers):
        inputs.append(A)
        Z = A @ layer.W.T + layer.b
        A = _ACT[layer.activation](Z)
        mask = None
        if use_dropout and i < last:
            mask = (rng.random(A.shape) < keep) / keep
            A = A * mask
        pre.append(Z)
        post.append(A)
        masks.append(mask)
    if not np.isfinite(A).all():
        raise NonFiniteActivation("non-finite network output")
    return A, Cache(id(model), model.version, inputs, pre, post, masks)


def predict(model: MlpModel, X) -> np.ndarray:
    return forward(model, X)[0]


def hidden_and_output(model: MlpModel, X) -> tuple[np.ndarray, np.ndarray]:
    """Final hidden-layer activations and network output (inference mode)."""
    out, cache = forward(model, X)
    hidden = cache.post[-2] if len(model.layers) > 1 else cache.inputs[-1]
    return hidden, out


def backward(model: MlpModel, cache: Cache, loss_grad) -> list[np.ndarray]:
    """Gradients ``[dW0, db0, dW1, db1, ...]`` given dLoss/dOutput."""
    if cache.model_id != id(model) or cache.version != model.version:
        raise StaleCache("cache does not belong to the current model parameters")
    G = np.asarray(loss_grad, dtype=np.float64)
    if G.shape != cache.post[-1].shape:
        raise DimensionMismatch(f"loss gradient {G.shape} vs output {cache.post[-1].shape}")
    grads: list[np.ndarray] = [None] * (2 * len(model.layers))  # type: ignore[list-item]
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        if cache.masks[i] is not None:
            G = G * cache.masks[i]
            a = _ACT[layer.activation](cache.pre[i])
        else:
            a = cache.post[i]
        dZ = G * _act_grad(layer.activation, cache.pre[i], a)
        grads[2 * i] = dZ.T @ cache.inputs[i]
        grads[2 * i + 1] = dZ.sum(axis=0)
        G = dZ @ layer.W
    return grads


# -- losses -------------------------------------------------------------------


def _check_pair(pred, target):
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if t.shape != p.shape:
        if t.size == p.size:
            t = t.reshape(p.shape)
        else:
            raise DimensionMismatch(f"pred {p.shape} vs target {t.shape}")
    return p, t


def bce_loss(pred, target) -> float:
    """Mean binary cross-entropy; predictions clipped to [1e-7, 1 - 1e-7]."""
    return weighted_bce_loss(pred, target, 1.0, 1.0)


def weighted_bce_loss(pred, target, w_s: float, w_l: float = 1.0) -> float:
    """Class-weighted BCE: ``w_s`` multiplies attack (y=1) terms, ``w_l`` normal ones."""
    if not (w_s >= w_l > 0):
        raise InvalidWeights(f"need w_s >= w_l > 0, got w_s={w_s}, w_l={w_l}")
    p, t = _check_pair(pred, target)
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    terms = t * np.log(p) * w_s + (1.0 - t) * np.log(1.0 - p) * w_l
    return float(-terms.mean())


def weighted_bce_grad(pred, target, w_s: float = 1.0, w_l: float = 1.0) -> np.ndarray:
    p, t = _check_pair(pred, target)
    # evaluated at the clipped point but not zeroed outside the clip range, so a
    # saturated wrong output still receives a signal
    pc = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    return -(t * w_s / pc - (1.0 - t) * w_l / (1.0 - pc)) / p.size


def mse_loss(pred, target) -> float:
    p, t = _check_pair(pred, target)
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.mean((p - t) ** 2))


def mse_grad(pred, target) -> np.ndarray:
    p, t = _check_pair(pred, target)
    return 2.0 * (p - t) / p.size


@dataclass(frozen=True)
class Loss:
    """A loss selector: value and gradient with respect to the network output."""

    name: str
    w_s: float = 1.0
    w_l: float = 1.0

    def __post_init__(self):
        if self.name not in ("bce", "weighted_bce", "mse"):
            raise ValueError(f"unknown loss {self.name!r}")
        if not (self.w_s >= self.w_l > 0):
            raise InvalidWeights(f"need w_s >= w_l > 0, got w_s={self.w_s}, w_l={self.w_l}")

    def value(self, pred, target) -> float:
        if self.name == "mse":
            return mse_loss(pred, target)
        return weighted_bce_loss(pred, target, self.w_s, self.w_l)

    def grad(self, pred, target) -> np.ndarray:
        if self.name == "mse":
            return mse_grad(pred, target)
        return weighted_bce_grad(pred, target, self.w_s, self.w_l)


BCE = Loss("bce")
MSE = Loss("mse")


def weighted_bce(w_s: float, w_l: float = 1.0) -> Loss:
    return Loss("weighted_bce", w_s, w_l)


# -- optimisation -------------------------------------------------------------


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray], **hyper) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **hyper)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState):
    """One bias-corrected Adam update, applied in place; returns ``(params, state)``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatch("params, grads and optimizer state differ in length")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeMismatch(f"param {p.shape} vs grad {np.shape(g)}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def grad_check(model: MlpModel, loss: Loss, X, y, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients."""
    out, cache = forward(model, X)
    analytic = backward(model, cache, loss.grad(out, y))
    worst = 0.0
    for p, a in zip(model.params(), analytic):
        flat = p.reshape(-1)
        af = a.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = loss.value(forward(model, X)[0], y)
            flat[j] = orig - h
            down = loss.value(forward(model, X)[0], y)
            flat[j] = orig
            num = (up - down) / (2.0 * h)
            err = abs(af[j] - num) / max(abs(af[j]), abs(num), 1e-8)
            worst = max(worst, err)
    model.touch()
    return worst


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3


def train_mlp(
    model: MlpModel,
    X,
    targets,
    loss: Loss = BCE,
    epochs: int = 50,
    batch_size: int = 64,
    seed: int = 0,
    lr: float = 1e-3,
    on_epoch: Callable[[int, float], None] | None = None,
) -> tuple[MlpModel, list[float]]:
    """Shuffled mini-batch Adam training; returns the model and per-epoch mean loss."""
    X = np.asarray(X, dtype=np.float64)
    T = np.asarray(targets, dtype=np.float64)
    if T.ndim == 1:
        T = T.reshape(-1, 1)
    if X.shape[0] != T.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} inputs vs {T.shape[0]} targets")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    rng = np.random.default_rng(seed)
    params = model.params()
    state = AdamState.zeros_like(params, lr=lr)
    history: list[float] = []
    n = X.shape[0]
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            out, cache = forward(model, X[idx], training=True, rng=rng)
            value = loss.value(out, T[idx])
            if not np.isfinite(value):
                raise NonFiniteLoss(f"loss became {value} at epoch {epoch}, batch offset {start}")
            grads = backward(model, cache, loss.grad(out, T[idx]))
            adam_step(params, grads, state)
            model.touch()
            total += value * idx.size
        history.append(total / n)
        if on_epoch is not None:
            on_epoch(epoch, history[-1])
    return model, history


# -- stacked autoencoder ------------------------------------------------------


@dataclass(eq=False)
class SaeModel:
    encoder: MlpModel
    decoder: MlpModel

    def __post_init__(self):
        if self.decoder.dims[-1] != self.encoder.dims[0]:
            raise ShapeMismatch("decoder must reconstruct the encoder input width")
        if self.decoder.dims[0] != self.encoder.dims[-1]:
            raise ShapeMismatch("decoder input must equal representation width")

    @property
    def representation_dim(self) -> int:
        return self.encoder.dims[-1]

    def joined(self) -> MlpModel:
        """Encoder followed by decoder, sharing layer objects with both."""
        return MlpModel(self.encoder.layers + self.decoder.layers, self.encoder.dropout_rate)


def build_sae(n_in: int, hidden: Sequence[int] = (32, 16), rng=None, dropout_rate: float = 0.2) -> SaeModel:
    rng = rng if rng is not None else np.random.default_rng(0)
    enc_dims = [n_in, *hidden]
    dec_dims = enc_dims[::-1]
    encoder = build_mlp(enc_dims, rng, hidden=RELU, output=RELU, dropout_rate=dropout_rate)
    decoder = build_mlp(dec_dims, rng, hidden=RELU, output=SIGMOID, dropout_rate=dropout_rate)
    return SaeModel(encoder, decoder)


def reconstruction_loss(sae: SaeModel, X) -> float:
    return bce_loss(predict(sae.joined(), X), X)


def reconstruction_excess(sae: SaeModel, X) -> float:
    """Reconstruction BCE minus its floor (the entropy of the targets themselves).

    BCE against non-binary targets never reaches zero; the excess does, at a
    perfect reconstruction, so it is the quantity to compare across training.
    """
    X = np.asarray(X, dtype=np.float64)
    return reconstruction_loss(sae, X) - bce_loss(X, X)


def train_autoencoder(
    sae: SaeModel, X, epochs: int = 50, batch_size: int = 64, seed: int = 0, lr: float = 1e-3
) -> tuple[SaeModel, list[float]]:
    """Minimise BCE between inputs in [0, 1] and their reconstructions."""
    X = np.asarray(X, dtype=np.float64)
    if X.size and (X.min() < 0.0 or X.max() > 1.0):
        raise ValueError("autoencoder inputs must be scaled to [0, 1]")
    net = sae.joined()
    _, history = train_mlp(net, X, X, BCE, epochs, batch_size, seed, lr)
    sae.encoder.touch()
    sae.decoder.touch()
    return sae, history


def encode(sae: SaeModel, X) -> np.ndarray:
    return predict(sae.encoder, X)


def decode(sae: SaeModel, H) -> np.ndarray:
    return predict(sae.decoder, H)


# -- serialization ------------------------------------------------------------


def _pack(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _unpack(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).astype(np.float64)


def mlp_to_dict(model: MlpModel) -> dict:
    return {
        "schema": MLP_SCHEMA,
        "dims": model.dims,
        "dropout_rate": model.dropout_rate,
        "layers": [
            {"activation": l.activation, "W": _pack(l.W), "b": _pack(l.b)} for l in model.layers
        ],
    }


def mlp_from_dict(d: dict) -> MlpModel:
    if d.get("schema") != MLP_SCHEMA:
        raise UnsupportedVersion(f"unsupported model schema {d.get('schema')!r}")
    layers = [DenseLayer(_unpack(l["W"]), _unpack(l["b"]), l["activation"]) for l in d["layers"]]
    model = MlpModel(layers, float(d["dropout_rate"]))
    if model.dims != list(d["dims"]):
        raise ShapeMismatch("declared dims disagree with stored arrays")
    return model


def sae_to_dict(sae: SaeModel) -> dict:
    return {"encoder": mlp_to_dict(sae.encoder), "decoder": mlp_to_dict(sae.decoder)}


def sae_from_dict(d: dict) -> SaeModel:
    return SaeModel(mlp_from_dict(d["encoder"]), mlp_from_dict(d["decoder"]))
