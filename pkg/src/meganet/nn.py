"""Dense MLP stack with exact reverse-mode gradients.

Everything runs in float64. Dropout is realized through seeded masks so a
training step can be replayed bit-for-bit, and the backward pass is exact
for the realized mask. A central finite-difference helper doubles as the
independent gradient oracle in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_ACTIVATIONS = ("relu", "gelu", "identity")


class NnError(ValueError):
    pass


@dataclass
class Mlp:
    """Fully connected layer stack; activation applied between layers only."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"
    dropout: float = 0.0

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise NnError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise NnError("dropout must be in [0, 1)")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise NnError("weights and biases must be non-empty and aligned")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise NnError(f"layer {i} parameter shapes are inconsistent")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise NnError(f"layer {i} input width mismatch")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise NnError(f"layer {i} has non-finite parameters")

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def in_width(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_width(self) -> int:
        return self.weights[-1].shape[1]


def init_mlp(
    layer_dims: list[int],
    rng: np.random.Generator,
    activation: str = "relu",
    dropout: float = 0.0,
) -> Mlp:
    """He-scaled random init."""
    if len(layer_dims) < 2:
        raise NnError("need at least input and output widths")
    weights, biases = [], []
    for din, dout in zip(layer_dims[:-1], layer_dims[1:]):
        scale = np.sqrt(2.0 / max(din, 1))
        weights.append(rng.normal(0.0, scale, size=(din, dout)))
        biases.append(np.zeros(dout))
    return Mlp(weights, biases, activation=activation, dropout=dropout)


@dataclass
class ParamGrads:
    """Gradient accumulator shaped like an Mlp's parameters."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def zeros_like(cls, m: Mlp) -> "ParamGrads":
        return cls([np.zeros_like(w) for w in m.weights],
                   [np.zeros_like(b) for b in m.biases])

    def add_(self, other: "ParamGrads") -> None:
        for a, b in zip(self.weights, other.weights):
            a += b
        for a, b in zip(self.biases, other.biases):
            a += b


def _act_forward(name: str, z: np.ndarray):
    if name == "identity":
        return z, None
    if name == "relu":
        return np.maximum(z, 0.0), (z > 0)
    # tanh-approximation gelu; the backward differentiates the same formula
    c = np.sqrt(2.0 / np.pi)
    inner = c * (z + 0.044715 * z ** 3)
    t = np.tanh(inner)
    return 0.5 * z * (1.0 + t), (z, t)


def _act_backward(name: str, aux, gout: np.ndarray) -> np.ndarray:
    if name == "identity":
        return gout
    if name == "relu":
        return gout * aux
    z, t = aux
    c = np.sqrt(2.0 / np.pi)
    dinner = c * (1.0 + 3 * 0.044715 * z ** 2)
    return gout * (0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * dinner)


def mlp_forward(
    m: Mlp,
    x: np.ndarray,
    train_mode: bool = False,
    dropout_mask_seed: int = 0,
):
    """Returns (output, cache). Dropout hits hidden activations only."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != m.in_width:
        raise NnError(f"input width {x.shape} does not match mlp input {m.in_width}")
    use_dropout = train_mode and m.dropout > 0.0
    drop_rng = np.random.default_rng(dropout_mask_seed) if use_dropout else None
    keep = 1.0 - m.dropout

    inputs, act_auxes, masks = [], [], []
    h = x
    last = len(m.weights) - 1
    for i, (w, b) in enumerate(zip(m.weights, m.biases)):
        inputs.append(h)
        z = h @ w + b
        if i < last:
            h, aux = _act_forward(m.activation, z)
            act_auxes.append(aux)
            if use_dropout:
                mask = (drop_rng.random(h.shape) < keep) / keep
                h = h * mask
                masks.append(mask)
            else:
                masks.append(None)
        else:
            h = z
    cache = {"mlp": m, "inputs": inputs, "act_auxes": act_auxes, "masks": masks}
    return h, cache


def mlp_backward(m: Mlp, cache, upstream: np.ndarray):
    """Exact gradients for the realized forward pass."""
    if cache.get("mlp") is not m:
        raise NnError("cache does not belong to this mlp")
    grads = ParamGrads.zeros_like(m)
    g = np.asarray(upstream, dtype=np.float64)
    last = len(m.weights) - 1
    for i in range(last, -1, -1):
        if i < last:
            mask = cache["masks"][i]
            if mask is not None:
                g = g * mask
            g = _act_backward(m.activation, cache["act_auxes"][i], g)
        h = cache["inputs"][i]
        grads.weights[i][...] = h.T @ g
        grads.biases[i][...] = g.sum(axis=0)
        g = g @ m.weights[i].T
    return g, grads


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def weighted_bce_loss(logits, labels, weights=(1.0, 1.0)):
    """Class-weighted binary cross-entropy in the stable softplus form.

    Returns (mean loss, gradient w.r.t. logits).
    """
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if z.shape != y.shape:
        raise NnError("logits and labels must align")
    if not np.isfinite(z).all():
        raise NnError("logits must be finite")
    w0, w1 = float(weights[0]), float(weights[1])
    if w0 <= 0 or w1 <= 0:
        raise NnError("class weights must be positive")
    w = np.where(y > 0.5, w1, w0)
    per_sample = w * (np.logaddexp(0.0, z) - y * z)
    loss = float(per_sample.mean())
    grad = w * (_sigmoid(z) - y) / z.size
    return loss, grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamState,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> np.ndarray:
    """Standard Adam update on a flat parameter vector; mutates state."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise NnError("params, grads and state must be shape-congruent")
    state.t += 1
    state.m = beta1 * state.m + (1 - beta1) * grads
    state.v = beta2 * state.v + (1 - beta2) * grads * grads
    mhat = state.m / (1 - beta1 ** state.t)
    vhat = state.v / (1 - beta2 ** state.t)
    return params - learning_rate * mhat / (np.sqrt(vhat) + eps)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters."""

    learning_rate: float = 0.003
    hidden_size: int = 64
    batch_size: int = 8192
    dropout: float = 0.1
    class_weights: tuple[float, float] = (1.0, 6.27)
    num_layers: int = 2
    seed: int = 0
    epochs: int = 80
    patience: int = 10

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise NnError("learning_rate must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise NnError("dropout must be in [0, 1)")
        if self.class_weights[0] <= 0 or self.class_weights[1] <= 0:
            raise NnError("class weights must be positive")
        if self.num_layers < 1:
            raise NnError("need at least one layer")


def finite_difference_grad(fn, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function, coordinate by coordinate."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = fn(x)
        flat[i] = orig - eps
        fm = fn(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return g


def directional_derivative_fd(fn, x: np.ndarray, direction: np.ndarray,
                              eps: float = 1e-5) -> float:
    d = direction / np.linalg.norm(direction)
    return (fn(x + eps * d) - fn(x - eps * d)) / (2 * eps)
