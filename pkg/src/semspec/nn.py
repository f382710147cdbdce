"""Dense-network numerics with hand-written reverse-mode gradients.

Everything works on float64 numpy arrays. Forward functions return the output
together with a cache of the intermediates the matching backward function
needs, so forward passes never mutate the layer and can be run concurrently.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, NumericError, ShapeError

ACTIVATIONS = ("identity", "tanh", "relu")


def glorot_uniform(rng: np.random.Generator, n_out: int, n_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_out, n_in))


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "identity"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"weight {self.weight.shape} and bias {self.bias.shape} are inconsistent"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def init(cls, rng, n_in, n_out, activation="identity", zero=False):
        weight = np.zeros((n_out, n_in)) if zero else glorot_uniform(rng, n_out, n_in)
        return cls(weight, np.zeros(n_out), activation)

    @property
    def n_in(self):
        return self.weight.shape[1]

    @property
    def n_out(self):
        return self.weight.shape[0]

    def params(self):
        return {"weight": self.weight, "bias": self.bias}


def _activate(z, activation):
    if activation == "tanh":
        return np.tanh(z)
    if activation == "relu":
        return np.maximum(z, 0.0)
    return z


def _activation_grad(z, y, activation):
    if activation == "tanh":
        return 1.0 - y * y
    if activation == "relu":
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def dense_forward(layer: DenseLayer, x: np.ndarray):
    """Compute ``activation(x @ W.T + b)`` for a batch of row vectors.

    Returns ``(output, cache)``; pass the cache to :func:`dense_backward`.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != layer.n_in:
        raise ShapeError(f"input shape {x.shape} does not match layer input dim {layer.n_in}")
    z = x @ layer.weight.T + layer.bias
    y = _activate(z, layer.activation)
    return y, (x, z, y)


def dense_backward(layer: DenseLayer, cache, grad_out: np.ndarray):
    """Return ``(grad_input, {"weight": dW, "bias": db})``."""
    x, z, y = cache
    grad_z = grad_out * _activation_grad(z, y, layer.activation)
    grads = {"weight": grad_z.T @ x, "bias": grad_z.sum(axis=0)}
    return grad_z @ layer.weight, grads


def dropout_forward(x, p, rng=None, train=False):
    """Inverted dropout. Identity (mask ``None``) outside training or when p == 0."""
    if not train or p <= 0.0:
        return x, None
    if rng is None:
        raise ValueError("dropout in train mode needs an explicit generator")
    keep = 1.0 - p
    mask = (rng.random(x.shape) < keep) / keep
    return x * mask, mask


def dropout_backward(mask, grad_out):
    return grad_out if mask is None else grad_out * mask


def l2_normalize_scale(u: np.ndarray, alpha: float) -> np.ndarray:
    """Project ``u`` (a vector, or each row of a matrix) onto the sphere of radius alpha."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    u = np.asarray(u, dtype=np.float64)
    norms = np.linalg.norm(u, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise DegenerateInputError("cannot normalize a zero-norm vector")
    return alpha * u / norms


def l2_normalize_scale_backward(u, alpha, grad_out):
    """Vector-Jacobian product of :func:`l2_normalize_scale`.

    The Jacobian at u is ``alpha / |u| * (I - n n^T)`` with ``n = u / |u|``.
    """
    u = np.asarray(u, dtype=np.float64)
    norms = np.linalg.norm(u, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise DegenerateInputError("cannot normalize a zero-norm vector")
    n = u / norms
    radial = np.sum(n * grad_out, axis=-1, keepdims=True)
    return alpha / norms * (grad_out - radial * n)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState):
    """Bias-corrected Adam update, applied in place to the arrays in ``params``.

    Moment buffers are created lazily per parameter name. Returns
    ``(params, state)`` for convenience.
    """
    for name, p in params.items():
        g = grads.get(name)
        if g is None or np.shape(g) != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {np.shape(g)}, expected {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name!r}")
        if name in state.m and state.m[name].shape != p.shape:
            raise ShapeError(f"optimizer state for {name!r} does not match parameter shape")

    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for name, p in params.items():
        g = grads[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def clip_parameters(params: dict, c: float) -> dict:
    """Clamp every entry into [-c, c], in place."""
    if c <= 0:
        raise ValueError("clipping bound must be positive")
    for p in params.values():
        np.clip(p, -c, c, out=p)
    return params
