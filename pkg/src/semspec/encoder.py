"""Trainable adapter over frozen base sentence embeddings.

The adapter plays the role of the multilingual encoder: any provider of base
embeddings (a synthetic generator, a dump of pre-trained vectors, ...) can be fed
through it. With the residual connection on and the output layer zeroed, the
adapter starts as the identity map.
"""

import numpy as np

from .errors import ShapeError
from .nn import DenseLayer, dense_backward, dense_forward


class AdapterEncoder:
    def __init__(self, dim, hidden=None, n_hidden_layers=1, residual=True, rng=None, zero_output=True):
        if rng is None:
            rng = np.random.default_rng(0)
        hidden = hidden or dim
        self.dim = dim
        self.residual = residual
        self.layers = []
        width = dim
        for _ in range(n_hidden_layers):
            self.layers.append(DenseLayer.init(rng, width, hidden, "tanh"))
            width = hidden
        self.layers.append(
            DenseLayer.init(rng, width, dim, "identity", zero=residual and zero_output)
        )

    def params(self):
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"layer{i}.weight"] = layer.weight
            out[f"layer{i}.bias"] = layer.bias
        return out

    def load_params(self, values):
        for i, layer in enumerate(self.layers):
            layer.weight[...] = values[f"layer{i}.weight"]
            layer.bias[...] = values[f"layer{i}.bias"]

    def config(self):
        return {
            "dim": self.dim,
            "hidden": self.layers[0].n_out if len(self.layers) > 1 else self.dim,
            "n_hidden_layers": len(self.layers) - 1,
            "residual": self.residual,
        }


def encode(encoder: AdapterEncoder, base: np.ndarray):
    """Map base embeddings ``(batch, d)`` to specialized embeddings.

    Returns ``(u, cache)``.
    """
    base = np.asarray(base, dtype=np.float64)
    if base.ndim != 2 or base.shape[1] != encoder.dim:
        raise ShapeError(f"base embeddings {base.shape} do not match encoder dim {encoder.dim}")
    h = base
    caches = []
    for layer in encoder.layers:
        h, c = dense_forward(layer, h)
        caches.append(c)
    if encoder.residual:
        h = base + h
    return h, caches


def encode_backward(encoder: AdapterEncoder, cache, grad_u):
    """Return ``(grad_base, parameter_grads)`` for an upstream gradient on u."""
    grads = {}
    g = grad_u
    for i in reversed(range(len(encoder.layers))):
        g, layer_grads = dense_backward(encoder.layers[i], cache[i], g)
        grads[f"layer{i}.weight"] = layer_grads["weight"]
        grads[f"layer{i}.bias"] = layer_grads["bias"]
    if encoder.residual:
        g = g + grad_u
    return g, grads
