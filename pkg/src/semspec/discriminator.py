"""Language discriminator: is this embedding from training language t?

Two ReLU hidden layers with dropout feed a single logistic unit. The
discriminator is trained with cross-entropy and, like a WGAN critic, has its
weights clipped to [-c, c] after every update.
"""

import numpy as np

from .errors import ShapeError
from .losses import LossResult
from .nn import (
    AdamState,
    DenseLayer,
    adam_step,
    clip_parameters,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
)

P_EPS = 1e-12


class LanguageDiscriminator:
    def __init__(self, language, dim, hidden=900, dropout_p=0.2, lr=5e-4, rng=None, clip_c=None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.language = language
        self.dim = dim
        self.dropout_p = dropout_p
        self.layers = [
            DenseLayer.init(rng, dim, hidden, "relu"),
            DenseLayer.init(rng, hidden, hidden, "relu"),
            DenseLayer.init(rng, hidden, 1, "identity"),
        ]
        self.adam = AdamState(lr=lr)
        if clip_c is not None:
            clip_parameters(self.params(), clip_c)

    def params(self):
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"layer{i}.weight"] = layer.weight
            out[f"layer{i}.bias"] = layer.bias
        return out


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def disc_logits(D: LanguageDiscriminator, embeddings, train_mode=False, rng=None):
    """Raw scores ``(n,)`` plus the cache needed by :func:`disc_backward`."""
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != D.dim:
        raise ShapeError(f"embeddings {x.shape} do not match discriminator input dim {D.dim}")
    caches = []
    h = x
    last = len(D.layers) - 1
    for i, layer in enumerate(D.layers):
        h, c = dense_forward(layer, h)
        mask = None
        if i < last:
            h, mask = dropout_forward(h, D.dropout_p, rng, train_mode)
        caches.append((c, mask))
    return h[:, 0], caches


def disc_backward(D: LanguageDiscriminator, caches, grad_logits):
    """Return ``(grad_embeddings, parameter_grads)``."""
    grads = {}
    g = np.asarray(grad_logits, dtype=np.float64)[:, None]
    for i in reversed(range(len(D.layers))):
        c, mask = caches[i]
        g = dropout_backward(mask, g)
        g, layer_grads = dense_backward(D.layers[i], c, g)
        grads[f"layer{i}.weight"] = layer_grads["weight"]
        grads[f"layer{i}.bias"] = layer_grads["bias"]
    return g, grads


def disc_forward(D, embeddings, train_mode=False, rng=None):
    """Per-row probability that the sentence is in the discriminator's language."""
    z, _ = disc_logits(D, embeddings, train_mode, rng)
    return sigmoid(z)


def disc_loss(p_t, p_adv) -> LossResult:
    """Cross-entropy with label 1 for the language-t batch and 0 for the adversarial batch."""
    p_t = np.clip(np.asarray(p_t, dtype=np.float64), P_EPS, 1.0 - P_EPS)
    p_adv = np.clip(np.asarray(p_adv, dtype=np.float64), P_EPS, 1.0 - P_EPS)
    loss = float(np.mean(-np.log(p_t)) + np.mean(-np.log1p(-p_adv)))
    grads = {
        "p_t": -1.0 / (p_t * p_t.size),
        "p_adv": 1.0 / ((1.0 - p_adv) * p_adv.size),
    }
    return LossResult(loss, grads)


def wasserstein_loss(z_t, z_adv) -> LossResult:
    """Critic objective ``mean(score on adversarial) - mean(score on language t)``."""
    z_t = np.asarray(z_t, dtype=np.float64)
    z_adv = np.asarray(z_adv, dtype=np.float64)
    loss = float(np.mean(z_adv) - np.mean(z_t))
    return LossResult(loss, {"z_t": np.full(z_t.shape, -1.0 / z_t.size),
                             "z_adv": np.full(z_adv.shape, 1.0 / z_adv.size)})


def _objective(D, u_t, v_adv, train_mode, rng, wasserstein):
    """Loss of D on the two batches and its gradient w.r.t. each batch's scores."""
    z_t, cache_t = disc_logits(D, u_t, train_mode, rng)
    z_a, cache_a = disc_logits(D, v_adv, train_mode, rng)
    if wasserstein:
        res = wasserstein_loss(z_t, z_a)
        gz_t, gz_a = res.grads["z_t"], res.grads["z_adv"]
    else:
        p_t, p_a = sigmoid(z_t), sigmoid(z_a)
        res = disc_loss(p_t, p_a)
        gz_t = res.grads["p_t"] * p_t * (1.0 - p_t)
        gz_a = res.grads["p_adv"] * p_a * (1.0 - p_a)
    return res.loss, (cache_t, gz_t), (cache_a, gz_a)


def disc_loss_and_grads(D, u_t, v_adv, train_mode=False, rng=None, wasserstein=False):
    """Loss of D plus gradients w.r.t. its parameters and both input batches.

    Nothing is updated; used both by the discriminator step and (with D
    frozen) by the encoder step.
    """
    loss, (cache_t, gz_t), (cache_a, gz_a) = _objective(D, u_t, v_adv, train_mode, rng, wasserstein)
    g_u, grads_t = disc_backward(D, cache_t, gz_t)
    g_v, grads_a = disc_backward(D, cache_a, gz_a)
    grads = {name: grads_t[name] + grads_a[name] for name in grads_t}
    return LossResult(loss, {"u_t": g_u, "v_adv": g_v, **grads})


def disc_update_step(D, u_t, v_adv, clip_c, rng=None, wasserstein=False):
    """One Adam step on D followed by weight clipping. Returns the pre-update loss.

    ``u_t`` and ``v_adv`` are plain arrays, so no gradient can reach the encoder.
    """
    if len(u_t) == 0 or len(v_adv) == 0:
        raise ValueError("both discriminator batches must be non-empty")
    res = disc_loss_and_grads(D, u_t, v_adv, train_mode=True, rng=rng, wasserstein=wasserstein)
    params = D.params()
    adam_step(params, {name: res.grads[name] for name in params}, D.adam)
    clip_parameters(params, clip_c)
    return res.loss


def probe_accuracy(embeddings, corpus, lang, hp, steps, rng):
    """Balanced test-split accuracy of a freshly trained discriminator for ``lang``.

    The probe has the same architecture, optimizer and clipping as the
    adversarial discriminator and is trained on the training split only.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    own = corpus.select(lang=lang, split="train")
    other = np.setdiff1d(corpus.select(split="train"), own)
    D = LanguageDiscriminator(lang, emb.shape[1], hp.disc_hidden, hp.dropout_p, hp.lr_disc, rng, clip_c=hp.clip_c)
    for _ in range(steps):
        a = own[rng.integers(own.size, size=hp.batch_size)]
        b = other[rng.integers(other.size, size=hp.batch_size)]
        disc_update_step(D, emb[a], emb[b], hp.clip_c, rng, hp.wasserstein)
    test_own = corpus.select(lang=lang, split="test")
    test_other = np.setdiff1d(corpus.select(split="test"), test_own)
    hit_own = np.mean(disc_logits(D, emb[test_own])[0] > 0.0)
    hit_other = np.mean(disc_logits(D, emb[test_other])[0] <= 0.0)
    return 0.5 * (float(hit_own) + float(hit_other))
