"""Semantic-classifier losses with analytic gradients.

Every loss returns a :class:`LossResult` holding the scalar value and a dict of
gradients keyed by input/parameter name.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, DomainError, ShapeError
from .nn import glorot_uniform, l2_normalize_scale, l2_normalize_scale_backward


@dataclass
class LossResult:
    loss: float
    grads: dict
    aux: dict = field(default_factory=dict)


@dataclass
class ClassifierHead:
    weight: np.ndarray  # (C, d)
    bias: np.ndarray  # (C,)

    @classmethod
    def init(cls, rng, n_classes, dim):
        if n_classes < 1:
            raise ValueError("need at least one class")
        return cls(glorot_uniform(rng, n_classes, dim), np.zeros(n_classes))

    @property
    def n_classes(self):
        return self.weight.shape[0]

    def params(self):
        return {"weight": self.weight, "bias": self.bias}


@dataclass
class CenterBank:
    centers: np.ndarray  # (C, d)
    lr: float = 0.5

    @classmethod
    def zeros(cls, n_classes, dim, lr=0.5):
        return cls(np.zeros((n_classes, dim)), lr)


def _check_labels(labels, n_classes):
    labels = np.asarray(labels)
    if labels.ndim != 1 or not np.issubdtype(labels.dtype, np.integer):
        raise DomainError("labels must be a 1-d integer array")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise DomainError(f"label out of range [0, {n_classes})")
    return labels


def softmax_ce_loss(logits, labels) -> LossResult:
    """Mean negative log-likelihood of the true classes."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] < 1:
        raise ShapeError("logits must be a non-empty (M, C) matrix")
    labels = _check_labels(labels, logits.shape[1])
    if labels.shape[0] != logits.shape[0]:
        raise ShapeError("one label per row is required")
    m = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(m)
    loss = float(np.mean(log_z - shifted[rows, labels]))
    probs = np.exp(shifted - log_z[:, None])
    grad = probs
    grad[rows, labels] -= 1.0
    return LossResult(loss, {"logits": grad / m})


def _head_loss(head, x, labels):
    logits = x @ head.weight.T + head.bias
    res = softmax_ce_loss(logits, labels)
    g = res.grads["logits"]
    return res.loss, g @ head.weight, {"weight": g.T @ x, "bias": g.sum(axis=0)}


def softmax_head_loss(head: ClassifierHead, embeddings, labels) -> LossResult:
    """Plain softmax classifier on raw (unconstrained) embeddings."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    loss, g_x, g_head = _head_loss(head, embeddings, labels)
    return LossResult(loss, {"embeddings": g_x, **g_head})


def l2c_softmax_loss(head: ClassifierHead, embeddings, labels, alpha) -> LossResult:
    """Softmax loss on embeddings rescaled to norm alpha.

    Gradients flow back through the normalization to the raw embeddings.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    scaled = l2_normalize_scale(embeddings, alpha)
    loss, g_scaled, g_head = _head_loss(head, scaled, labels)
    g_emb = l2_normalize_scale_backward(embeddings, alpha, g_scaled)
    return LossResult(loss, {"embeddings": g_emb, **g_head}, {"scaled": scaled})


def center_loss_eval(bank: CenterBank, embeddings, labels) -> LossResult:
    """Half the summed squared distance of each embedding to its class center.

    Centers are treated as constants.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = _check_labels(labels, bank.centers.shape[0])
    diff = embeddings - bank.centers[labels]
    return LossResult(0.5 * float(np.sum(diff * diff)), {"embeddings": diff})


def center_bank_update(bank: CenterBank, embeddings, labels) -> CenterBank:
    """Move each present class center toward its batch members, in place.

    ``c_j <- c_j - lr * sum_i (c_j - u_i) / (1 + n_j)`` over the batch members
    of class j; classes absent from the batch are left untouched.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = _check_labels(labels, bank.centers.shape[0])
    for j in np.unique(labels):
        members = embeddings[labels == j]
        delta = (bank.centers[j] - members).sum(axis=0) / (1 + len(members))
        bank.centers[j] = bank.centers[j] - bank.lr * delta
    return bank


def semantic_loss(head, bank, embeddings, labels, alpha, lam) -> LossResult:
    """L2-constrained softmax plus ``lam`` times the center loss.

    The center term is measured on the alpha-scaled embeddings, the same
    vectors the classifier sees.
    """
    sm = l2c_softmax_loss(head, embeddings, labels, alpha)
    scaled = sm.aux["scaled"]
    ctr = center_loss_eval(bank, scaled, labels)
    g_ctr = l2_normalize_scale_backward(embeddings, alpha, ctr.grads["embeddings"])
    grads = {
        "embeddings": sm.grads["embeddings"] + lam * g_ctr,
        "weight": sm.grads["weight"],
        "bias": sm.grads["bias"],
    }
    aux = {"scaled": scaled, "softmax_loss": sm.loss, "center_loss": ctr.loss}
    return LossResult(sm.loss + lam * ctr.loss, grads, aux)


def contrastive_loss(u1, u2, same, m=2.0) -> LossResult:
    """Squared distance for matching pairs, squared hinge ``max(0, m - d)^2`` otherwise."""
    u1 = np.asarray(u1, dtype=np.float64)
    u2 = np.asarray(u2, dtype=np.float64)
    if u1.shape != u2.shape:
        raise ShapeError("contrastive pair must have equal dimensions")
    diff = u1 - u2
    d = float(np.linalg.norm(diff))
    if same:
        g = 2.0 * diff
        return LossResult(d * d, {"u1": g, "u2": -g})
    gap = m - d
    if gap <= 0.0 or d == 0.0:
        # d == 0 has no defined push-apart direction
        zero = np.zeros_like(u1)
        return LossResult(max(gap, 0.0) ** 2, {"u1": zero, "u2": zero.copy()})
    g = -2.0 * gap * diff / d
    return LossResult(gap * gap, {"u1": g, "u2": -g})


def _cosine_and_grads(a, b):
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    cos = float(a @ b / (na * nb))
    return cos, b / (na * nb) - cos * a / na**2, a / (na * nb) - cos * b / nb**2


def npair_cosine_loss(anchor, positive, negatives, scale=1.0) -> LossResult:
    """Softmax over scaled cosines where the positive is the correct candidate."""
    anchor = np.asarray(anchor, dtype=np.float64)
    positive = np.asarray(positive, dtype=np.float64)
    negatives = np.asarray(negatives, dtype=np.float64).reshape(-1, anchor.shape[0])
    cands = np.vstack([positive[None, :], negatives])
    if np.linalg.norm(anchor) == 0.0 or np.any(np.linalg.norm(cands, axis=1) == 0.0):
        raise DegenerateInputError("n-pair loss needs nonzero vectors")

    n = cands.shape[0]
    cos = np.empty(n)
    g_anchor_parts = np.empty_like(cands)
    g_cands = np.empty_like(cands)
    for j in range(n):
        cos[j], g_anchor_parts[j], g_cands[j] = _cosine_and_grads(anchor, cands[j])
    logits = scale * cos
    top = logits.max()
    log_z = top + np.log(np.exp(logits - top).sum())
    loss = float(log_z - logits[0])
    dlogits = np.exp(logits - log_z)
    dlogits[0] -= 1.0
    dcos = scale * dlogits
    grads = {
        "anchor": dcos @ g_anchor_parts,
        "positive": dcos[0] * g_cands[0],
        "negatives": dcos[1:, None] * g_cands[1:],
    }
    return LossResult(max(loss, 0.0), grads)


def contrastive_batch_loss(embeddings, labels, m, rng) -> LossResult:
    """Mean contrastive loss over one positive and one negative pair per anchor.

    Pairs are drawn inside the batch; anchors lacking a partner of some kind
    simply contribute fewer pairs.
    """
    labels = np.asarray(labels)
    grad = np.zeros_like(embeddings)
    total = 0.0
    pairs = 0
    idx = np.arange(len(labels))
    for i in idx:
        for same in (True, False):
            pool = idx[(labels == labels[i]) & (idx != i)] if same else idx[labels != labels[i]]
            if pool.size == 0:
                continue
            j = pool[rng.integers(pool.size)]
            res = contrastive_loss(embeddings[i], embeddings[j], same, m)
            total += res.loss
            grad[i] += res.grads["u1"]
            grad[j] += res.grads["u2"]
            pairs += 1
    if pairs == 0:
        return LossResult(0.0, {"embeddings": grad})
    return LossResult(total / pairs, {"embeddings": grad / pairs})


def npair_batch_loss(embeddings, labels, n, scale, rng) -> LossResult:
    """Mean N-pair cosine loss; each anchor with an in-batch positive gets up to n-1 negatives."""
    labels = np.asarray(labels)
    grad = np.zeros_like(embeddings)
    total = 0.0
    tuples = 0
    idx = np.arange(len(labels))
    for i in idx:
        pos_pool = idx[(labels == labels[i]) & (idx != i)]
        if pos_pool.size == 0:
            continue
        p = pos_pool[rng.integers(pos_pool.size)]
        neg_pool = idx[labels != labels[i]]
        if neg_pool.size > n - 1:
            neg_pool = rng.choice(neg_pool, size=n - 1, replace=False)
        res = npair_cosine_loss(embeddings[i], embeddings[p], embeddings[neg_pool], scale)
        total += res.loss
        grad[i] += res.grads["anchor"]
        grad[p] += res.grads["positive"]
        np.add.at(grad, neg_pool, res.grads["negatives"])
        tuples += 1
    if tuples == 0:
        return LossResult(0.0, {"embeddings": grad})
    return LossResult(total / tuples, {"embeddings": grad / tuples})
