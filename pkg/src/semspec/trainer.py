"""Adversarial semantic fine-tuning of the adapter encoder.

One outer step picks a training language t, trains the language
discriminator D_t for ``k`` iterations on encoded language-t sentences versus
encoded sentences from another language, then updates the encoder and the
classifier head on a labeled language-t batch against
``semantic loss - gamma * discriminator loss`` with D_t frozen.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .config import HyperParams, VariantSpec
from .dataset import BatchSampler, Corpus, sample_adversarial_batch, sample_sentences
from .discriminator import LanguageDiscriminator, disc_loss_and_grads, disc_update_step
from .encoder import AdapterEncoder, encode, encode_backward
from .errors import ConfigError
from .losses import (
    CenterBank,
    ClassifierHead,
    LossResult,
    center_bank_update,
    contrastive_batch_loss,
    l2c_softmax_loss,
    npair_batch_loss,
    semantic_loss,
    softmax_head_loss,
)
from .nn import AdamState, adam_step

STREAMS = ("init", "lang", "batch", "inner", "adversarial", "dropout", "pairs")


class RunStreams:
    """Independent generators per purpose, all derived from one seed.

    Keeping the labeled-batch stream separate from the adversarial streams
    means variants with and without the discriminator see the same labeled
    batches under the same seed.
    """

    def __init__(self, seed):
        children = np.random.SeedSequence(seed).spawn(len(STREAMS))
        for name, child in zip(STREAMS, children):
            setattr(self, name, np.random.default_rng(child))


class SpecializationModel:
    """Encoder, classifier head, class centers and the shared optimizer state."""

    def __init__(self, dim, n_classes, hp: HyperParams, rng=None):
        if rng is None:
            rng = np.random.default_rng(hp.seed)
        self.encoder = AdapterEncoder(dim, hidden=hp.encoder_hidden or dim, rng=rng)
        self.head = ClassifierHead.init(rng, n_classes, dim)
        self.centers = CenterBank.zeros(n_classes, dim, hp.center_lr)
        self.adam = AdamState(lr=hp.lr_main)

    def params(self):
        out = {f"encoder.{k}": v for k, v in self.encoder.params().items()}
        out.update({f"head.{k}": v for k, v in self.head.params().items()})
        return out

    def embed(self, base):
        return encode(self.encoder, base)[0]

    def state_arrays(self):
        """Every array that defines the model, optimizer moments included."""
        out = dict(self.params())
        out["centers"] = self.centers.centers
        for name in self.params():
            if name in self.adam.m:
                out[f"adam.m.{name}"] = self.adam.m[name]
                out[f"adam.v.{name}"] = self.adam.v[name]
        return out


def make_discriminators(dim, variant: VariantSpec, hp: HyperParams, rng):
    if variant.adversarial == "off":
        return {}
    return {
        t: LanguageDiscriminator(t, dim, hp.disc_hidden, hp.dropout_p, hp.lr_disc, rng, clip_c=hp.clip_c)
        for t in variant.train_languages
    }


def adversarial_pool(corpus: Corpus, variant: VariantSpec):
    return list(variant.adversarial_languages) or list(corpus.languages)


def check_setup(corpus: Corpus, variant: VariantSpec):
    for t in variant.train_languages:
        if corpus.select(lang=t, split="train", labeled=True).size == 0:
            raise ConfigError(f"no labeled training data in language {t!r}", key="variant.train_languages")
    if variant.adversarial == "off":
        return
    pool = adversarial_pool(corpus, variant)
    for lang in pool:
        if lang not in corpus.languages:
            raise ConfigError(f"adversarial language {lang!r} not in corpus", key="variant.adversarial_languages")
    for t in variant.train_languages:
        if not [lang for lang in pool if lang != t]:
            raise ConfigError(f"no adversarial language other than {t!r}", key="variant.adversarial_languages")
    if variant.adversarial == "parallel" and not corpus.has_group_links:
        raise ConfigError("parallel adversarial mode needs sentence-group links", key="variant.adversarial")


def _semantic_objective(model, variant, hp, u, labels, rng) -> LossResult:
    if variant.loss == "l2c-softmax+center":
        return semantic_loss(model.head, model.centers, u, labels, hp.alpha, hp.lam)
    if variant.loss == "l2c-softmax":
        return l2c_softmax_loss(model.head, u, labels, hp.alpha)
    if variant.loss == "softmax":
        return softmax_head_loss(model.head, u, labels)
    if variant.loss == "contrastive":
        return contrastive_batch_loss(u, labels, hp.margin_m, rng)
    if variant.loss == "npair":
        return npair_batch_loss(u, labels, hp.npair_n, hp.npair_scale, rng)
    raise ConfigError(f"unknown loss {variant.loss!r}", key="variant.loss")


def emu_train_step(model, discriminators, corpus, variant, hp, streams, sampler, step=0):
    """Run one outer training step in place and return its log record."""
    t = variant.train_languages[streams.lang.integers(len(variant.train_languages))]
    adversarial = variant.adversarial != "off"
    pool = adversarial_pool(corpus, variant)
    record = {"step": step, "lang": t}

    if adversarial:
        D = discriminators[t]
        inner = []
        for _ in range(hp.k):
            xt = sample_sentences(corpus, t, hp.batch_size, streams.inner)
            _, xl = sample_adversarial_batch(
                corpus, t, pool, variant.adversarial, xt, hp.batch_size, streams.adversarial
            )
            u_t = model.embed(corpus.embeddings[xt])
            v_l = model.embed(corpus.embeddings[xl])
            inner.append(disc_update_step(D, u_t, v_l, hp.clip_c, streams.dropout, hp.wasserstein))
        record["disc_inner"] = inner

    batch = sampler.next_batch(t, hp.batch_size)
    labels = corpus.labels[batch]
    u, cache_u = encode(model.encoder, corpus.embeddings[batch])
    sem = _semantic_objective(model, variant, hp, u, labels, streams.pairs)
    grad_u = sem.grads["embeddings"]
    disc_value = 0.0
    adv_grads = None
    if adversarial:
        adv_lang, xl = sample_adversarial_batch(
            corpus, t, pool, variant.adversarial, batch, hp.batch_size, streams.adversarial
        )
        record["adv_lang"] = adv_lang
        v, cache_v = encode(model.encoder, corpus.embeddings[xl])
        d_res = disc_loss_and_grads(discriminators[t], u, v, wasserstein=hp.wasserstein)
        disc_value = d_res.loss
        grad_u = grad_u - hp.gamma * d_res.grads["u_t"]
        _, adv_grads = encode_backward(model.encoder, cache_v, -hp.gamma * d_res.grads["v_adv"])

    _, enc_grads = encode_backward(model.encoder, cache_u, grad_u)
    if adv_grads is not None:
        enc_grads = {name: g + adv_grads[name] for name, g in enc_grads.items()}
    grads = {f"encoder.{k}": g for k, g in enc_grads.items()}
    for name in ("weight", "bias"):
        head_grad = sem.grads.get(name)
        grads[f"head.{name}"] = head_grad if head_grad is not None else np.zeros_like(getattr(model.head, name))
    adam_step(model.params(), grads, model.adam)

    if variant.uses_center:
        center_bank_update(model.centers, sem.aux["scaled"], labels)

    record["batch"] = int(len(batch))
    record["semantic"] = sem.loss
    record["disc"] = disc_value
    record["total"] = sem.loss - hp.gamma * disc_value
    return record


@dataclass
class TrainLog:
    seed: int
    config: dict
    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    def to_jsonl(self):
        lines = [json.dumps({"type": "config", "seed": self.seed, "config": self.config}, sort_keys=True)]
        lines += [json.dumps({"type": "step", **r}, sort_keys=True) for r in self.records]
        lines += [json.dumps({"type": "snapshot", **s}, sort_keys=True) for s in self.snapshots]
        return "\n".join(lines) + "\n"


def steps_per_epoch(corpus, variant, batch_size):
    n_train = sum(corpus.select(lang=t, split="train", labeled=True).size for t in variant.train_languages)
    return math.ceil(n_train / batch_size)


def train_run(corpus: Corpus, variant: VariantSpec, hp: HyperParams, evaluate=None):
    """Fine-tune a fresh model; returns ``(model, discriminators, log)``.

    ``evaluate(model, epoch)``, when given, is called after every epoch and
    its dict result is stored in the log.
    """
    check_setup(corpus, variant)
    streams = RunStreams(hp.seed)
    model = SpecializationModel(corpus.dim, corpus.n_classes, hp, streams.init)
    discriminators = make_discriminators(corpus.dim, variant, hp, streams.init)
    sampler = BatchSampler(corpus, streams.batch)
    log = TrainLog(hp.seed, {"hp": hp.to_dict(), "variant": variant.to_dict()})
    per_epoch = steps_per_epoch(corpus, variant, hp.batch_size)
    step = 0
    for epoch in range(hp.epochs):
        for _ in range(per_epoch):
            rec = emu_train_step(model, discriminators, corpus, variant, hp, streams, sampler, step)
            rec["epoch"] = epoch
            log.records.append(rec)
            step += 1
        if evaluate is not None:
            log.snapshots.append({"epoch": epoch, **evaluate(model, epoch)})
    return model, discriminators, log
