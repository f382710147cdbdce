"""Corpora of labeled multilingual sentence embeddings.

A corpus is a flat list of examples. Each example carries a sentence-group id
that links translations of the same underlying sentence across languages, a
language tag, an optional intent label, a train/test split tag, and its frozen
base embedding.
"""

import csv
import gzip
import io
import json
import os
import tempfile
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DataError

LANGUAGE_NAMES = ("en", "de", "es", "fr", "ja", "zh")
SPLITS = ("train", "test")


@dataclass(frozen=True, eq=False)
class LabeledExample:
    id: str
    group: str
    lang: str
    intent: str | None
    split: str
    embedding: np.ndarray

    def to_record(self):
        return {
            "id": self.id,
            "group": self.group,
            "lang": self.lang,
            "intent": self.intent,
            "split": self.split,
            "embedding": [float(x) for x in self.embedding],
        }


class Corpus:
    """Validated, immutable collection of examples with lookup tables."""

    def __init__(self, examples, meta=None):
        examples = list(examples)
        if not examples:
            raise DataError("corpus is empty")
        self.examples = examples
        self.meta = dict(meta or {})
        self._validate()

        self.embeddings = np.vstack([ex.embedding for ex in examples])
        self.embeddings.setflags(write=False)
        self.ids = np.array([ex.id for ex in examples])
        self.groups = np.array([ex.group for ex in examples])
        self.langs = np.array([ex.lang for ex in examples])
        self.splits = np.array([ex.split for ex in examples])
        self.intents = sorted({ex.intent for ex in examples if ex.intent is not None})
        index = {name: i for i, name in enumerate(self.intents)}
        self.labels = np.array([index[ex.intent] if ex.intent is not None else -1 for ex in examples])
        self.languages = sorted(set(self.langs), key=_language_order)
        self._by_group_lang = {(ex.group, ex.lang): i for i, ex in enumerate(examples)}

    def _validate(self):
        dim = None
        seen = set()
        group_intent = {}
        group_langs = set()
        for n, ex in enumerate(self.examples, start=1):
            if ex.id in seen:
                raise DataError(f"duplicate id {ex.id!r}", line=n)
            seen.add(ex.id)
            if ex.split not in SPLITS:
                raise DataError(f"unknown split {ex.split!r}", line=n)
            emb = ex.embedding
            if emb.ndim != 1:
                raise DataError("embedding must be a vector", line=n)
            if dim is None:
                dim = emb.shape[0]
            elif emb.shape[0] != dim:
                raise DataError(f"embedding dimension {emb.shape[0]} differs from {dim}", line=n)
            if not np.all(np.isfinite(emb)):
                raise DataError("embedding has non-finite entries", line=n)
            if (ex.group, ex.lang) in group_langs:
                raise DataError(f"group {ex.group!r} has two sentences in {ex.lang!r}", line=n)
            group_langs.add((ex.group, ex.lang))
            if ex.intent is not None:
                prev = group_intent.setdefault(ex.group, ex.intent)
                if prev != ex.intent:
                    raise DataError(f"group {ex.group!r} mixes intents {prev!r} and {ex.intent!r}", line=n)
        self.dim = dim

    def __len__(self):
        return len(self.examples)

    @property
    def n_classes(self):
        return len(self.intents)

    def select(self, lang=None, split=None, labeled=None):
        mask = np.ones(len(self), dtype=bool)
        if lang is not None:
            mask &= self.langs == lang
        if split is not None:
            mask &= self.splits == split
        if labeled is not None:
            mask &= (self.labels >= 0) == labeled
        return np.flatnonzero(mask)

    def translation(self, group, lang):
        return self._by_group_lang.get((group, lang))

    @property
    def has_group_links(self):
        _, counts = np.unique(self.groups, return_counts=True)
        return bool(np.any(counts > 1))

    def statistics(self):
        labeled = self.labels >= 0
        per_language = {}
        for lang in self.languages:
            in_lang = self.langs == lang
            per_language[lang] = {
                "train": int(np.sum(in_lang & labeled & (self.splits == "train"))),
                "test": int(np.sum(in_lang & labeled & (self.splits == "test"))),
                "unlabeled": int(np.sum(in_lang & ~labeled)),
            }
        return {
            "classes": self.n_classes,
            "train": int(np.sum(labeled & (self.splits == "train"))),
            "test": int(np.sum(labeled & (self.splits == "test"))),
            "dim": self.dim,
            "languages": per_language,
        }


META_PREFIX = "#meta "


def _language_order(lang):
    if lang in LANGUAGE_NAMES:
        return (0, LANGUAGE_NAMES.index(lang), lang)
    return (1, 0, lang)


# ---------------------------------------------------------------- file I/O

def _open_text(path, mode):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="utf-8", newline="")
    return open(path, mode, encoding="utf-8", newline="")


def _detect_format(path, fmt):
    if fmt:
        return fmt
    name = str(path).removesuffix(".gz")
    if name.endswith(".jsonl"):
        return "jsonl"
    if name.endswith(".tsv"):
        return "tsv"
    raise ConfigError(f"cannot infer corpus format from {path!r}", key="corpus.format")


def _example_from_record(rec, line):
    try:
        intent = rec.get("intent")
        if intent == "":
            intent = None
        emb = np.array([float(x) for x in rec["embedding"]], dtype=np.float64)
        return LabeledExample(
            id=str(rec["id"]),
            group=str(rec["group"]),
            lang=str(rec["lang"]),
            intent=None if intent is None else str(intent),
            split=str(rec.get("split", "train")),
            embedding=emb,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed record ({exc})", line=line) from None


def load_corpus(path, fmt=None) -> Corpus:
    """Read a JSONL or TSV corpus (optionally gzip-compressed).

    An optional first line carries run metadata: ``{"meta": {...}}`` in JSONL,
    ``#meta {...}`` in TSV.
    """
    fmt = _detect_format(path, fmt)
    examples = []
    meta = {}
    with _open_text(path, "r") as fh:
        if fmt == "jsonl":
            for n, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"invalid JSON ({exc.msg})", line=n) from None
                if not isinstance(rec, dict):
                    raise DataError("record is not an object", line=n)
                if n == 1 and set(rec) == {"meta"}:
                    meta = rec["meta"]
                    continue
                examples.append(_example_from_record(rec, n))
        elif fmt == "tsv":
            lines = fh.read().splitlines()
            offset = 0
            if lines and lines[0].startswith(META_PREFIX):
                meta = json.loads(lines[0][len(META_PREFIX):])
                lines, offset = lines[1:], 1
            reader = csv.DictReader(lines, delimiter="\t")
            required = {"id", "group", "lang", "intent", "embedding"}
            if reader.fieldnames is None or not required <= set(reader.fieldnames):
                raise DataError(f"TSV header must contain {sorted(required)}", line=1)
            for n, row in enumerate(reader, start=2 + offset):
                if None in row or any(v is None for v in row.values()):
                    raise DataError("wrong number of columns", line=n)
                row["embedding"] = row["embedding"].split()
                examples.append(_example_from_record(row, n))
        else:
            raise ConfigError(f"unknown corpus format {fmt!r}", key="corpus.format")
    if not examples:
        raise DataError(f"{path}: no examples")
    return Corpus(examples, meta)


def atomic_write_text(path, text):
    """Write via a temporary file in the same directory and rename into place."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        if path.endswith(".gz"):
            with os.fdopen(fd, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as gz:
                gz.write(text.encode("utf-8"))
        else:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_corpus(corpus: Corpus, fmt="jsonl") -> str:
    if fmt == "jsonl":
        head = json.dumps({"meta": corpus.meta}, sort_keys=True) + "\n" if corpus.meta else ""
        return head + "".join(json.dumps(ex.to_record()) + "\n" for ex in corpus.examples)
    if fmt == "tsv":
        buf = io.StringIO()
        if corpus.meta:
            buf.write(META_PREFIX + json.dumps(corpus.meta, sort_keys=True) + "\n")
        writer = csv.writer(buf, delimiter="\t", lineterminator="\n")
        writer.writerow(["id", "group", "lang", "intent", "split", "embedding"])
        for ex in corpus.examples:
            emb = " ".join(repr(float(x)) for x in ex.embedding)
            writer.writerow([ex.id, ex.group, ex.lang, ex.intent or "", ex.split, emb])
        return buf.getvalue()
    raise ConfigError(f"unknown corpus format {fmt!r}", key="corpus.format")


def write_corpus(corpus: Corpus, path, fmt=None):
    atomic_write_text(path, dump_corpus(corpus, _detect_format(path, fmt)))


# ---------------------------------------------------------------- sampling

class BatchSampler:
    """Epoch-wise sampler over the labeled training data of each language.

    Each language keeps its own shuffled order; a batch takes the next
    ``min(batch_size, remaining)`` examples and a fresh permutation is drawn
    once an epoch is used up.
    """

    def __init__(self, corpus: Corpus, rng: np.random.Generator):
        self.corpus = corpus
        self.rng = rng
        self._order = {}
        self._pos = {}

    def pool(self, lang):
        return self.corpus.select(lang=lang, split="train", labeled=True)

    def next_batch(self, lang, batch_size):
        pool = self.pool(lang)
        if pool.size == 0:
            raise ConfigError(f"no labeled training data in language {lang!r}", key="variant.train_languages")
        if lang not in self._order or self._pos[lang] >= len(self._order[lang]):
            self._order[lang] = self.rng.permutation(pool)
            self._pos[lang] = 0
        start = self._pos[lang]
        batch = self._order[lang][start:start + batch_size]
        self._pos[lang] = start + len(batch)
        return batch


def sample_training_batch(sampler: BatchSampler, lang, batch_size):
    return sampler.next_batch(lang, batch_size)


def sample_sentences(corpus: Corpus, lang, size, rng):
    """Uniform draw without replacement from the training split of ``lang``; labels ignored."""
    pool = corpus.select(lang=lang, split="train")
    if pool.size == 0:
        raise ConfigError(f"no training sentences in language {lang!r}")
    return rng.choice(pool, size=min(size, pool.size), replace=False)


def sample_adversarial_batch(corpus: Corpus, t, languages, mode, anchor, size, rng):
    """Pick an adversarial language other than t and draw sentences from it.

    Returns ``(language, indices)``. In ``random`` mode the sentences are drawn
    uniformly with replacement from the language's training split; in
    ``parallel`` mode they are the translations of the ``anchor`` indices.
    """
    candidates = [lang for lang in languages if lang != t]
    if not candidates:
        raise ConfigError(f"no adversarial language differs from {t!r}", key="variant.adversarial_languages")
    lang = candidates[rng.integers(len(candidates))]
    if mode == "random":
        pool = corpus.select(lang=lang, split="train")
        if pool.size == 0:
            raise ConfigError(f"no training sentences in adversarial language {lang!r}")
        return lang, pool[rng.integers(pool.size, size=size)]
    if mode == "parallel":
        out, missing = [], []
        for i in anchor:
            j = corpus.translation(corpus.groups[i], lang)
            if j is None:
                missing.append(str(corpus.groups[i]))
            else:
                out.append(j)
        if missing:
            raise DataError(f"no {lang!r} translation for groups: {', '.join(missing)}")
        return lang, np.array(out, dtype=np.int64)
    raise ConfigError(f"unknown adversarial mode {mode!r}", key="variant.adversarial")


# ---------------------------------------------------------------- synthetic data

@dataclass
class SyntheticSpec:
    n_languages: int = 3
    n_intents: int = 10
    n_per_intent: int = 30
    dim: int = 64
    semantic_scale: float = 1.0
    noise_scale: float = 0.3
    n_confounders: int = 60
    confounder_scale: float = 1.2
    shift_strength: float = 1.0
    rho: float = 0.6
    train_fraction: float = 2.0 / 3.0
    n_unlabeled: int = 0  # extra unlabeled training sentences per non-first language
    seed: int = 0

    def __post_init__(self):
        for key in ("n_languages", "n_intents", "n_per_intent", "dim", "n_confounders"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be at least 1", key=f"synthetic.{key}")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError("rho must lie in [0, 1]", key="synthetic.rho")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0, 1)", key="synthetic.train_fraction")
        for key in ("semantic_scale", "noise_scale", "confounder_scale", "shift_strength"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be non-negative", key=f"synthetic.{key}")
        if self.n_unlabeled < 0:
            raise ConfigError("n_unlabeled must be non-negative", key="synthetic.n_unlabeled")

    def to_dict(self):
        return asdict(self)


def language_names(n):
    return [LANGUAGE_NAMES[i] if i < len(LANGUAGE_NAMES) else f"l{i}" for i in range(n)]


def _random_rotation(rng, d):
    q, r = np.linalg.qr(rng.normal(size=(d, d)))
    return q * np.sign(np.diag(r))


def generate_synthetic(spec: SyntheticSpec) -> Corpus:
    """Seeded multilingual corpus with intent structure and shared surface confounders.

    Each underlying sentence is an intent prototype plus noise plus one of a
    few "surface style" vectors shared by all intents, so raw nearest
    neighbours are often fooled by style. Every language sees
    ``rho * z + (1 - rho) * (R z + o)`` with its own rotation R and offset o.
    """
    rng = np.random.default_rng(spec.seed)
    d = spec.dim
    protos = spec.semantic_scale * rng.normal(size=(spec.n_intents, d))
    styles = spec.confounder_scale * rng.normal(size=(spec.n_confounders, d))
    langs = language_names(spec.n_languages)
    rotations = [_random_rotation(rng, d) for _ in langs]
    offsets = [spec.shift_strength * rng.normal(size=d) for _ in langs]

    def view(z, li):
        return spec.rho * z + (1.0 - spec.rho) * (rotations[li] @ z + offsets[li])

    n_train = int(round(spec.train_fraction * spec.n_per_intent))
    n_train = min(max(n_train, 1), spec.n_per_intent - 1) if spec.n_per_intent > 1 else 1
    examples = []
    for c in range(spec.n_intents):
        intent = f"intent{c:02d}"
        train_slots = set(rng.permutation(spec.n_per_intent)[:n_train].tolist())
        for i in range(spec.n_per_intent):
            z = protos[c] + spec.noise_scale * rng.normal(size=d) + styles[rng.integers(spec.n_confounders)]
            group = f"g{c:03d}-{i:04d}"
            split = "train" if i in train_slots else "test"
            for li, lang in enumerate(langs):
                examples.append(LabeledExample(f"{lang}-{group}", group, lang, intent, split, view(z, li)))
    for li, lang in enumerate(langs[1:], start=1):
        for i in range(spec.n_unlabeled):
            c = rng.integers(spec.n_intents)
            z = protos[c] + spec.noise_scale * rng.normal(size=d) + styles[rng.integers(spec.n_confounders)]
            group = f"u{li:02d}-{i:05d}"
            examples.append(LabeledExample(f"{lang}-{group}", group, lang, None, "train", view(z, li)))
    examples.sort(key=lambda ex: ex.id)
    return Corpus(examples, meta={"synthetic": spec.to_dict()})
