"""Nearest-neighbour intent classification and embedding diagnostics."""

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, EvaluationError

log = logging.getLogger(__name__)

TIE_TOL = 1e-12


def _unit_rows(x):
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms == 0.0, 1.0, norms)


@dataclass
class PairResult:
    src: str
    tgt: str
    accuracy: float
    correct: int
    n: int
    predictions: list = field(default_factory=list)  # (query id, predicted neighbour id, hit)


def loo_intent_acc(embeddings, corpus, src, tgt, split="test", exclude_translations=True) -> PairResult:
    """Leave-one-out Acc@1 of cosine nearest-neighbour intent prediction.

    Queries are the labeled ``split`` sentences in ``src``; candidates are the
    labeled ``split`` sentences in ``tgt`` other than the query and, when
    ``exclude_translations`` is set, other than any sentence sharing the
    query's group id. Ties (cosines within ``TIE_TOL``) go to the lowest
    candidate id.
    """
    queries = corpus.select(lang=src, split=split, labeled=True)
    cands = corpus.select(lang=tgt, split=split, labeled=True)
    if queries.size == 0 or cands.size == 0:
        raise EvaluationError(f"no labeled {split} sentences for pair {src}->{tgt}")
    cands = cands[np.argsort(corpus.ids[cands], kind="stable")]
    if exclude_translations and not corpus.has_group_links:
        log.warning("corpus has no group links; translation exclusion is a no-op")

    emb = np.asarray(embeddings, dtype=np.float64)
    sims = _unit_rows(emb[queries]) @ _unit_rows(emb[cands]).T
    blocked = queries[:, None] == cands[None, :]
    if exclude_translations:
        blocked |= corpus.groups[queries][:, None] == corpus.groups[cands][None, :]
    sims[blocked] = -np.inf
    empty = np.all(blocked, axis=1)
    if np.any(empty):
        raise EvaluationError(f"query {corpus.ids[queries[np.argmax(empty)]]} has no candidates")
    # cosines equal in exact arithmetic can differ in the last bits, so treat
    # near-equal scores as a tie and take the first (lowest-id) candidate
    top = np.max(sims, axis=1, keepdims=True)
    best = cands[np.argmax(sims >= top - TIE_TOL, axis=1)]
    hits = corpus.labels[best] == corpus.labels[queries]
    preds = [(str(corpus.ids[q]), str(corpus.ids[b]), bool(h)) for q, b, h in zip(queries, best, hits)]
    correct = int(hits.sum())
    return PairResult(src, tgt, correct / queries.size, correct, int(queries.size), preds)


@dataclass
class Interval:
    p: float
    low: float
    high: float
    half_width: float
    n: int
    degenerate: bool


def binomial_ci(successes, n, z=1.96) -> Interval:
    """Wald interval for a binomial proportion."""
    if n < 1:
        raise DomainError("binomial interval needs n >= 1")
    if not 0 <= successes <= n:
        raise DomainError("successes must lie in [0, n]")
    p = successes / n
    hw = z * math.sqrt(p * (1.0 - p) / n)
    return Interval(p, p - hw, p + hw, hw, n, degenerate=hw == 0.0)


def intervals_disjoint(a: Interval, b: Interval) -> bool:
    return a.high < b.low or b.high < a.low


@dataclass
class EvalReport:
    cells: list  # dicts: src, tgt, accuracy, correct, n, ci_low, ci_high, significant
    z: float
    compactness: dict = field(default_factory=dict)
    projection: dict | None = None
    config: dict = field(default_factory=dict)

    def cell(self, src, tgt):
        for c in self.cells:
            if c["src"] == src and c["tgt"] == tgt:
                return c
        raise KeyError((src, tgt))

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        return cls(d["cells"], d["z"], d.get("compactness", {}), d.get("projection"), d.get("config", {}))

    def to_table(self, name=""):
        return render_table([(name, self)])


def table2_pairs(languages, pivot="en"):
    """Pivot-pivot, then pivot -> each other language, then each other -> pivot."""
    others = [lang for lang in languages if lang != pivot]
    return [(pivot, pivot)] + [(pivot, lang) for lang in others] + [(lang, pivot) for lang in others]


def eval_pair_matrix(embeddings, corpus, pairs=None, pivot="en", z=1.96, baseline=None) -> EvalReport:
    """Acc@1 for every (source, target) pair, with Wald intervals.

    ``baseline`` optionally maps ``(src, tgt)`` to a baseline cell; a cell is
    flagged significant when its interval is disjoint from the baseline's.
    """
    if pairs is None:
        pairs = table2_pairs(corpus.languages, pivot)
    cells = []
    for src, tgt in pairs:
        res = loo_intent_acc(embeddings, corpus, src, tgt)
        ci = binomial_ci(res.correct, res.n, z)
        cell = {
            "src": src, "tgt": tgt, "accuracy": res.accuracy, "correct": res.correct,
            "n": res.n, "ci_low": ci.low, "ci_high": ci.high, "significant": None,
        }
        if baseline is not None and (src, tgt) in baseline:
            b = baseline[(src, tgt)]
            cell["significant"] = intervals_disjoint(ci, binomial_ci(b["correct"], b["n"], z))
        cells.append(cell)
    return EvalReport(cells, z)


def compactness_metrics(embeddings, labels, languages, groups, normalize=False):
    """Intra-class variance and cross-lingual alignment.

    Variance is the mean squared distance of each labeled embedding to its
    class centroid. Alignment is the mean cosine over all pairs of embeddings
    that share a group id but differ in language.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if normalize:
        x = _unit_rows(x)
    labels = np.asarray(labels)
    labeled = labels >= 0
    sq = []
    for c in np.unique(labels[labeled]):
        members = x[labels == c]
        sq.append(np.sum((members - members.mean(axis=0)) ** 2, axis=1))
    variance = float(np.mean(np.concatenate(sq))) if sq else 0.0

    unit = _unit_rows(x)
    by_group = {}
    for i, g in enumerate(groups):
        by_group.setdefault(g, []).append(i)
    cosines = []
    for members in by_group.values():
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                i, j = members[a], members[b]
                if languages[i] != languages[j]:
                    cosines.append(float(unit[i] @ unit[j]))
    alignment = float(np.mean(cosines)) if cosines else float("nan")
    return {"intra_class_variance": variance, "alignment": alignment, "n_pairs": len(cosines)}


def project_2d(embeddings):
    """Principal-component coordinates on the top two axes.

    Returns ``(coords, explained_fraction, degenerate)``.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise DomainError("projection needs at least two points of dimension >= 2")
    centered = x - x.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    var = s**2
    total = var.sum()
    if total == 0.0:
        return np.zeros((x.shape[0], 2)), np.zeros(2), True
    axes = vt[:2]
    # fix the sign so the largest-magnitude loading of each axis is positive
    signs = np.sign(axes[np.arange(2), np.argmax(np.abs(axes), axis=1)])
    axes = axes * signs[:, None]
    frac = np.zeros(2)
    frac[: len(var[:2])] = var[:2] / total
    return centered @ axes.T, frac, False


def projection_tsv(corpus, coords, rows):
    lines = ["id\tgroup\tlang\tintent\tx\ty"]
    for i, (px, py) in zip(rows, coords):
        intent = corpus.intents[corpus.labels[i]] if corpus.labels[i] >= 0 else ""
        lines.append(f"{corpus.ids[i]}\t{corpus.groups[i]}\t{corpus.langs[i]}\t{intent}\t{float(px)!r}\t{float(py)!r}")
    return "\n".join(lines) + "\n"


def render_table(named_reports):
    """Aligned plain-text table with one row per report, columns in cell order."""
    if not named_reports:
        return ""
    first = named_reports[0][1]
    pairs = [(c["src"], c["tgt"]) for c in first.cells]
    heads = [f"{s}-{t}" if s == t else f"{s}>{t}" for s, t in pairs]
    name_w = max([6] + [len(n) for n, _ in named_reports])
    col_w = max(7, max(len(h) for h in heads) + 1)
    out = ["Method".ljust(name_w) + "".join(h.rjust(col_w) for h in heads)]
    for name, rep in named_reports:
        row = name.ljust(name_w)
        for src, tgt in pairs:
            c = rep.cell(src, tgt)
            mark = "*" if c.get("significant") else " "
            row += f"{100 * c['accuracy']:.1f}{mark}".rjust(col_w)
        out.append(row)
    return "\n".join(out) + "\n"
