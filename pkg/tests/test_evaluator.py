import logging
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semspec.dataset import Corpus, LabeledExample, SyntheticSpec, generate_synthetic
from semspec.errors import DomainError, EvaluationError
from semspec.evaluator import (
    EvalReport,
    binomial_ci,
    compactness_metrics,
    eval_pair_matrix,
    intervals_disjoint,
    loo_intent_acc,
    project_2d,
    render_table,
    table2_pairs,
)


def make_corpus(rows):
    """rows: (id, group, lang, intent, vector)"""
    return Corpus([LabeledExample(i, g, lang, c, "test", np.asarray(v, dtype=float)) for i, g, lang, c, v in rows])


def oracle_acc(corpus, src, tgt):
    """Exhaustive pairwise search with exact rational cosine comparisons.

    sign(dot) * dot^2 / (|a|^2 |b|^2) orders candidates exactly as the cosine
    does, so ties are true ties. Zero vectors score 0.
    """
    def key(a, b):
        a = [Fraction(x) for x in a]
        b = [Fraction(x) for x in b]
        dot = sum(x * y for x, y in zip(a, b))
        na = sum(x * x for x in a)
        nb = sum(x * x for x in b)
        if na == 0 or nb == 0:
            return Fraction(0)
        return (1 if dot >= 0 else -1) * dot * dot / (na * nb)

    exs = corpus.examples
    preds = []
    for q in exs:
        if q.lang != src or q.split != "test":
            continue
        best, best_key = None, None
        for c in sorted((c for c in exs if c.lang == tgt and c.split == "test"), key=lambda c: c.id):
            if c.id == q.id or c.group == q.group:
                continue
            k = key(q.embedding, c.embedding)
            if best is None or k > best_key:
                best, best_key = c, k
        preds.append((q.id, None if best is None else best.id, best is not None and best.intent == q.intent))
    return preds


def test_separated_clusters():
    rows = [(f"s{i}", f"g{i}", "en", "a" if i < 3 else "b", (10.0, 0.1 * i) if i < 3 else (0.1 * i, -10.0))
            for i in range(6)]
    assert loo_intent_acc(np.array([r[4] for r in rows]), make_corpus(rows), "en", "en").accuracy == 1.0


def test_forced_miss():
    rows = [("q", "g0", "en", "a", (1.0, 0.0)), ("x", "g1", "en", "b", (1.0, 0.1)),
            ("y", "g2", "en", "b", (0.9, 0.2))]
    corpus = make_corpus(rows)
    res = loo_intent_acc(corpus.embeddings, corpus, "en", "en")
    assert res.predictions[0] == ("q", "x", False)


def test_six_vector_fixture_matches_oracle():
    rows = [("en-1", "1", "en", "a", (1, 0)), ("en-2", "2", "en", "a", (0.9, 0.3)),
            ("en-3", "3", "en", "b", (0, 1)), ("de-1", "1", "de", "a", (0.8, 0.1)),
            ("de-2", "2", "de", "a", (0.7, 0.7)), ("de-3", "3", "de", "b", (-0.2, 1))]
    corpus = make_corpus(rows)
    for src, tgt in [("en", "en"), ("en", "de"), ("de", "en"), ("de", "de")]:
        res = loo_intent_acc(corpus.embeddings, corpus, src, tgt)
        assert res.predictions == [tuple(p) for p in oracle_acc(corpus, src, tgt)]


def random_fixture(seed):
    rng = np.random.default_rng(seed)
    n_groups = int(rng.integers(3, 7))
    langs = ["en", "de", "fr"][: int(rng.integers(1, 4))]
    rows = []
    for g in range(n_groups):
        intent = f"c{rng.integers(3)}"
        for lang in langs:
            if len(rows) >= 20:
                break
            # small integer coordinates make exact cosine ties common
            rows.append((f"{lang}-{g:02d}", f"g{g}", lang, intent, rng.integers(-2, 3, size=3).astype(float)))
    return make_corpus(rows)


def test_matches_brute_force_oracle_on_random_fixtures():
    checked = 0
    for seed in range(150):
        corpus = random_fixture(seed)
        for src in corpus.languages:
            for tgt in corpus.languages:
                expect = oracle_acc(corpus, src, tgt)
                if any(p[1] is None for p in expect) or not expect:
                    with pytest.raises(EvaluationError):
                        loo_intent_acc(corpus.embeddings, corpus, src, tgt)
                    continue
                res = loo_intent_acc(corpus.embeddings, corpus, src, tgt)
                assert res.predictions == expect
                assert res.accuracy == sum(p[2] for p in expect) / len(expect)
        checked += 1
    assert checked >= 100


def test_empty_candidate_pool_names_query():
    corpus = make_corpus([("en-0", "g0", "en", "a", (1, 0)), ("de-0", "g0", "de", "a", (1, 0))])
    with pytest.raises(EvaluationError, match="en-0"):
        loo_intent_acc(corpus.embeddings, corpus, "en", "de")


def test_missing_group_links_warns(caplog):
    corpus = make_corpus([("a", "g0", "en", "a", (1, 0)), ("b", "g1", "en", "a", (1, 1))])
    with caplog.at_level(logging.WARNING):
        loo_intent_acc(corpus.embeddings, corpus, "en", "en")
    assert "group links" in caplog.text


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(1e-3, 1e3))
def test_rescaling_invariance(seed, scale):
    corpus = generate_synthetic(SyntheticSpec(n_intents=3, n_per_intent=6, dim=6, seed=seed))
    for src, tgt in [("en", "en"), ("en", "de")]:
        a = loo_intent_acc(corpus.embeddings, corpus, src, tgt)
        b = loo_intent_acc(corpus.embeddings * scale, corpus, src, tgt)
        assert a.predictions == b.predictions


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), rho=st.floats(0.0, 1.0))
def test_dropping_exclusion_never_lowers_accuracy(seed, rho):
    corpus = generate_synthetic(SyntheticSpec(n_intents=3, n_per_intent=6, dim=6, seed=seed, rho=rho))
    for src, tgt in [("en", "de"), ("de", "en"), ("es", "es")]:
        with_excl = loo_intent_acc(corpus.embeddings, corpus, src, tgt)
        without = loo_intent_acc(corpus.embeddings, corpus, src, tgt, exclude_translations=False)
        assert without.accuracy >= with_excl.accuracy


def test_eleven_cells_for_six_languages():
    corpus = generate_synthetic(SyntheticSpec(n_languages=6, n_intents=3, n_per_intent=6, dim=6))
    report = eval_pair_matrix(corpus.embeddings, corpus)
    assert len(report.cells) == 11
    assert [(c["src"], c["tgt"]) for c in report.cells] == table2_pairs(corpus.languages)
    for c in report.cells:
        res = loo_intent_acc(corpus.embeddings, corpus, c["src"], c["tgt"])
        assert (c["accuracy"], c["correct"], c["n"]) == (res.accuracy, res.correct, res.n)


def test_identical_languages_give_monolingual_cells():
    corpus = generate_synthetic(SyntheticSpec(n_intents=4, n_per_intent=9, dim=6, rho=1.0))
    report = eval_pair_matrix(corpus.embeddings, corpus)
    mono = report.cell("en", "en")["accuracy"]
    assert all(c["accuracy"] == mono for c in report.cells)


def test_binomial_examples():
    ci = binomial_ci(50, 100, 1.96)
    assert ci.half_width == pytest.approx(0.098, abs=1e-12)
    assert ci.low == pytest.approx(0.402) and ci.high == pytest.approx(0.598)
    full = binomial_ci(20, 20)
    assert full.degenerate and full.half_width == 0.0
    emu, base = binomial_ci(113, 144, 1.645), binomial_ci(80, 144, 1.645)
    assert emu.p == pytest.approx(0.785, abs=1e-3) and base.p == pytest.approx(0.556, abs=1e-3)
    assert intervals_disjoint(emu, base) and intervals_disjoint(base, emu)
    assert not intervals_disjoint(binomial_ci(50, 100), binomial_ci(55, 100))


def test_binomial_domain_errors():
    with pytest.raises(DomainError):
        binomial_ci(0, 0)
    with pytest.raises(DomainError):
        binomial_ci(5, 4)


@given(n=st.integers(1, 500), z=st.floats(0.1, 4.0))
def test_half_width_maximal_at_one_half(n, z):
    best = 0.5 * z * math.sqrt(1.0 / n)
    for k in range(n + 1):
        assert binomial_ci(k, n, z).half_width <= best + 1e-12


def test_significance_flag_against_baseline():
    corpus = generate_synthetic(SyntheticSpec(n_intents=3, n_per_intent=6, dim=6))
    base = eval_pair_matrix(corpus.embeddings, corpus)
    lookup = {(c["src"], c["tgt"]): c for c in base.cells}
    same = eval_pair_matrix(corpus.embeddings, corpus, baseline=lookup)
    assert all(c["significant"] is False for c in same.cells)


def test_compactness_zero_and_alignment_one():
    emb = np.array([[1.0, 2.0], [1.0, 2.0], [-3.0, 0.5], [-3.0, 0.5]])
    m = compactness_metrics(emb, [0, 0, 1, 1], ["en", "de", "en", "de"], ["g0", "g0", "g1", "g1"])
    assert m["intra_class_variance"] == 0.0
    assert m["alignment"] == pytest.approx(1.0, abs=1e-15)
    assert m["n_pairs"] == 2


def test_compactness_hand_fixture():
    emb = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 1.0], [0.0, 3.0]])
    labels = [0, 0, 1, 1]
    langs = ["en", "de", "en", "de"]
    groups = ["g0", "g0", "g1", "g1"]
    m = compactness_metrics(emb, labels, langs, groups)
    # class 0 centroid (1, 0): distances 1, 1; class 1 centroid (0, 2): distances 1, 1
    assert abs(m["intra_class_variance"] - 1.0) <= 1e-12
    # pair g0 involves the zero vector (cosine 0 by convention), pair g1 is parallel (cosine 1)
    assert abs(m["alignment"] - 0.5) <= 1e-12
    unlabeled = compactness_metrics(emb, [0, 0, -1, -1], langs, groups)
    assert abs(unlabeled["intra_class_variance"] - 1.0) <= 1e-12


def _eigen_oracle(cov):
    """Eigenpairs of a symmetric 3x3 matrix from its characteristic cubic."""
    a = cov
    c2 = -np.trace(a)
    c1 = (a[0, 0] * a[1, 1] + a[0, 0] * a[2, 2] + a[1, 1] * a[2, 2]
          - a[0, 1] ** 2 - a[0, 2] ** 2 - a[1, 2] ** 2)
    c0 = -np.linalg.det(a)
    roots = sorted(np.real(np.roots([1.0, c2, c1, c0])), reverse=True)
    vecs = []
    for lam in roots[:2]:
        m = a - lam * np.eye(3)
        # eigenvector = the largest cross product of two rows of (A - lambda I)
        crosses = [np.cross(m[0], m[1]), np.cross(m[0], m[2]), np.cross(m[1], m[2])]
        v = max(crosses, key=np.linalg.norm)
        vecs.append(v / np.linalg.norm(v))
    return roots, vecs


def test_projection_matches_eigen_oracle():
    x = np.array([[2.0, 0.0, 1.0], [0.0, 1.0, -1.0], [3.0, 1.0, 0.5], [-1.0, 2.0, 0.0], [1.0, -2.0, 2.0]])
    coords, frac, degenerate = project_2d(x)
    centered = x - x.mean(axis=0)
    roots, vecs = _eigen_oracle(centered.T @ centered / len(x))
    assert not degenerate
    for k in range(2):
        expect = centered @ vecs[k]
        assert min(np.max(np.abs(coords[:, k] - expect)), np.max(np.abs(coords[:, k] + expect))) <= 1e-8
        assert frac[k] == pytest.approx(roots[k] / sum(roots), abs=1e-8)


def test_projection_rank_one_and_zero_variance():
    t = np.linspace(-1, 1, 7)[:, None]
    coords, frac, degenerate = project_2d(t * np.array([[1.0, 2.0, -1.0]]))
    assert frac[1] == pytest.approx(0.0, abs=1e-12) and np.max(np.abs(coords[:, 1])) < 1e-12
    coords, frac, degenerate = project_2d(np.ones((4, 3)))
    assert degenerate and np.array_equal(coords, np.zeros((4, 2)))
    with pytest.raises(DomainError):
        project_2d(np.ones((1, 3)))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 12), d=st.integers(2, 6))
def test_projection_axis_ordering(seed, n, d):
    x = np.random.default_rng(seed).normal(size=(n, d))
    coords, frac, _ = project_2d(x)
    assert frac[0] >= frac[1] - 1e-12
    assert np.var(coords[:, 0]) >= np.var(coords[:, 1]) - 1e-9


def test_report_json_round_trip_and_table():
    corpus = generate_synthetic(SyntheticSpec(n_intents=3, n_per_intent=6, dim=6))
    report = eval_pair_matrix(corpus.embeddings, corpus)
    import json
    back = EvalReport.from_dict(json.loads(report.to_json()))
    assert back.to_json() == report.to_json()
    table = render_table([("frozen", report), ("again", back)]).splitlines()
    assert table[0].split() == ["Method", "en-en", "en>de", "en>es", "de>en", "es>en"]
    assert len(table) == 3
