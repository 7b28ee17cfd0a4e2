"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
Set HCLEX_CORPUS to the shared combined disclosure file to enable the
real-data checks of criteria 3 and 7.
"""
import math
import os
import time

import numpy as np
import pytest

from hclex.classifier_eval import select_threshold
from hclex.cluster import kmeans, pca_project, silhouette, silhouette_sweep
from hclex.corpus import (Corpus, corpus_stats, parse_combined, read_combined, read_csv,
                          reconcile_sample_selection, write_combined, write_csv)
from hclex.embedding import (TrainConfig, build_vocab, cosine, sgns_gradients, sgns_loss, train)
from hclex.lexicon import (COMPENSATION, DEI, HEALTH_SAFETY, LABOR, DEMOGRAPHICS, expand,
                           load_published_lexicon, published_seeds, similarity_histogram)
from hclex.scorer import aggregate_by_group, compile_lexicon, score_corpus, score_document
from hclex.synthetic import bulk_texts, hc_corpus, interchangeable_corpus
from hclex.text import apply_phrases, learn_phrases, normalized_tokens

from oracles import expand_oracle, leftmost_longest, silhouette_oracle
from test_classifier_eval import _f1_at
from test_embedding import _fd_grad, _rel_err
from test_lexicon import random_fixture
from test_scorer import compile_lexicon as _compile, lexicon_of, random_case

CORPUS = os.environ.get("HCLEX_CORPUS")


def test_c01_lexicon_integrity(acceptance):
    t0 = time.perf_counter()
    lex = load_published_lexicon()
    elapsed = time.perf_counter() - t0
    counts = lex.counts()
    subs = lex.subcategory_counts()
    got = (len(lex), counts[DEI], counts[HEALTH_SAFETY], subs[(HEALTH_SAFETY, "general")],
           subs[(HEALTH_SAFETY, "covid")], counts[LABOR], counts[COMPENSATION], counts[DEMOGRAPHICS])
    ok = got == (1285, 253, 227, 157, 70, 362, 283, 160) and elapsed < 1.0
    acceptance.record("1 lexicon integrity", ok, f"counts={got} load={elapsed:.3f}s")
    assert ok


def test_c02_sample_selection(acceptance):
    rows = reconcile_sample_selection()
    got = [(r.change, r.remaining) for r in rows]
    want = [(0, 7185), (-3219, 3966), (0, 3966), (-5, 3961), (-3, 3958), (-2, 3956), (-3, 3953), (0, 3953)]
    ok = got == want
    acceptance.record("2 sample-selection reconciliation", ok, " -> ".join(str(r.remaining) for r in rows if r.is_subtotal))
    assert ok


def test_c03_corpus_data(acceptance):
    if CORPUS:
        corpus = read_combined(CORPUS)
        stats = corpus_stats(corpus)
        ok = stats.document_count == 3953 and 1_600_000 <= stats.total_tokens <= 2_400_000
        detail = f"shared file: {stats.document_count} documents, {stats.total_tokens} tokens"
    else:
        corpus = hc_corpus(200, seed=11)
        awkward = Corpus(corpus.documents[:-1] + (type(corpus.documents[0])(
            corpus.documents[-1].header, "#DOC|1|x\n#END\n\\#END, \"quoted\"\r\nline"),))
        ok = parse_combined(write_combined(awkward)) == awkward and read_csv(write_csv(awkward)) == awkward
        detail = "shared file absent (set HCLEX_CORPUS); synthetic round trip of 200 documents substituted"
    acceptance.record("3 corpus data check", ok, detail)
    assert ok


def test_c04_expansion_oracle(acceptance):
    spent = 0.0
    checks = 0
    for seed in range(20):
        m, vocab, seeds = random_fixture(1000 + seed, max_terms=500)
        assert len(vocab) <= 500
        for threshold in (0.3, 0.5, 0.7):
            for antonyms in (True, False):
                t0 = time.perf_counter()
                got = expand(m, vocab, seeds, threshold, antonyms)
                spent += time.perf_counter() - t0
                want = expand_oracle(m.input_vectors, vocab.tokens, seeds, threshold, antonyms)
                got_map = {c.term: (c.proposed_category, c.source, c.negative_polarity) for c in got}
                assert got_map == {t: v[:3] for t, v in want.items()}
                for c in got:
                    assert abs(c.max_abs_similarity - want[c.term][3]) <= 1e-12
                checks += 1
    ok = spent < 10.0
    acceptance.record("4 expansion oracle", ok, f"{checks} fixture/threshold/antonym cases equal; expand time {spent:.2f}s")
    assert ok


def test_c05_embedding_sanity(acceptance):
    t0 = time.perf_counter()
    streams = interchangeable_corpus(2000, seed=0)
    vocab = build_vocab(streams, min_count=1)
    cfg = TrainConfig(seed=42, workers=1)
    a = train(streams, vocab, cfg)
    b = train(streams, vocab, cfg)
    cos = cosine(a.vector(vocab, "xtoken"), a.vector(vocab, "ytoken"))
    identical = np.array_equal(a.input_vectors, b.input_vectors) and np.array_equal(a.output_vectors, b.output_vectors)
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(100):
        c, o, n = rng.normal(size=8), rng.normal(size=8), rng.normal(size=(5, 8))
        dc, do, dn = sgns_gradients(c, o, n)
        worst = max(worst, _rel_err(dc, _fd_grad(lambda x: sgns_loss(x, o, n), c)),
                    _rel_err(do, _fd_grad(lambda x: sgns_loss(c, x, n), o)),
                    _rel_err(dn, _fd_grad(lambda x: sgns_loss(c, o, x), n)))
    elapsed = time.perf_counter() - t0
    ok = cos >= 0.7 and identical and worst < 1e-4 and elapsed < 120
    acceptance.record("5 embedding sanity", ok,
                      f"cos(X,Y)={cos:.4f} bit-identical={identical} max grad rel err={worst:.2e} time={elapsed:.1f}s")
    assert ok


def test_c06_clustering_oracles(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(3, 21))
        pts = rng.normal(size=(n, int(rng.integers(1, 6))))
        labels = rng.integers(0, int(rng.integers(2, 6)), size=n)
        if len(set(labels.tolist())) < 2:
            labels[0] = 1 - labels[0]
        worst = max(worst, abs(silhouette(pts, labels) - silhouette_oracle(pts, labels.tolist())))
    g = np.random.default_rng(7)
    blob = np.concatenate([g.normal(size=(25, 5)), 30 + g.normal(size=(25, 5))])
    truth = np.repeat([0, 1], 25)
    rep = kmeans(blob, 2, seed=3)
    blob_ok = len(set(zip(rep.assignments.tolist(), truth.tolist()))) == 2
    blob_sil = silhouette(blob, rep.assignments)
    low = g.normal(size=(80, 3)) @ g.normal(size=(3, 40)) + g.normal(size=40)
    proj = pca_project(low, 3)
    recon = float(np.max(np.abs(proj.coordinates @ proj.components.T + proj.mean - low)))
    three = np.concatenate([c + 0.8 * g.normal(size=(20, 2)) for c in ([0, 0], [10, 0], [5, 9])])
    sweep = silhouette_sweep(three, 2, 10, seed=1)
    peak = max(sweep, key=lambda r: r[1])[0]
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and blob_ok and blob_sil > 0.8 and recon < 1e-8 and peak == 3 and elapsed < 30
    acceptance.record("6 clustering oracles", ok,
                      f"silhouette max diff={worst:.1e} 2-blob ok={blob_ok} sil={blob_sil:.3f} "
                      f"PCA recon={recon:.1e} sweep peak k={peak} time={elapsed:.1f}s")
    assert ok


def _local_maxima(rows):
    vals = [s for _, s, _ in rows]
    return [rows[i][0] for i in range(len(vals))
            if (i == 0 or vals[i] > vals[i - 1]) and (i == len(vals) - 1 or vals[i] > vals[i + 1])]


def test_c07_qualitative_echoes(acceptance):
    """Reported, not asserted."""
    if CORPUS:
        docs = read_combined(CORPUS).documents
        source, epochs = "shared corpus", 5
    else:
        # the tiny corpus needs many more passes before vectors separate
        docs = hc_corpus(50, seed=2021).documents
        source, epochs = "mini fixture stand-in (shared corpus absent)", 50
    streams = [normalized_tokens(d.text) for d in docs]
    table = learn_phrases(streams)
    merged = [apply_phrases(s, table) for s in streams]
    vocab = build_vocab(merged, min_count=5)
    m = train(merged, vocab, TrainConfig(seed=1, epochs=epochs))
    seeds = published_seeds()
    cands = expand(m, vocab, seeds, 0.5)
    n_exp = len(cands)
    within = abs(n_exp - 7018) <= 0.4 * 7018
    lex_terms = [e.term for e in load_published_lexicon().entries if e.term in vocab]
    pts = m.input_vectors[[vocab.id(t) for t in lex_terms]].astype(float)
    sweep = silhouette_sweep(pts, 2, min(25, len(pts) - 1), seed=1)
    hist = similarity_histogram(m, vocab, seeds)
    centers = np.array([(lo + hi) / 2 for lo, hi, _, _ in hist])
    weights = np.array([n for _, _, n, _ in hist], dtype=float)
    mu = (centers * weights).sum() / weights.sum()
    sd = math.sqrt(((centers - mu) ** 2 * weights).sum() / weights.sum())
    skew = ((centers - mu) ** 3 * weights).sum() / weights.sum() / sd ** 3 if sd > 0 else float("nan")
    acceptance.record("7 qualitative echoes (reported only)", True,
                      f"{source}: candidates={n_exp} (7,018 +/-40%: {within}); "
                      f"silhouette local maxima at k={_local_maxima(sweep)[:4]}; histogram skewness={skew:.2f}")


def test_c08_scoring_oracle(acceptance):
    t0 = time.perf_counter()
    for seed in range(200):
        terms, doc = random_case(50_000 + seed)
        m = _compile(lexicon_of(("_".join(k), c) for k, c in terms.items()))
        want = [0] * len(m.groups)
        for _, _, cat in leftmost_longest(doc, terms):
            want[m.groups.index((cat, None))] += 1
        assert list(score_document(m, " ".join(doc)).counts) == want
    matcher = compile_lexicon(load_published_lexicon())
    docs = hc_corpus(40, seed=8, sentences=(5, 15)).documents
    one, _ = score_corpus(matcher, docs, workers=1, batch_size=7)
    many, _ = score_corpus(matcher, docs, workers=3, batch_size=7)
    rep = aggregate_by_group(one, {d.doc_id: f"g{i % 4}" for i, d in enumerate(docs)}, matcher.groups)
    sums = [sum(float(f"{v:.4f}") for v in r.mean_percentage) for r in rep.rows]
    elapsed = time.perf_counter() - t0
    ok = one == many and all(abs(s - 100) <= 0.05 for s in sums) and elapsed < 20
    acceptance.record("8 scoring oracle", ok,
                      f"200 random pairs equal; workers 1 vs 3 identical={one == many}; "
                      f"group share sums={[round(s, 4) for s in sums]} time={elapsed:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def throughput():
    texts = bulk_texts(100_000_000, seed=9)
    nbytes = sum(len(t.encode("utf-8")) for t in texts)
    matcher = compile_lexicon(load_published_lexicon())
    score_corpus(matcher, texts[:2])       # warm the compiled scan
    pairs = [(str(i), t) for i, t in enumerate(texts)]
    rates = {}
    for workers in (1, 4):
        t0 = time.perf_counter()
        scores, errors = score_corpus(matcher, pairs, workers=workers, batch_size=32)
        rates[workers] = nbytes / 1e6 / (time.perf_counter() - t0)
        assert not errors and len(scores) == len(texts)
    return nbytes, rates


def test_c09a_throughput_single_worker(acceptance, throughput):
    nbytes, rates = throughput
    ok = rates[1] >= 10.0
    acceptance.record("9a throughput, 1 worker", ok, f"{rates[1]:.1f} MB/s on {nbytes / 1e6:.0f} MB")
    assert ok


def test_c09b_throughput_scaling(acceptance, throughput):
    _, rates = throughput
    speedup = rates[4] / rates[1]
    cpus = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
    ok = speedup >= 3.0
    acceptance.record("9b throughput, 4-worker scaling", ok,
                      f"{rates[4]:.1f} MB/s, speedup {speedup:.2f}x on {cpus} available CPU(s)")
    if not ok and cpus < 4:
        pytest.xfail(f"needs >= 4 CPUs for 3x scaling; this machine has {cpus} (speedup {speedup:.2f}x)")
    assert ok


def test_c10_threshold_selection(acceptance):
    t0 = time.perf_counter()
    t, r = select_threshold([0, 0, 1, 1], [0.10, 0.40, 0.35, 0.80])
    example_ok = t == 0.35 and abs(r.f1 - 0.8) < 1e-12
    rng = np.random.default_rng(10)
    beaten = 0
    for _ in range(50):
        n = int(rng.integers(2, 200))
        y = rng.random(n) < 0.3
        y[0] = True
        p = np.round(rng.random(n), 2)
        best, _ = select_threshold(y, p)
        f_best = _f1_at(y, p, best)
        beaten += any(_f1_at(y, p, g) > f_best for g in np.linspace(0, 1, 1001))
    elapsed = time.perf_counter() - t0
    ok = example_ok and beaten == 0 and elapsed < 5
    acceptance.record("10 threshold selection", ok,
                      f"example threshold={t} F1={r.f1:.4f}; grid beat chosen threshold in {beaten}/50; time={elapsed:.2f}s")
    assert ok
