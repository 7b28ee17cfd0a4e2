import datetime as dt
import pickle

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hclex.corpus import Document, DocumentHeader
from hclex.lexicon import (COMPENSATION, DEI, HEALTH_SAFETY, Lexicon, LexiconEntry,
                           load_published_lexicon)
from hclex.scorer import (CompileError, DocumentScore, aggregate_by_group, aggregate_by_period,
                          compile_lexicon, group_csv, parse_bucket, period_csv, read_scores_csv,
                          score_corpus, score_document, scores_csv)
from hclex.synthetic import hc_corpus

from oracles import leftmost_longest

ALPHABET = ["ka", "ke", "ki", "ko", "ku", "ma"]
CATS = ["A", "B", "C"]


def lexicon_of(terms):
    return Lexicon(tuple(LexiconEntry(t, c, None, "expanded", None) for t, c in terms))


def random_case(seed):
    rng = np.random.default_rng(seed)
    terms = {}
    for _ in range(int(rng.integers(1, 12))):
        n = int(rng.integers(1, 4))
        key = tuple(ALPHABET[i] for i in rng.integers(len(ALPHABET), size=n))
        terms.setdefault(key, CATS[int(rng.integers(len(CATS)))])
    doc = [ALPHABET[i] for i in rng.integers(len(ALPHABET), size=int(rng.integers(0, 201)))]
    return terms, doc


def check_case(terms, doc):
    lex = lexicon_of(("_".join(k), c) for k, c in terms.items())
    m = compile_lexicon(lex)
    score = score_document(m, " ".join(doc))
    want = [0] * len(m.groups)
    for _, _, cat in leftmost_longest(doc, terms):
        want[m.groups.index((cat, None))] += 1
    assert list(score.counts) == want
    assert score.total_tokens == len(doc)
    ids = m.token_ids(doc)
    assert m.find(ids) == m._find_py(ids)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9))
def test_matching_equals_brute_force(seed):
    check_case(*random_case(seed))


def test_exact_token_match():
    m = compile_lexicon(lexicon_of([("diversity", DEI)]))
    assert score_document(m, "diversity").counts == (1,)
    assert score_document(m, "diversify").counts == (0,)


def test_two_token_pattern():
    m = compile_lexicon(lexicon_of([("human_capital", DEI)]))
    assert score_document(m, "human capital").counts == (1,)
    assert score_document(m, "human and capital").counts == (0,)
    assert score_document(m, "capital human").counts == (0,)


def test_published_lexicon_compiles():
    m = compile_lexicon(load_published_lexicon())
    assert len(m.groups) == 6
    assert len(compile_lexicon(load_published_lexicon(), ["covid"]).groups) == 5


def test_score_examples():
    m = compile_lexicon(lexicon_of([("diversity", DEI), ("inclusion", DEI)]))
    s = score_document(m, "we value diversity and inclusion")
    assert s.counts == (2,) and s.total_tokens == 5 and s.percentages() == (40.0,)
    empty = score_document(m, "")
    assert empty.counts == (0,) and empty.total_tokens == 0 and empty.percentages() == (0.0,)


def test_longest_match_wins():
    m = compile_lexicon(lexicon_of([("human_capital", DEI), ("human_capital_management", COMPENSATION)]))
    got = dict(zip(m.groups, score_document(m, "human capital management").counts))
    assert got == {(DEI, None): 0, (COMPENSATION, None): 1}


def test_normalization_applies_to_documents():
    m = compile_lexicon(lexicon_of([("employee_benefit", COMPENSATION)]))
    assert score_document(m, "Employees' Benefits").counts == (1,)


def test_cross_category_collision_rejected():
    with pytest.raises(CompileError):
        compile_lexicon(lexicon_of([("benefit", DEI), ("benefits", COMPENSATION)]))


def test_empty_term_rejected():
    with pytest.raises(CompileError):
        compile_lexicon(lexicon_of([("--", DEI)]))


def test_non_overlap_bound():
    for seed in range(50):
        terms, doc = random_case(seed)
        lex = lexicon_of(("_".join(k), c) for k, c in terms.items())
        m = compile_lexicon(lex)
        spans = m.find(m.token_ids(doc))
        assert sum(e - s for s, e, _ in spans) <= len(doc)
        assert all(a[1] <= b[0] for a, b in zip(spans, spans[1:]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**9), st.integers(0, 10**9))
def test_additivity(seed_a, seed_b):
    terms, doc_a = random_case(seed_a)
    _, doc_b = random_case(seed_b)
    m = compile_lexicon(lexicon_of(("_".join(k), c) for k, c in terms.items()))
    a, b = score_document(m, " ".join(doc_a)), score_document(m, " ".join(doc_b))
    joined = score_document(m, " ".join(doc_a + ["zzboundary"] + doc_b))
    assert joined.counts == tuple(x + y for x, y in zip(a.counts, b.counts))
    assert joined.total_tokens == a.total_tokens + b.total_tokens + 1


@pytest.fixture(scope="module")
def published_matcher():
    return compile_lexicon(load_published_lexicon())


def test_corpus_worker_invariance(published_matcher):
    docs = hc_corpus(12, seed=3, sentences=(5, 10)).documents
    one, err1 = score_corpus(published_matcher, docs, workers=1, batch_size=5)
    four, err4 = score_corpus(published_matcher, docs, workers=4, batch_size=5)
    assert one == four and err1 == err4 == []
    assert [s.doc_id for s in one] == [d.doc_id for d in docs]


def test_corpus_equals_single_calls(published_matcher):
    docs = hc_corpus(100, seed=4, sentences=(2, 6)).documents
    scores, _ = score_corpus(published_matcher, docs)
    assert scores == [score_document(published_matcher, d) for d in docs]


def test_corpus_reports_bad_documents(published_matcher):
    scores, errors = score_corpus(published_matcher, [("ok", "diversity"), ("bad", None)])
    assert [s.doc_id for s in scores] == ["ok"]
    assert errors[0][0] == "bad"


def test_matcher_pickles(published_matcher):
    clone = pickle.loads(pickle.dumps(published_matcher))
    text = "Our DEI and health and safety programs, including COVID-19 vaccination."
    assert score_document(clone, text) == score_document(published_matcher, text)


GROUPS = [(DEI, None), (COMPENSATION, None)]


def test_period_buckets():
    scores = [DocumentScore("a", 10, (1, 0)), DocumentScore("b", 10, (2, 0)), DocumentScore("c", 5, (0, 1))]
    dates = {"a": "2021-01-01", "b": "2021-01-05", "c": "2021-01-12"}
    rep = aggregate_by_period(scores, dates, GROUPS, "days:10")
    assert [(r.bucket, r.doc_count) for r in rep.rows] == [("2021-01-01", 2), ("2021-01-11", 1)]
    assert rep.rows[0].mean_percentage == (15.0, 0.0)
    assert rep.rows[1].mean_percentage == (0.0, 20.0) and rep.rows[1].mean_count == (0.0, 1.0)
    yearly = aggregate_by_period(scores, dates, GROUPS, "year")
    assert [r.bucket for r in yearly.rows] == ["2021"]


def test_missing_dates_excluded():
    scores = [DocumentScore("a", 10, (1, 0)), DocumentScore("b", 10, (2, 0))]
    rep = aggregate_by_period(scores, {"a": dt.date(2021, 1, 1)}, GROUPS)
    assert rep.excluded == ("b",) and rep.rows[0].doc_count == 1


def test_ten_day_buckets_over_a_year():
    start = dt.date(2020, 11, 9)
    days = range(0, 365)
    scores = [DocumentScore(str(i), 1, (0, 0)) for i in days]
    dates = {str(i): start + dt.timedelta(days=i) for i in days}
    assert len(aggregate_by_period(scores, dates, GROUPS, "days:10").rows) <= 37


def test_group_shares():
    scores = [DocumentScore("a", 10, (1, 0)), DocumentScore("b", 10, (0, 3)), DocumentScore("c", 4, (0, 0))]
    rep = aggregate_by_group(scores, {"a": "g", "b": "g", "c": "h"}, GROUPS)
    assert rep.rows[0].mean_percentage == (25.0, 75.0)
    assert rep.rows[1].mean_percentage == (0.0, 0.0)


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50)), min_size=1, max_size=20))
def test_group_shares_sum_to_100(rows):
    groups = GROUPS + [(HEALTH_SAFETY, "covid")]
    scores = [DocumentScore(str(i), 100, r) for i, r in enumerate(rows)]
    rep = aggregate_by_group(scores, {str(i): f"g{i % 3}" for i in range(len(rows))}, groups)
    for row in rep.rows:
        total = sum(float(f"{v:.4f}") for v in row.mean_percentage)
        assert total == 0.0 or abs(total - 100.0) <= 0.05


def test_published_table5_row_sums_to_100():
    assert abs(sum([17.49, 7.16, 3.81, 24.85, 11.54, 35.16]) - 100.0) <= 0.05


def test_parse_bucket():
    assert parse_bucket("days:10") == ("days", 10) and parse_bucket("year") == ("year", None)
    with pytest.raises(ValueError):
        parse_bucket("weeks:2")


def test_csv_outputs(published_matcher):
    docs = hc_corpus(3, seed=9, sentences=(2, 4)).documents
    scores, _ = score_corpus(published_matcher, docs)
    text = scores_csv(scores, published_matcher.groups)
    header = text.splitlines()[0].split(",")
    assert header[:2] == ["doc_id", "total_tokens"] and header[-1] == "total_pct"
    back, groups = read_scores_csv(text)
    assert back == scores and tuple(groups) == published_matcher.groups
    rep = aggregate_by_period(scores, {d.doc_id: d.header.filing for d in docs}, groups, "year")
    assert period_csv(rep).splitlines()[0].endswith("doc_count")
    rep = aggregate_by_group(scores, {d.doc_id: "all" for d in docs}, groups)
    line = group_csv(rep).splitlines()[1].split(",")
    assert all(len(v.split(".")[1]) == 4 for v in line[1:-1] if "." in v)


def test_excluding_covid_drops_column():
    lex = load_published_lexicon()
    m = compile_lexicon(lex, ["covid"])
    header = scores_csv([], m.groups).splitlines()[0]
    assert "covid" not in header
    assert score_document(m, "covid-19 vaccination").counts == (0,) * len(m.groups)


def test_document_objects_accepted(published_matcher):
    d = Document(DocumentHeader("5", "X", "2021-01-01", "2020-12-31"), "diversity")
    assert score_document(published_matcher, d).doc_id == "5"
