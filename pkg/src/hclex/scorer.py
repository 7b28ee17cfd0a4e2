"""Lexicon matching over token streams and disclosure measures.

Lexicon terms are split on ``_`` into token sequences and compiled into an
Aho-Corasick automaton over token ids.  Documents are scanned with a
leftmost-longest, non-overlapping policy: each match counts once for its
term's (category, subcategory) no matter how many tokens it spans, and the
denominator is the raw token count of the document.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import logging
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from numba import njit

from .corpus import Document
from .lexicon import Lexicon
from .text import normalize_token, tokenize

logger = logging.getLogger(__name__)

Group = tuple[str, "str | None"]


class CompileError(ValueError):
    pass


def term_tokens(term: str) -> tuple[str, ...]:
    return tuple(normalize_token(t) for part in term.split("_") for t in tokenize(part))


def group_label(group: Group) -> str:
    category, sub = group
    return category if sub is None else f"{category}/{sub}"


class _TokenIds(dict):
    """Raw token -> pattern alphabet id (-1 when the token is in no pattern)."""

    def __init__(self, alphabet: Mapping[str, int]):
        super().__init__()
        self.alphabet = alphabet

    def __missing__(self, raw):
        tid = self.alphabet.get(normalize_token(raw), -1)
        self[raw] = tid
        return tid


class CompiledMatcher:
    """Aho-Corasick automaton over lexicon token sequences."""

    def __init__(self, patterns: Sequence[tuple[str, ...]], pattern_group: Sequence[int],
                 groups: Sequence[Group], terms: Sequence[Sequence[str]]):
        self.patterns = tuple(patterns)
        self.pattern_group = tuple(pattern_group)
        self.pattern_group_arr = np.asarray(self.pattern_group, dtype=np.int64)
        self.groups = tuple(groups)
        self.terms = tuple(tuple(t) for t in terms)
        alphabet: dict[str, int] = {}
        for p in self.patterns:
            for tok in p:
                alphabet.setdefault(tok, len(alphabet))
        self.alphabet = alphabet
        self._build()
        self._ids = _TokenIds(alphabet)

    def _build(self):
        goto: list[dict[int, int]] = [{}]
        depth = [0]
        own: list[int] = [-1]
        for pi, pat in enumerate(self.patterns):
            s = 0
            for tok in pat:
                tid = self.alphabet[tok]
                nxt = goto[s].get(tid)
                if nxt is None:
                    nxt = len(goto)
                    goto[s][tid] = nxt
                    goto.append({})
                    depth.append(depth[s] + 1)
                    own.append(-1)
                s = nxt
            own[s] = pi
        fail = [0] * len(goto)
        # outputs[s]: (length, pattern) for every pattern that is a suffix of s, longest first
        outputs: list[tuple[tuple[int, int], ...]] = [()] * len(goto)
        queue = deque()
        for s in goto[0].values():
            queue.append(s)
            outputs[s] = ((depth[s], own[s]),) if own[s] >= 0 else ()
        while queue:
            r = queue.popleft()
            for tid, s in goto[r].items():
                queue.append(s)
                f = fail[r]
                while f and tid not in goto[f]:
                    f = fail[f]
                fail[s] = goto[f].get(tid, 0) if goto[f].get(tid, 0) != s else 0
                mine = ((depth[s], own[s]),) if own[s] >= 0 else ()
                outputs[s] = mine + outputs[fail[s]]
        self.goto = goto
        self.fail = fail
        self.depth = depth
        self.outputs = outputs
        # dense transition table with failure links folded in, for the compiled scan
        n_states, n_sym = len(goto), max(len(self.alphabet), 1)
        delta = np.zeros((n_states, n_sym), dtype=np.int32)
        order = sorted(range(n_states), key=depth.__getitem__)
        for s in order:
            if s:
                delta[s] = delta[fail[s]]
            for tid, nxt in goto[s].items():
                delta[s, tid] = nxt
        self.delta = delta
        self.depth_arr = np.asarray(depth, dtype=np.int32)
        self.out_len = np.array([o[0][0] if o else 0 for o in outputs], dtype=np.int32)
        self.out_pat = np.array([o[0][1] if o else -1 for o in outputs], dtype=np.int32)

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_ids"] = None
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._ids = _TokenIds(self.alphabet)

    @property
    def n_states(self) -> int:
        return len(self.goto)

    def token_ids(self, tokens: Sequence[str]) -> list[int]:
        return list(map(self._ids.__getitem__, tokens))

    def find(self, ids: Sequence[int]) -> list[tuple[int, int, int]]:
        """Leftmost-longest non-overlapping matches as ``(start, end, pattern)``."""
        arr = np.asarray(ids, dtype=np.int32)
        if arr.size == 0:
            return []
        m = _scan(arr, self.delta, self.depth_arr, self.out_len, self.out_pat)
        return [tuple(r) for r in m.tolist()]

    def _find_py(self, ids: Sequence[int]) -> list[tuple[int, int, int]]:
        # reference scan over the sparse goto/fail structure
        goto, fail, depth, outputs = self.goto, self.fail, self.depth, self.outputs
        root = goto[0]
        found = []
        n = len(ids)
        pos = 0
        state = 0
        p_start = p_end = p_pat = -1
        while True:
            if pos >= n:
                if p_pat < 0:
                    break
                found.append((p_start, p_end, p_pat))
                pos, state, p_pat = p_end, 0, -1
                continue
            t = ids[pos]
            if state == 0 and p_pat < 0:
                nxt = root.get(t) if t >= 0 else None
                if nxt is None:
                    pos += 1
                    continue
                state = nxt
            elif t < 0:
                state = 0
            else:
                while state and t not in goto[state]:
                    state = fail[state]
                state = goto[state].get(t, 0)
            out = outputs[state]
            if out:
                length, pat = out[0]
                start = pos - length + 1
                if p_pat < 0 or start < p_start or (start == p_start and pos + 1 > p_end):
                    p_start, p_end, p_pat = start, pos + 1, pat
            if p_pat >= 0 and p_start < pos + 1 - depth[state]:
                found.append((p_start, p_end, p_pat))
                pos = p_end
                state = 0
                p_pat = -1
                continue
            pos += 1
        return found

    def count_tokens(self, tokens: Sequence[str]) -> np.ndarray:
        counts = np.zeros(len(self.groups), dtype=np.int64)
        if not tokens:
            return counts
        ids = np.fromiter(map(self._ids.__getitem__, tokens), dtype=np.int32, count=len(tokens))
        m = _scan(ids, self.delta, self.depth_arr, self.out_len, self.out_pat)
        if len(m):
            np.add.at(counts, self.pattern_group_arr[m[:, 2]], 1)
        return counts


@njit(cache=True)
def _scan(ids, delta, depth, out_len, out_pat):
    n = ids.shape[0]
    found = np.empty((n, 3), dtype=np.int64)
    k = 0
    pos = 0
    state = 0
    p_start = -1
    p_end = -1
    p_pat = -1
    while True:
        if pos >= n:
            if p_pat < 0:
                break
            # input ended while a longer match was still possible: commit and rescan after it
            found[k, 0] = p_start
            found[k, 1] = p_end
            found[k, 2] = p_pat
            k += 1
            pos = p_end
            state = 0
            p_pat = -1
            continue
        t = ids[pos]
        if t < 0:
            state = 0
        else:
            state = delta[state, t]
        if out_len[state] > 0:
            start = pos - out_len[state] + 1
            if p_pat < 0 or start < p_start or (start == p_start and pos + 1 > p_end):
                p_start = start
                p_end = pos + 1
                p_pat = out_pat[state]
        if p_pat >= 0 and p_start < pos + 1 - depth[state]:
            found[k, 0] = p_start
            found[k, 1] = p_end
            found[k, 2] = p_pat
            k += 1
            pos = p_end
            state = 0
            p_pat = -1
            continue
        pos += 1
    return found[:k]


def compile_lexicon(lexicon: Lexicon, exclude_subcategories: Iterable[str] = ()) -> CompiledMatcher:
    """Compile ``lexicon``; entries whose subcategory is excluded are dropped."""
    excluded = set(exclude_subcategories)
    entries = [e for e in lexicon.entries if e.subcategory not in excluded or e.subcategory is None]
    if not entries:
        raise CompileError("cannot compile an empty lexicon")
    groups: list[Group] = []
    for cat in lexicon.categories:
        present = {e.subcategory for e in entries if e.category == cat}
        declared = [s for s in lexicon.subcategories.get(cat, ()) if s in present]
        subs = ([None] if None in present else []) + declared
        groups.extend((cat, s) for s in subs + sorted(present - set(subs)))
    group_index = {g: i for i, g in enumerate(groups)}
    seq_index: dict[tuple[str, ...], int] = {}
    patterns, pattern_group, terms = [], [], []
    for e in entries:
        seq = term_tokens(e.term)
        if not seq:
            raise CompileError(f"term {e.term!r} has no tokens after normalization")
        g = group_index[(e.category, e.subcategory)]
        if seq in seq_index:
            pi = seq_index[seq]
            if pattern_group[pi] != g:
                raise CompileError(
                    f"terms {terms[pi][0]!r} and {e.term!r} normalize to the same tokens "
                    f"but belong to different categories")
            terms[pi].append(e.term)
            continue
        seq_index[seq] = len(patterns)
        patterns.append(seq)
        pattern_group.append(g)
        terms.append([e.term])
    return CompiledMatcher(patterns, pattern_group, groups, terms)


@dataclass(frozen=True)
class DocumentScore:
    doc_id: str
    total_tokens: int
    counts: tuple[int, ...]

    @property
    def total_hits(self) -> int:
        return sum(self.counts)

    def percentages(self) -> tuple[float, ...]:
        if self.total_tokens == 0:
            return tuple(0.0 for _ in self.counts)
        return tuple(100.0 * c / self.total_tokens for c in self.counts)

    def total_percentage(self) -> float:
        return 100.0 * self.total_hits / self.total_tokens if self.total_tokens else 0.0


def _doc_parts(doc) -> tuple[str, str]:
    if isinstance(doc, Document):
        return doc.doc_id, doc.text
    if isinstance(doc, str):
        return "", doc
    doc_id, text = doc
    return str(doc_id), text


def score_document(matcher: CompiledMatcher, doc) -> DocumentScore:
    doc_id, text = _doc_parts(doc)
    tokens = tokenize(text)
    counts = matcher.count_tokens(tokens)
    return DocumentScore(doc_id, len(tokens), tuple(int(c) for c in counts))


_WORKER_MATCHER: CompiledMatcher | None = None


def _init_worker(matcher):
    global _WORKER_MATCHER
    _WORKER_MATCHER = matcher


def _score_batch(batch):
    out = []
    for doc_id, text in batch:
        try:
            out.append(score_document(_WORKER_MATCHER, (doc_id, text)))
        except Exception as exc:  # reported per document, batch continues
            out.append((doc_id, f"{type(exc).__name__}: {exc}"))
    return out


def _batches(items, size):
    batch = []
    for item in items:
        batch.append(item)
        if len(batch) >= size:
            yield batch
            batch = []
    if batch:
        yield batch


def score_corpus(matcher: CompiledMatcher, docs: Iterable, workers: int = 1,
                 batch_size: int = 64) -> tuple[list[DocumentScore], list[tuple[str, str]]]:
    """Score documents in input order; failures go to the returned error list."""
    pairs = (_doc_parts(d) for d in docs)
    results = []
    if workers <= 1:
        _init_worker(matcher)
        for batch in _batches(pairs, batch_size):
            results.extend(_score_batch(batch))
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(matcher,)) as pool:
            for part in pool.map(_score_batch, _batches(pairs, batch_size)):
                results.extend(part)
    scores = [r for r in results if isinstance(r, DocumentScore)]
    errors = [r for r in results if not isinstance(r, DocumentScore)]
    if errors:
        logger.warning("%d document(s) failed to score", len(errors))
    return scores, errors


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class BucketRow:
    bucket: str
    doc_count: int
    mean_percentage: tuple[float, ...]
    mean_count: tuple[float, ...]


@dataclass(frozen=True)
class AggregateReport:
    groups: tuple[Group, ...]
    rows: tuple[BucketRow, ...]
    excluded: tuple[str, ...] = ()


def parse_bucket(spec: str):
    """``"days:10"`` -> ``("days", 10)``; ``"year"`` -> ``("year", None)``."""
    if spec in ("year", "calendar_year"):
        return ("year", None)
    kind, _, n = spec.partition(":")
    if kind == "days" and n.isdigit() and int(n) > 0:
        return ("days", int(n))
    raise ValueError(f"bucket must be 'days:N' or 'year', got {spec!r}")


def aggregate_by_period(scores: Sequence[DocumentScore], dates: Mapping[str, dt.date | str],
                        groups: Sequence[Group], bucket="days:10", origin: dt.date | None = None) -> AggregateReport:
    """Mean keyword percentage and count per time bucket.

    ``days:N`` buckets are consecutive N-day windows starting at ``origin``
    (default: the earliest date) and are labelled by their first day.
    """
    kind, n = parse_bucket(bucket) if isinstance(bucket, str) else bucket
    dated, missing = [], []
    for s in scores:
        d = dates.get(s.doc_id)
        if d is None:
            missing.append(s.doc_id)
            continue
        dated.append((dt.date.fromisoformat(d) if isinstance(d, str) else d, s))
    if missing:
        logger.warning("%d scored document(s) have no date", len(missing))
    if kind == "days" and dated:
        origin = origin or min(d for d, _ in dated)
    buckets: dict[object, list[DocumentScore]] = {}
    for d, s in dated:
        if kind == "year":
            key = d.year
        else:
            key = origin + dt.timedelta(days=((d - origin).days // n) * n)
        buckets.setdefault(key, []).append(s)
    rows = []
    for key in sorted(buckets):
        members = buckets[key]
        pct = np.mean([m.percentages() for m in members], axis=0)
        cnt = np.mean([m.counts for m in members], axis=0)
        label = str(key) if kind == "year" else key.isoformat()
        rows.append(BucketRow(label, len(members), tuple(map(float, pct)), tuple(map(float, cnt))))
    return AggregateReport(tuple(groups), tuple(rows), tuple(missing))


def aggregate_by_group(scores: Sequence[DocumentScore], group_of: Mapping[str, str],
                       groups: Sequence[Group]) -> AggregateReport:
    """Each category's share (percent) of all keyword hits within a group.

    A group with no hits at all reports 0 for every share.
    """
    missing = [s.doc_id for s in scores if s.doc_id not in group_of]
    if missing:
        raise ValueError(f"no group for {len(missing)} document(s), e.g. {missing[0]!r}")
    acc: dict[str, list] = {}
    for s in scores:
        g = group_of[s.doc_id]
        tot = acc.setdefault(g, [np.zeros(len(groups), dtype=np.int64), 0])
        tot[0] += np.asarray(s.counts)
        tot[1] += 1
    rows = []
    for g in sorted(acc):
        hits, n = acc[g]
        total = hits.sum()
        shares = hits / total * 100.0 if total else np.zeros(len(groups))
        rows.append(BucketRow(g, n, tuple(map(float, shares)), tuple(float(h) / n for h in hits)))
    return AggregateReport(tuple(groups), tuple(rows))


# ---------------------------------------------------------------------------
# CSV output


def _f4(x: float) -> str:
    return f"{x:.4f}"


def scores_csv(scores: Sequence[DocumentScore], groups: Sequence[Group]) -> str:
    labels = [group_label(g) for g in groups]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["doc_id", "total_tokens"] + [f"{l}_count" for l in labels] + ["total_count"]
               + [f"{l}_pct" for l in labels] + ["total_pct"])
    for s in scores:
        w.writerow([s.doc_id, s.total_tokens, *s.counts, s.total_hits,
                    *map(_f4, s.percentages()), _f4(s.total_percentage())])
    return buf.getvalue()


def read_scores_csv(text: str) -> tuple[list[DocumentScore], list[Group]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    count_cols = [h for h in header[2:] if h.endswith("_count") and h != "total_count"]
    groups = []
    for h in count_cols:
        label = h[: -len("_count")]
        cat, sep, sub = label.rpartition("/")
        groups.append((cat, sub) if sep else (label, None))
    scores = [DocumentScore(row[0], int(row[1]), tuple(int(x) for x in row[2:2 + len(groups)]))
              for row in reader]
    return scores, groups


def period_csv(report: AggregateReport) -> str:
    labels = [group_label(g) for g in report.groups]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bucket"] + [f"{l}_pct" for l in labels] + [f"{l}_count" for l in labels] + ["doc_count"])
    for r in report.rows:
        w.writerow([r.bucket, *map(_f4, r.mean_percentage), *map(_f4, r.mean_count), r.doc_count])
    return buf.getvalue()


def group_csv(report: AggregateReport) -> str:
    labels = [group_label(g) for g in report.groups]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bucket"] + [f"{l}_share" for l in labels] + ["doc_count"])
    for r in report.rows:
        w.writerow([r.bucket, *map(_f4, r.mean_percentage), r.doc_count])
    return buf.getvalue()
