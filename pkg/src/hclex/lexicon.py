"""Seed expansion, category assignment, review ledger and lexicon I/O."""
from __future__ import annotations

import csv
import io
import logging
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

from .embedding import EmbeddingMatrix, Vocabulary
from .text import normalize_token, tokenize

logger = logging.getLogger(__name__)

DEI = "Diversity, Equity, and Inclusion (DEI)"
HEALTH_SAFETY = "Health and Safety"
LABOR = "Labor Relations and Culture"
COMPENSATION = "Compensation and Benefits"
DEMOGRAPHICS = "Demographics and Others"
CATEGORIES = (DEI, HEALTH_SAFETY, LABOR, COMPENSATION, DEMOGRAPHICS)
SUBCATEGORIES = {HEALTH_SAFETY: ("general", "covid")}

PUBLISHED_TOTAL = 1285
PUBLISHED_COUNTS = {
    DEI: 253,
    HEALTH_SAFETY: 227,
    LABOR: 362,
    COMPENSATION: 283,
    DEMOGRAPHICS: 160,
}
PUBLISHED_SUBCOUNTS = {(HEALTH_SAFETY, "general"): 157, (HEALTH_SAFETY, "covid"): 70}

SOURCES = ("seed", "expanded")
LEXICON_COLUMNS = ("term", "category", "subcategory", "source", "similarity")
LEDGER_COLUMNS = ("term", "decision", "target_category", "note")


class LexiconError(ValueError):
    pass


def term_key(text: str) -> str:
    """Canonical underscore-joined form of a seed word or phrase."""
    parts = [normalize_token(t) for chunk in text.replace("_", " ").split() for t in tokenize(chunk)]
    return "_".join(parts)


# ---------------------------------------------------------------------------
# seeds


@dataclass(frozen=True)
class SeedList:
    category: str
    seeds: tuple[str, ...]

    def __post_init__(self):
        if not self.seeds:
            raise LexiconError(f"category {self.category!r} has no seeds")


def make_seed_lists(pairs: Iterable[tuple[str, str]]) -> list[SeedList]:
    """Group (category, seed) rows, canonicalizing seeds and keeping file order."""
    grouped: OrderedDict[str, list[str]] = OrderedDict()
    owner: dict[str, str] = {}
    for category, raw in pairs:
        key = term_key(raw)
        if not key:
            continue
        if owner.setdefault(key, category) != category:
            raise LexiconError(f"seed {key!r} appears in {owner[key]!r} and {category!r}")
        seeds = grouped.setdefault(category, [])
        if key not in seeds:
            seeds.append(key)
    return [SeedList(c, tuple(s)) for c, s in grouped.items()]


def read_seed_csv(text: str) -> list[SeedList]:
    reader = csv.DictReader(io.StringIO(text))
    return make_seed_lists((row["category"], row["seed"]) for row in reader)


def published_seeds() -> list[SeedList]:
    return read_seed_csv(_data_text("seed_words.csv"))


def missing_seeds(vocab: Vocabulary, seeds: Sequence[SeedList]) -> list[tuple[str, str]]:
    return [(sl.category, s) for sl in seeds for s in sl.seeds if s not in vocab]


# ---------------------------------------------------------------------------
# expansion


@dataclass(frozen=True)
class Candidate:
    term: str
    per_category_mean_similarity: dict[str, float]
    max_abs_similarity: float
    signed_best_similarity: float
    proposed_category: str
    source: str = "expanded"
    negative_polarity: bool = False
    proposed_subcategory: str | None = None


def _seed_matrix(matrix: EmbeddingMatrix, vocab: Vocabulary, seeds: Sequence[SeedList], warn: bool = True):
    units = matrix.unit_vectors()
    seed_ids, seed_cat = [], []
    for ci, sl in enumerate(seeds):
        for s in sl.seeds:
            if s in vocab:
                seed_ids.append(vocab.id(s))
                seed_cat.append(ci)
    if not seed_ids:
        raise LexiconError("none of the seed words is in the vocabulary")
    missing = missing_seeds(vocab, seeds)
    if missing and warn:
        logger.warning("%d seed(s) not in vocabulary: %s", len(missing), ", ".join(s for _, s in missing[:10]))
    sims = np.clip(units @ units[seed_ids].T, -1.0, 1.0)
    return sims, np.asarray(seed_ids), np.asarray(seed_cat)


def expand(matrix: EmbeddingMatrix, vocab: Vocabulary, seeds: Sequence[SeedList],
           threshold: float = 0.5, include_antonyms: bool = True) -> list[Candidate]:
    """Collect vocabulary terms close to any seed and propose a category for each.

    A term qualifies when its cosine to some seed is ``>= threshold`` or,
    with ``include_antonyms``, ``<= -threshold``.  The proposed category is
    the one whose in-vocabulary seeds have the highest mean signed cosine
    with the term (first category wins ties); this holds for seeds too, so
    a seed closer to another category's seeds is proposed there and left to
    the review ledger.  In-vocabulary seeds are always emitted, with
    ``source="seed"``.
    """
    sims, seed_ids, seed_cat = _seed_matrix(matrix, vocab, seeds)
    n_cat = len(seeds)
    present = np.bincount(seed_cat, minlength=n_cat)
    sums = np.zeros((sims.shape[0], n_cat))
    for ci in range(n_cat):
        if present[ci]:
            sums[:, ci] = sims[:, seed_cat == ci].sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(present > 0, sums / np.maximum(present, 1), -np.inf)

    seed_category = {s: sl.category for sl in seeds for s in sl.seeds}
    positive = (sims >= threshold).any(axis=1)
    hit = positive | ((sims <= -threshold).any(axis=1) if include_antonyms else False)
    best_col = np.argmax(np.abs(sims), axis=1)
    categories = [sl.category for sl in seeds]
    out = []
    for tid in range(len(vocab)):
        term = vocab.tokens[tid]
        is_seed = term in seed_category
        if not (hit[tid] or is_seed):
            continue
        per_cat = {categories[c]: float(means[tid, c]) for c in range(n_cat) if present[c]}
        out.append(Candidate(
            term=term,
            per_category_mean_similarity=per_cat,
            max_abs_similarity=float(np.abs(sims[tid, best_col[tid]])),
            signed_best_similarity=float(sims[tid, best_col[tid]]),
            proposed_category=categories[int(np.argmax(means[tid]))],
            source="seed" if is_seed else "expanded",
            negative_polarity=bool(not is_seed and not positive[tid]),
        ))
    return out


HISTOGRAM_BINS = 40


def similarity_histogram(matrix: EmbeddingMatrix, vocab: Vocabulary, seeds: Sequence[SeedList]):
    """Counts of per-term seed similarity in 0.05-wide bins over [-1, 1].

    Every vocabulary term is counted.  Each row is ``(lo, hi, n_max, n_mean)``
    where ``n_max`` bins the signed cosine of the seed with the largest
    absolute cosine and ``n_mean`` bins the mean cosine over all seeds.
    """
    sims, _, _ = _seed_matrix(matrix, vocab, seeds, warn=False)
    best = sims[np.arange(sims.shape[0]), np.argmax(np.abs(sims), axis=1)] if sims.size else np.zeros(0)
    mean = sims.mean(axis=1) if sims.size else np.zeros(0)

    def counts(values):
        idx = np.floor((values + 1.0) * 20.0).astype(int).clip(0, HISTOGRAM_BINS - 1)
        return np.bincount(idx, minlength=HISTOGRAM_BINS)

    c_best, c_mean = counts(best), counts(mean)
    return [(round(-1.0 + 0.05 * i, 2), round(-0.95 + 0.05 * i, 2), int(c_best[i]), int(c_mean[i]))
            for i in range(HISTOGRAM_BINS)]


# ---------------------------------------------------------------------------
# review ledger


@dataclass(frozen=True)
class Decision:
    action: str
    target: str | None = None
    subcategory: str | None = None
    note: str = ""

    def __post_init__(self):
        if self.action not in ("accept", "reject", "reassign"):
            raise LexiconError(f"unknown ledger decision {self.action!r}")
        if self.action == "reassign" and not self.target:
            raise LexiconError("reassign needs a target category")


@dataclass(frozen=True)
class ReviewLedger:
    entries: dict[str, Decision] = field(default_factory=dict)

    @classmethod
    def from_csv(cls, text: str) -> "ReviewLedger":
        entries = {}
        for row in csv.DictReader(io.StringIO(text)):
            target = (row.get("target_category") or "").strip() or None
            sub = None
            if target and "/" in target:
                target, sub = (p.strip() for p in target.rsplit("/", 1))
            entries[row["term"].strip()] = Decision(row["decision"].strip().lower(), target, sub,
                                                   row.get("note") or "")
        return cls(entries)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LEDGER_COLUMNS)
        for term, d in self.entries.items():
            target = d.target or ""
            if d.subcategory:
                target = f"{target}/{d.subcategory}"
            w.writerow((term, d.action, target, d.note))
        return buf.getvalue()


@dataclass(frozen=True)
class LexiconEntry:
    term: str
    category: str
    subcategory: str | None = None
    source: str = "expanded"
    similarity: float | None = None


@dataclass(frozen=True)
class Lexicon:
    entries: tuple[LexiconEntry, ...]
    acronyms: dict[str, str] = field(default_factory=dict)
    categories: tuple[str, ...] = ()
    subcategories: dict[str, tuple[str, ...]] = field(default_factory=lambda: dict(SUBCATEGORIES))

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if not self.categories:
            object.__setattr__(self, "categories", tuple(dict.fromkeys(e.category for e in self.entries)))
        self.validate()

    def validate(self) -> None:
        seen = set()
        counts = Counter()
        for e in self.entries:
            if e.term in seen:
                raise LexiconError(f"duplicate term {e.term!r}")
            seen.add(e.term)
            if e.category not in self.categories:
                raise LexiconError(f"term {e.term!r} has undeclared category {e.category!r}")
            allowed = self.subcategories.get(e.category, ())
            if e.subcategory is not None and e.subcategory not in allowed:
                raise LexiconError(f"term {e.term!r}: unknown subcategory {e.subcategory!r} for {e.category!r}")
            if e.source not in SOURCES:
                raise LexiconError(f"term {e.term!r}: unknown source {e.source!r}")
            counts[e.category] += 1
        for c in self.categories:
            if not counts[c]:
                raise LexiconError(f"category empty: {c!r}")

    def __len__(self) -> int:
        return len(self.entries)

    def terms(self) -> list[str]:
        return [e.term for e in self.entries]

    def counts(self) -> dict[str, int]:
        c = Counter(e.category for e in self.entries)
        return {cat: c[cat] for cat in self.categories}

    def subcategory_counts(self) -> dict[tuple[str, str], int]:
        c = Counter((e.category, e.subcategory) for e in self.entries if e.subcategory)
        return dict(sorted(c.items()))

    def as_candidates(self) -> list[Candidate]:
        return [
            Candidate(e.term, {}, abs(e.similarity or 0.0), e.similarity or 0.0, e.category,
                      e.source, False, e.subcategory)
            for e in self.entries
        ]


def apply_review(candidates: Sequence[Candidate], ledger: ReviewLedger,
                 categories: Sequence[str] | None = None,
                 subcategories: dict[str, tuple[str, ...]] | None = None,
                 acronyms: dict[str, str] | None = None) -> tuple[Lexicon, list[str]]:
    """Turn candidates into a lexicon using the ledger's decisions.

    Candidates without a ledger row keep their proposed category.  Returns
    the lexicon and the ledger terms that matched no candidate.
    """
    if categories is None:
        categories = tuple(dict.fromkeys(c.proposed_category for c in candidates))
    categories = tuple(categories)
    subcategories = dict(SUBCATEGORIES if subcategories is None else subcategories)
    for term, d in ledger.entries.items():
        if d.action == "reassign" and d.target not in categories:
            raise LexiconError(f"ledger reassigns {term!r} to undeclared category {d.target!r}")
    entries = []
    for cand in candidates:
        d = ledger.entries.get(cand.term)
        category, sub = cand.proposed_category, cand.proposed_subcategory
        if d is not None:
            if d.action == "reject":
                continue
            if d.action == "reassign":
                if d.target != category:
                    sub = None
                category = d.target
            if d.subcategory:
                sub = d.subcategory
        declared = subcategories.get(category)
        if declared and sub is None:
            sub = declared[0]
        similarity = None if cand.source == "seed" else cand.signed_best_similarity
        entries.append(LexiconEntry(cand.term, category, sub, cand.source, similarity))
    known = {c.term for c in candidates}
    unknown = [t for t in ledger.entries if t not in known]
    if unknown:
        logger.warning("%d ledger term(s) match no candidate", len(unknown))
    lexicon = Lexicon(tuple(entries), dict(acronyms or {}), categories, subcategories)
    return lexicon, unknown


# ---------------------------------------------------------------------------
# CSV I/O


def _fmt_float(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def save_lexicon(lexicon: Lexicon) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LEXICON_COLUMNS)
    for e in lexicon.entries:
        w.writerow((e.term, e.category, e.subcategory or "", e.source, _fmt_float(e.similarity)))
    return buf.getvalue()


def load_lexicon(text: str, acronyms: dict[str, str] | None = None,
                 subcategories: dict[str, tuple[str, ...]] | None = None) -> Lexicon:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != LEXICON_COLUMNS:
        raise LexiconError(f"lexicon header must be {','.join(LEXICON_COLUMNS)}")
    entries = []
    for row in reader:
        sim = row["similarity"].strip()
        entries.append(LexiconEntry(
            row["term"], row["category"], row["subcategory"] or None, row["source"],
            float(sim) if sim else None,
        ))
    return Lexicon(tuple(entries), dict(acronyms or {}),
                   subcategories=dict(SUBCATEGORIES if subcategories is None else subcategories))


def save_acronyms(acronyms: dict[str, str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("acronym", "full_spelling"))
    w.writerows(acronyms.items())
    return buf.getvalue()


def load_acronyms(text: str) -> dict[str, str]:
    return {row["acronym"]: row["full_spelling"] for row in csv.DictReader(io.StringIO(text))}


def _data_text(name: str) -> str:
    return resources.files("hclex").joinpath("data", name).read_text(encoding="utf-8")


def load_published_lexicon() -> Lexicon:
    return load_lexicon(_data_text("hc_lexicon.csv"), load_acronyms(_data_text("acronyms.csv")))


def integrity_problems(lexicon: Lexicon) -> list[str]:
    """Differences between ``lexicon`` and the published per-category counts."""
    problems = []
    if len(lexicon) != PUBLISHED_TOTAL:
        problems.append(f"total {len(lexicon)} != {PUBLISHED_TOTAL}")
    counts = lexicon.counts()
    for cat, n in PUBLISHED_COUNTS.items():
        if counts.get(cat, 0) != n:
            problems.append(f"{cat}: {counts.get(cat, 0)} != {n}")
    subs = lexicon.subcategory_counts()
    for key, n in PUBLISHED_SUBCOUNTS.items():
        if subs.get(key, 0) != n:
            problems.append(f"{key[0]}/{key[1]}: {subs.get(key, 0)} != {n}")
    return problems


CANDIDATE_BASE_COLUMNS = ("term", "proposed_category", "source", "max_abs_similarity",
                          "signed_best_similarity", "negative_polarity")


def save_candidates(candidates: Sequence[Candidate], categories: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CANDIDATE_BASE_COLUMNS + tuple(f"mean:{c}" for c in categories))
    for c in candidates:
        w.writerow((c.term, c.proposed_category, c.source, repr(c.max_abs_similarity),
                    repr(c.signed_best_similarity), str(c.negative_polarity).lower())
                   + tuple(_fmt_float(c.per_category_mean_similarity.get(cat)) for cat in categories))
    return buf.getvalue()


def load_candidates(text: str) -> tuple[list[Candidate], list[str]]:
    reader = csv.DictReader(io.StringIO(text))
    cats = [f[len("mean:"):] for f in reader.fieldnames or () if f.startswith("mean:")]
    out = []
    for row in reader:
        means = {c: float(row[f"mean:{c}"]) for c in cats if row[f"mean:{c}"]}
        out.append(Candidate(
            row["term"], means, float(row["max_abs_similarity"]), float(row["signed_best_similarity"]),
            row["proposed_category"], row["source"], row["negative_polarity"] == "true",
        ))
    return out, cats
