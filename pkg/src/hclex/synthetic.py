"""Deterministic synthetic corpora for tests, benchmarks and the mini fixture."""
from __future__ import annotations

import datetime as dt
from typing import Sequence

import numpy as np

from .corpus import Corpus, Document, DocumentHeader
from .lexicon import Lexicon, load_published_lexicon

FILLER = """
the our we and to of in a for with is are as that this by on at be it an
all its have has from which their these more each year also other such
company business operations across team program programs including
continue continues provide provides within over through during while
approximately total number number of based new key focus focused ensure
""".split()

# per-category context words, so that terms of one category share contexts
CONTEXT = {
    0: "foster welcoming belong community voices respect everyone inclusive culture".split(),
    1: "protect site hazards protocols prevent monitor procedures facility measures".split(),
    2: "grow learn leaders develop careers skills engage teams feedback".split(),
    3: "offer competitive package plans eligible coverage rewards financial savings".split(),
    4: "employ people located worldwide countries located population roles workforce".split(),
}

TEMPLATES = (
    "{c0} {t0} {c1} {f0} {t1} {c2} {f1}",
    "{f0} {c0} {t0} {f1} {c1} {t1} {c2} {t2}",
    "{f0} {f1} {c0} {t0} {c1} {c2} {t1}",
    "{c0} {f0} {t0} {c1} {f1} {c2} {t1} {c3}",
)

START = dt.date(2020, 11, 9)
SPAN_DAYS = 365


def _category_terms(lexicon: Lexicon, seeds_only: bool = False) -> list[list[str]]:
    by_cat: dict[str, list[str]] = {c: [] for c in lexicon.categories}
    for e in lexicon.entries:
        if e.source == "seed" or not seeds_only:
            by_cat[e.category].append(e.term.replace("_", " "))
    return [by_cat[c] for c in lexicon.categories]


def make_sentence(rng: np.random.Generator, terms: Sequence[str], context: Sequence[str]) -> str:
    template = TEMPLATES[rng.integers(len(TEMPLATES))]
    fill = {f"t{i}": terms[rng.integers(len(terms))] for i in range(3)}
    fill.update({f"c{i}": context[rng.integers(len(context))] for i in range(4)})
    fill.update({f"f{i}": FILLER[rng.integers(len(FILLER))] for i in range(2)})
    text = template.format(**fill)
    return text[0].upper() + text[1:] + "."


def hc_corpus(n_docs: int = 50, seed: int = 0, sentences: tuple[int, int] = (30, 60),
              lexicon: Lexicon | None = None, terms_per_category: int = 60) -> Corpus:
    """Documents mixing category-themed sentences; filing dates span one year.

    Each category contributes its seed terms plus a fixed, seeded subset of
    its other lexicon terms, so small corpora still repeat terms often enough
    to train embeddings.
    """
    rng = np.random.default_rng(seed)
    lexicon = lexicon or load_published_lexicon()
    pools = []
    for terms, seeds in zip(_category_terms(lexicon), _category_terms(lexicon, seeds_only=True)):
        others = [t for t in terms if t not in set(seeds)]
        idx = rng.permutation(len(others))[:max(terms_per_category - len(seeds), 0)]
        pools.append(seeds + [others[i] for i in sorted(idx)])
    weights = np.array([0.2, 0.2, 0.25, 0.2, 0.15])[: len(pools)]
    weights /= weights.sum()
    docs = []
    for d in range(n_docs):
        n_sent = int(rng.integers(sentences[0], sentences[1] + 1))
        cats = rng.choice(len(pools), size=n_sent, p=weights)
        body = " ".join(make_sentence(rng, pools[c], CONTEXT[c % len(CONTEXT)]) for c in cats)
        filed = START + dt.timedelta(days=int(rng.integers(SPAN_DAYS)))
        fiscal = dt.date(filed.year - (1 if filed.month < 4 else 0), 12, 31) if filed.month < 4 \
            else dt.date(filed.year, 6, 30) if filed.month < 9 else dt.date(filed.year, 9, 30)
        header = DocumentHeader(str(1000000 + d * 7919), f"Synthetic Holdings {d:03d} Inc.",
                                filed.isoformat(), fiscal.isoformat())
        docs.append(Document(header, body))
    return Corpus(tuple(docs))


def bulk_texts(total_bytes: int, seed: int = 0, doc_bytes: int = 20_000,
               lexicon: Lexicon | None = None) -> list[str]:
    """About ``total_bytes`` of HC-style text split into documents (for benchmarks)."""
    rng = np.random.default_rng(seed)
    lexicon = lexicon or load_published_lexicon()
    all_terms = _category_terms(lexicon)
    pool = []
    for _ in range(4000):
        c = int(rng.integers(len(all_terms)))
        pool.append(make_sentence(rng, all_terms[c], CONTEXT[c % len(CONTEXT)]))
        # plain sentences with no lexicon terms, as in real filings
        pool.append(" ".join(FILLER[i] for i in rng.integers(len(FILLER), size=12)).capitalize() + ".")
    avg = sum(len(s) + 1 for s in pool) / len(pool)
    per_doc = max(1, int(doc_bytes / avg))
    docs = []
    size = 0
    while size < total_bytes:
        picks = rng.integers(len(pool), size=per_doc)
        text = " ".join(pool[i] for i in picks)
        docs.append(text)
        size += len(text)
    return docs


def interchangeable_corpus(n_sentences: int = 2000, seed: int = 0, groups: int = 8,
                           words_per_group: int = 10, length: int = 8,
                           pair: tuple[str, str] = ("xtoken", "ytoken")) -> list[list[str]]:
    """Token streams in which the two ``pair`` tokens occur in identical contexts.

    Every sentence draws its words from one topic group; sentences of group 0
    additionally carry either pair token (coin flip) at the same position.
    """
    rng = np.random.default_rng(seed)
    vocab = [[f"g{g}w{i}" for i in range(words_per_group)] for g in range(groups)]
    out = []
    for _ in range(n_sentences):
        g = int(rng.integers(groups))
        words = [vocab[g][i] for i in rng.integers(words_per_group, size=length)]
        if g == 0:
            words.insert(length // 2, pair[int(rng.integers(2))])
        out.append(words)
    return out
