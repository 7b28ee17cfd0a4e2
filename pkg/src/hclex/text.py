"""Tokenization, light normalization and collocation phrase merging.

Everything here is a pure function of its inputs, so token streams produced
for embedding training and for scoring are reproducible run to run.
"""
from __future__ import annotations

import io
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

# A token is a run of letters/digits, optionally joined by internal hyphens,
# underscores or apostrophes, with an optional trailing "+" ("lgbtq+").
_TOKEN_RE = re.compile(r"[^\W_]+(?:[-_'][^\W_]+)*\+*")
_APOSTROPHES = str.maketrans({"’": "'", "‘": "'", "ʼ": "'"})

# Words ending in "s" that are not plurals. Kept short on purpose; the
# suffix rules below already protect -ss, -us and -is endings.
NORMALIZE_EXCEPTIONS = frozenset(
    """
    afterwards always analytics backwards besides business canvas does
    diabetes economics forwards goes hers herpes lens news ours overseas
    perhaps physics politics series sometimes species statistics texas
    theirs whereas yours
    """.split()
)


def tokenize(text: str) -> list[str]:
    """Split raw text into lowercase tokens.

    >>> tokenize("Work-life balance, DEI!")
    ['work-life', 'balance', 'dei']
    """
    return _TOKEN_RE.findall(text.translate(_APOSTROPHES).lower())


def normalize_token(token: str) -> str:
    """Reduce plural and possessive forms with a fixed suffix table.

    Idempotent: ``normalize_token(normalize_token(t)) == normalize_token(t)``.
    """
    while token.endswith("'s") and len(token) > 2:
        token = token[:-2]
    if token in NORMALIZE_EXCEPTIONS or len(token) < 4 or not token.endswith("s"):
        return token
    if token.endswith(("sses", "ches", "shes", "xes", "zzes")) and len(token) > 4:
        return token[:-2]
    if token.endswith("ies") and len(token) > 4:
        return token[:-3] + "y"
    if token[-2] in "sui'":
        return token
    return token[:-1]


def normalized_tokens(text: str) -> list[str]:
    return [normalize_token(t) for t in tokenize(text)]


@dataclass(frozen=True)
class PhraseTable:
    """Scored adjacent-token collocations, keyed by ``(token_a, token_b)``."""

    entries: dict[tuple[str, str], float] = field(default_factory=dict)
    threshold: float = 10.0

    def __post_init__(self):
        low = [pair for pair, s in self.entries.items() if s < self.threshold]
        if low:
            raise ValueError(f"phrase score below threshold for {low[0]}")

    def __contains__(self, pair) -> bool:
        return pair in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def sorted_entries(self) -> list[tuple[str, str, float]]:
        return sorted(
            ((a, b, s) for (a, b), s in self.entries.items()),
            key=lambda e: (-e[2], e[0], e[1]),
        )

    def to_tsv(self) -> str:
        buf = io.StringIO()
        for a, b, s in self.sorted_entries():
            buf.write(f"{a}\t{b}\t{s!r}\n")
        return buf.getvalue()

    @classmethod
    def from_tsv(cls, text: str, threshold: float | None = None) -> "PhraseTable":
        entries = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected 3 tab-separated fields")
            entries[(parts[0], parts[1])] = float(parts[2])
        if threshold is None:
            threshold = min(entries.values(), default=0.0)
        return cls(entries, threshold)


def phrase_score(count_ab: int, count_a: int, count_b: int, min_count: int, vocab_size: int) -> float:
    return (count_ab - min_count) * vocab_size / (count_a * count_b)


def _learn_one_pass(streams: Sequence[Sequence[str]], min_count: int, threshold: float):
    unigrams: Counter = Counter()
    bigrams: Counter = Counter()
    for stream in streams:
        unigrams.update(stream)
        bigrams.update(zip(stream, stream[1:]))
    n = len(unigrams)
    table = {}
    for (a, b), c in bigrams.items():
        s = phrase_score(c, unigrams[a], unigrams[b], min_count, n)
        if s > threshold:
            table[(a, b)] = s
    return table


def learn_phrases(
    streams: Iterable[Sequence[str]],
    min_count: int = 5,
    threshold: float = 10.0,
    passes: int = 2,
) -> PhraseTable:
    """Learn collocations over ``passes`` rounds of detect-then-merge.

    Round ``k`` scores bigrams of the stream produced by merging with the
    table from rounds ``< k``, which is how trigrams such as
    ``equal_employment_opportunity`` arise on the second round.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    if passes < 1:
        raise ValueError("passes must be >= 1")
    current = [list(s) for s in streams]
    entries: dict[tuple[str, str], float] = {}
    for _ in range(passes):
        found = _learn_one_pass(current, min_count, threshold)
        if not found:
            break
        entries.update(found)
        round_table = PhraseTable(found, threshold)
        current = [merge_phrases(s, round_table) for s in current]
    return PhraseTable(entries, threshold)


def merge_phrases(stream: Sequence[str], table: PhraseTable) -> list[str]:
    """Greedy left-to-right merge of adjacent pairs present in ``table``."""
    if not table.entries:
        return list(stream)
    out = []
    i, n = 0, len(stream)
    entries = table.entries
    while i < n:
        if i + 1 < n and (stream[i], stream[i + 1]) in entries:
            out.append(stream[i] + "_" + stream[i + 1])
            i += 2
        else:
            out.append(stream[i])
            i += 1
    return out


def apply_phrases(stream: Sequence[str], table: PhraseTable, max_rounds: int = 8) -> list[str]:
    """Repeat :func:`merge_phrases` until the stream stops shrinking."""
    out = list(stream)
    for _ in range(max_rounds):
        merged = merge_phrases(out, table)
        if len(merged) == len(out):
            break
        out = merged
    return out
