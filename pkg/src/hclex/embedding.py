"""Skip-gram with negative sampling, trained from scratch.

The training kernel is compiled with numba.  Randomness inside the kernel
comes from the same 64-bit linear congruential generator the original
word2vec tool uses, seeded from ``TrainConfig.seed``, so single-worker
training is bit-reproducible.
"""
from __future__ import annotations

import io
import logging
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numba
import numpy as np

logger = logging.getLogger(__name__)

MAGIC = b"HCLXEMB\x00"
FORMAT_VERSION = 1
_LCG_MUL = np.uint64(25214903917)
_LCG_ADD = np.uint64(11)


class EmptyVocabularyError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    counts: tuple[int, ...]
    min_count: int = 1
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if len(self.tokens) != len(self.counts):
            raise ValueError("tokens and counts differ in length")
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.tokens)})
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token) -> bool:
        return token in self.index

    def id(self, token: str) -> int:
        try:
            return self.index[token]
        except KeyError:
            raise KeyError(f"token not in vocabulary: {token!r}") from None


def build_vocab(streams: Iterable[Sequence[str]], min_count: int = 5) -> Vocabulary:
    """Count tokens; ids go by descending frequency, ties lexicographic."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counter: Counter = Counter()
    for stream in streams:
        counter.update(stream)
    kept = sorted(((t, c) for t, c in counter.items() if c >= min_count), key=lambda tc: (-tc[1], tc[0]))
    if not kept:
        raise EmptyVocabularyError("empty vocabulary")
    return Vocabulary(tuple(t for t, _ in kept), tuple(c for _, c in kept), min_count)


@dataclass(frozen=True)
class TrainConfig:
    dimension: int = 100
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    min_learning_rate: float = 1e-4
    subsample: float = 1e-3
    seed: int = 1
    workers: int = 1
    table_size: int = 10_000_000

    def __post_init__(self):
        if self.dimension < 2:
            raise ValueError("dimension must be >= 2")
        for name in ("window", "negatives", "epochs", "workers", "table_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.learning_rate > 0 or not self.min_learning_rate > 0:
            raise ValueError("learning rates must be positive")
        if self.subsample < 0:
            raise ValueError("subsample must be >= 0")


@dataclass
class EmbeddingMatrix:
    input_vectors: np.ndarray
    output_vectors: np.ndarray | None = None
    epoch_loss: tuple[float, ...] = ()

    @property
    def dimension(self) -> int:
        return self.input_vectors.shape[1]

    def __len__(self) -> int:
        return self.input_vectors.shape[0]

    def vector(self, vocab: Vocabulary, token: str) -> np.ndarray:
        return self.input_vectors[vocab.id(token)]

    def unit_vectors(self) -> np.ndarray:
        vecs = self.input_vectors.astype(np.float64)
        norms = np.linalg.norm(vecs, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ValueError("zero vector in embedding matrix")
        return vecs / norms


# ---------------------------------------------------------------------------
# loss and gradient


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def sgns_loss(center, context, negatives) -> float:
    """Negative SGNS log-likelihood for one (center, context, negatives) triple."""
    center = np.asarray(center, dtype=np.float64)
    pos = _log_sigmoid(np.dot(np.asarray(context, dtype=np.float64), center))
    neg = _log_sigmoid(-np.asarray(negatives, dtype=np.float64) @ center).sum()
    return float(-(pos + neg))


def sgns_gradients(center, context, negatives):
    """Gradients of :func:`sgns_loss` w.r.t. the center, context and negative vectors."""
    center = np.asarray(center, dtype=np.float64)
    context = np.asarray(context, dtype=np.float64)
    negatives = np.asarray(negatives, dtype=np.float64)
    g_pos = 1.0 / (1.0 + np.exp(-np.dot(context, center))) - 1.0
    g_neg = 1.0 / (1.0 + np.exp(-(negatives @ center)))
    d_center = g_pos * context + g_neg @ negatives
    d_context = g_pos * center
    d_negatives = g_neg[:, None] * center[None, :]
    return d_center, d_context, d_negatives


# ---------------------------------------------------------------------------
# numba kernels


@numba.njit(cache=True, inline="always")
def _lcg(state):
    return state * _LCG_MUL + _LCG_ADD


@numba.njit(cache=True)
def _sigmoid(x):
    if x > 30.0:
        return 1.0
    if x < -30.0:
        return 0.0
    return 1.0 / (1.0 + np.exp(-x))


@numba.njit(cache=True)
def _sgns_update(w_in, w_out, center, context, negs, lr, work):
    """One SGD step on (center, context, negs); returns the loss before the step."""
    dim = w_in.shape[1]
    for d in range(dim):
        work[d] = 0.0
    loss = 0.0
    for j in range(negs.shape[0] + 1):
        if j == 0:
            target = context
            label = 1.0
        else:
            target = negs[j - 1]
            if target == context:
                continue
            label = 0.0
        f = 0.0
        for d in range(dim):
            f += w_in[center, d] * w_out[target, d]
        s = _sigmoid(f)
        if label == 1.0:
            loss -= np.log(max(s, 1e-12))
        else:
            loss -= np.log(max(1.0 - s, 1e-12))
        g = (label - s) * lr
        for d in range(dim):
            work[d] += g * w_out[target, d]
            w_out[target, d] += g * w_in[center, d]
    for d in range(dim):
        w_in[center, d] += work[d]
    return loss


@numba.njit(cache=True)
def _train_shard(w_in, w_out, corpus, starts, sent_lo, sent_hi, keep_prob, table,
                 window, negatives, epochs, lr0, lr_min, words_total, rng_state,
                 progress_offset, epoch_loss, epoch_pairs):
    dim = w_in.shape[1]
    work = np.zeros(dim, dtype=w_in.dtype)
    negs = np.zeros(negatives, dtype=np.int64)
    buf = np.empty(corpus.shape[0], dtype=np.int64)
    table_n = table.shape[0]
    seen = progress_offset
    total = words_total * epochs
    for epoch in range(epochs):
        for s in range(sent_lo, sent_hi):
            a = starts[s]
            b = starts[s + 1]
            n = 0
            for p in range(a, b):
                w = corpus[p]
                rng_state = _lcg(rng_state)
                r = (rng_state & np.uint64(0xFFFF)) / 65536.0
                if r < keep_prob[w]:
                    buf[n] = w
                    n += 1
            seen += b - a
            lr = lr0 * (1.0 - seen / (total + 1.0))
            if lr < lr_min:
                lr = lr_min
            for i in range(n):
                rng_state = _lcg(rng_state)
                reduced = np.int64(rng_state % np.uint64(window))
                span = window - reduced
                lo = i - span
                if lo < 0:
                    lo = 0
                hi = i + span + 1
                if hi > n:
                    hi = n
                center = buf[i]
                for j in range(lo, hi):
                    if j == i:
                        continue
                    for k in range(negatives):
                        rng_state = _lcg(rng_state)
                        negs[k] = table[np.int64((rng_state >> np.uint64(16)) % np.uint64(table_n))]
                    epoch_loss[epoch] += _sgns_update(w_in, w_out, center, buf[j], negs, lr, work)
                    epoch_pairs[epoch] += 1
    return rng_state


@numba.njit(cache=True, parallel=True)
def _train_parallel(w_in, w_out, corpus, starts, bounds, keep_prob, table, window,
                    negatives, epochs, lr0, lr_min, words_total, seeds, losses, pairs):
    # Hogwild-style: shards update the shared matrices without locks.
    for t in numba.prange(bounds.shape[0] - 1):
        _train_shard(w_in, w_out, corpus, starts, bounds[t], bounds[t + 1], keep_prob,
                     table, window, negatives, epochs, lr0, lr_min, words_total,
                     seeds[t], 0, losses[t], pairs[t])


def negative_table(counts: Sequence[int], size: int = 10_000_000, power: float = 0.75) -> np.ndarray:
    weights = np.asarray(counts, dtype=np.float64) ** power
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    points = (np.arange(size, dtype=np.float64) + 0.5) / size
    return np.searchsorted(cdf, points, side="right").astype(np.int32).clip(0, len(counts) - 1)


def keep_probabilities(counts: Sequence[int], threshold: float) -> np.ndarray:
    """Probability of keeping each token under frequent-word subsampling."""
    counts = np.asarray(counts, dtype=np.float64)
    if threshold <= 0:
        return np.ones_like(counts)
    freq = counts / counts.sum()
    return np.minimum(1.0, np.sqrt(threshold / freq))


def encode_streams(streams: Iterable[Sequence[str]], vocab: Vocabulary):
    """Map streams to a flat id array plus sentence offsets, dropping unknown tokens."""
    ids: list[int] = []
    starts = [0]
    index = vocab.index
    for stream in streams:
        ids.extend(index[t] for t in stream if t in index)
        starts.append(len(ids))
    return np.asarray(ids, dtype=np.int64), np.asarray(starts, dtype=np.int64)


def train(streams: Iterable[Sequence[str]], vocab: Vocabulary, config: TrainConfig = TrainConfig()) -> EmbeddingMatrix:
    if len(vocab) == 0:
        raise EmptyVocabularyError("empty vocabulary")
    corpus, starts = encode_streams(streams, vocab)
    rng = np.random.default_rng(config.seed)
    dim = config.dimension
    w_in = ((rng.random((len(vocab), dim)) - 0.5) / dim).astype(np.float32)
    w_out = np.zeros((len(vocab), dim), dtype=np.float32)
    table = negative_table(vocab.counts, config.table_size)
    keep = keep_probabilities(vocab.counts, config.subsample)
    n_sent = len(starts) - 1
    words_total = int(corpus.shape[0])
    if config.workers == 1:
        losses = np.zeros(config.epochs)
        pairs = np.zeros(config.epochs, dtype=np.int64)
        _train_shard(w_in, w_out, corpus, starts, 0, n_sent, keep, table, config.window,
                     config.negatives, config.epochs, config.learning_rate,
                     config.min_learning_rate, words_total,
                     np.uint64(config.seed & 0xFFFFFFFFFFFFFFFF), 0, losses, pairs)
    else:
        w = config.workers
        bounds = np.linspace(0, n_sent, w + 1).astype(np.int64)
        seeds = rng.integers(0, 2**63, size=w, dtype=np.uint64)
        loss_by = np.zeros((w, config.epochs))
        pairs_by = np.zeros((w, config.epochs), dtype=np.int64)
        # each shard decays its learning rate against its own share of the words
        _train_parallel(w_in, w_out, corpus, starts, bounds, keep, table, config.window,
                        config.negatives, config.epochs, config.learning_rate,
                        config.min_learning_rate, max(1, words_total // w), seeds,
                        loss_by, pairs_by)
        losses = loss_by.sum(axis=0)
        pairs = pairs_by.sum(axis=0)
    epoch_loss = tuple(float(l / p) if p else 0.0 for l, p in zip(losses, pairs))
    logger.info("trained %d x %d embeddings; epoch losses %s", len(vocab), dim, epoch_loss)
    return EmbeddingMatrix(w_in, w_out, epoch_loss)


# ---------------------------------------------------------------------------
# queries


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine is undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def similar_terms(matrix: EmbeddingMatrix, vocab: Vocabulary, query: str,
                  threshold: float | None = None, top_k: int | None = None) -> list[tuple[str, float]]:
    """Terms ranked by absolute cosine to ``query``; negative scores are kept.

    Exactly one of ``threshold`` (keep ``|cos| >= threshold``) or ``top_k``
    must be given.
    """
    if (threshold is None) == (top_k is None):
        raise ValueError("give exactly one of threshold or top_k")
    if query not in vocab:
        raise KeyError(f"query token not in vocabulary: {query!r}")
    qid = vocab.id(query)
    units = matrix.unit_vectors()
    scores = np.clip(units @ units[qid], -1.0, 1.0)
    order = np.lexsort((np.arange(len(scores)), -np.abs(scores)))
    order = order[order != qid]
    if threshold is not None:
        order = order[np.abs(scores[order]) >= threshold]
    else:
        order = order[:top_k]
    return [(vocab.tokens[i], float(scores[i])) for i in order]


# ---------------------------------------------------------------------------
# persistence


def save_embeddings(matrix: EmbeddingMatrix, vocab: Vocabulary, path, include_output: bool = True) -> None:
    has_out = include_output and matrix.output_vectors is not None
    v, d = matrix.input_vectors.shape
    if v != len(vocab):
        raise ValueError("matrix rows do not match vocabulary size")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQIII", FORMAT_VERSION, v, d, int(has_out), vocab.min_count))
        for tok, cnt in zip(vocab.tokens, vocab.counts):
            raw = tok.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<Q", cnt))
        fh.write(np.ascontiguousarray(matrix.input_vectors, dtype="<f4").tobytes())
        if has_out:
            fh.write(np.ascontiguousarray(matrix.output_vectors, dtype="<f4").tobytes())


def load_embeddings(path) -> tuple[EmbeddingMatrix, Vocabulary]:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(MAGIC):
        raise ValueError(f"{path}: not an embedding file")
    pos = len(MAGIC)
    version, v, d, has_out, min_count = struct.unpack_from("<IQIII", data, pos)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    pos += struct.calcsize("<IQIII")
    tokens, counts = [], []
    for _ in range(v):
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        tokens.append(data[pos:pos + n].decode("utf-8"))
        pos += n
        (c,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        counts.append(c)
    size = v * d * 4
    w_in = np.frombuffer(data, dtype="<f4", count=v * d, offset=pos).reshape(v, d).astype(np.float32)
    pos += size
    w_out = None
    if has_out:
        w_out = np.frombuffer(data, dtype="<f4", count=v * d, offset=pos).reshape(v, d).astype(np.float32)
    return EmbeddingMatrix(w_in, w_out), Vocabulary(tuple(tokens), tuple(counts), min_count)


def export_text(matrix: EmbeddingMatrix, vocab: Vocabulary) -> str:
    buf = io.StringIO()
    for tok, row in zip(vocab.tokens, matrix.input_vectors):
        buf.write(tok + " " + " ".join(repr(float(x)) for x in row) + "\n")
    return buf.getvalue()
