"""Labeled sentence datasets and evaluation of external classifier scores.

No model is trained here. A dataset is exported, some external classifier
writes ``id,probability`` rows for it, and those rows are evaluated.
"""
from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Document


class DatasetError(ValueError):
    pass


ABBREVIATIONS = frozenset(
    "Inc. No. Nos. Co. Corp. Ltd. LLC. Mr. Mrs. Ms. Dr. St. Jr. Sr. vs. e.g. i.e. etc. "
    "approx. Jan. Feb. Mar. Apr. Jun. Jul. Aug. Sep. Sept. Oct. Nov. Dec.".split()
)
_DOTTED = re.compile(r"^(?:[A-Za-z]\.){1,}$")   # U.S., U.K., single initials
_BOUNDARY = re.compile(r"[.!?][\"')\]]* ")
_WS = re.compile(r"\s+")


def split_sentences(text: "str | Document") -> list[str]:
    """Split on ``.``, ``!`` or ``?`` followed by a space, unless the period ends
    a known abbreviation or a dotted initialism.

    Whitespace is collapsed first, so ``" ".join(result)`` equals the collapsed
    input. Dotted initialisms never end a sentence, which merges the rare
    "... in the U.S. We ..." case.
    """
    if isinstance(text, Document):
        text = text.text
    flat = _WS.sub(" ", text).strip()
    if not flat:
        return []
    out = []
    start = 0
    for m in _BOUNDARY.finditer(flat):
        head = flat[start:m.end() - 1]
        last = head.rsplit(" ", 1)[-1].rstrip("\"')]")
        if last.endswith(".") and (last in ABBREVIATIONS or _DOTTED.match(last)):
            continue
        out.append(head)
        start = m.end()
    out.append(flat[start:])
    return [s for s in out if s]


@dataclass(frozen=True)
class LabeledSentence:
    id: str
    text: str
    label: str           # "hc" or "non_hc"
    split: str           # "train" or "test"
    source_doc: str

    def __post_init__(self):
        if not self.text:
            raise DatasetError(f"{self.id}: empty sentence")
        if self.label not in ("hc", "non_hc"):
            raise DatasetError(f"{self.id}: bad label {self.label!r}")
        if self.split not in ("train", "test"):
            raise DatasetError(f"{self.id}: bad split {self.split!r}")


def _round_half_up(x: Fraction) -> int:
    return int((x + Fraction(1, 2)).__floor__())


def _doc_pairs(docs) -> list[tuple[str, str]]:
    pairs = []
    for d in docs:
        if isinstance(d, Document):
            pairs.append((d.doc_id, d.text))
        elif isinstance(d, str):
            pairs.append(("", d))
        else:
            pairs.append((str(d[0]), d[1]))
    return pairs


def build_dataset(hc_docs: Iterable, non_hc_pool: Sequence, neg_ratio: int = 2,
                  train_frac: float = 0.8, seed: int = 0) -> list[LabeledSentence]:
    """Sentences of ``hc_docs`` labeled ``hc`` plus ``neg_ratio`` times as many
    ``non_hc`` sentences drawn without replacement from ``non_hc_pool``.

    Pool items are sentence strings or ``(source_doc, sentence)`` pairs. Each
    class is split separately, ``round(train_frac * n)`` (halves up) to train.
    """
    if neg_ratio < 0:
        raise DatasetError("neg_ratio must be non-negative")
    if not 0.0 <= train_frac <= 1.0:
        raise DatasetError("train_frac must lie in [0, 1]")
    positives = [(src, s) for src, text in _doc_pairs(hc_docs) for s in split_sentences(text)]
    pool = [("", p) if isinstance(p, str) else (str(p[0]), p[1]) for p in non_hc_pool]
    need = neg_ratio * len(positives)
    if len(pool) < need:
        raise DatasetError(f"non-HC pool has {len(pool)} sentences, need {need}")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(pool), size=need, replace=False) if need else np.empty(0, int)
    negatives = [pool[i] for i in picks]
    empty = [s for _, s in negatives if not s.strip()]
    if empty:
        raise DatasetError("non-HC pool contains empty sentences")
    frac = Fraction(str(train_frac))
    out: list[LabeledSentence] = []
    for label, items in (("hc", positives), ("non_hc", negatives)):
        n_train = _round_half_up(frac * len(items))
        train_idx = set(rng.permutation(len(items))[:n_train].tolist())
        for i, (src, s) in enumerate(items):
            out.append(LabeledSentence(f"{label}-{i:06d}", s, label,
                                       "train" if i in train_idx else "test", src))
    return out


def dataset_csv(rows: Sequence[LabeledSentence]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["id", "split", "label", "source_doc", "text"])
    for r in rows:
        w.writerow([r.id, r.split, r.label, r.source_doc, r.text])
    return buf.getvalue().encode("utf-8")


def read_dataset_csv(data: bytes) -> list[LabeledSentence]:
    reader = csv.reader(io.StringIO(data.decode("utf-8"), newline=""))
    header = next(reader, None)
    if header != ["id", "split", "label", "source_doc", "text"]:
        raise DatasetError(f"unexpected dataset header {header}")
    return [LabeledSentence(i, text, label, split, src) for i, split, label, src, text in reader]


def read_scores(data: bytes) -> dict[str, float]:
    reader = csv.reader(io.StringIO(data.decode("utf-8"), newline=""))
    header = next(reader, None)
    if header != ["id", "probability"]:
        raise DatasetError(f"unexpected scores header {header}")
    out = {}
    for lineno, row in enumerate(reader, 2):
        if len(row) != 2:
            raise DatasetError(f"scores line {lineno}: expected 2 fields")
        try:
            p = float(row[1])
        except ValueError:
            raise DatasetError(f"scores line {lineno}: bad probability {row[1]!r}") from None
        if not 0.0 <= p <= 1.0:
            raise DatasetError(f"scores line {lineno}: probability {p} outside [0, 1]")
        if row[0] in out:
            raise DatasetError(f"scores line {lineno}: duplicate id {row[0]!r}")
        out[row[0]] = p
    return out


@dataclass(frozen=True)
class EvalResult:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    precision_undefined: bool = False
    recall_undefined: bool = False
    f1_undefined: bool = False

    @classmethod
    def from_counts(cls, tp: int, fp: int, tn: int, fn: int) -> "EvalResult":
        total = tp + fp + tn + fn
        if total == 0:
            raise DatasetError("no examples to evaluate")
        p_und, r_und = tp + fp == 0, tp + fn == 0
        p = 0.0 if p_und else tp / (tp + fp)
        r = 0.0 if r_und else tp / (tp + fn)
        f_und = p + r == 0
        f = 0.0 if f_und else 2 * p * r / (p + r)
        return cls(tp, fp, tn, fn, (tp + tn) / total, p, r, f, p_und, r_und, f_und)


def _binary(values, name) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype.kind in "US":
        arr = np.isin(arr, ("hc", "1", "true", "True"))
    arr = arr.astype(np.int64)
    if not np.isin(arr, (0, 1)).all():
        raise DatasetError(f"{name} must be binary")
    return arr.astype(bool)


def evaluate(labels: Sequence, predictions: Sequence) -> EvalResult:
    y = _binary(labels, "labels")
    yhat = _binary(predictions, "predictions")
    if y.shape != yhat.shape:
        raise DatasetError(f"length mismatch: {y.size} labels, {yhat.size} predictions")
    if y.size == 0:
        raise DatasetError("no examples to evaluate")
    tp = int(np.sum(y & yhat))
    fp = int(np.sum(~y & yhat))
    fn = int(np.sum(y & ~yhat))
    tn = int(y.size - tp - fp - fn)
    return EvalResult.from_counts(tp, fp, tn, fn)


def select_threshold(labels: Sequence, probabilities: Sequence[float]) -> tuple[float, EvalResult]:
    """Threshold maximizing F1 when predicting ``p >= threshold``.

    Candidates are the distinct probabilities plus 0 and 1. F1 is compared
    exactly as 2TP / (2TP + FP + FN); ties go to the higher threshold.
    """
    y = _binary(labels, "labels")
    p = np.asarray(probabilities, dtype=np.float64)
    if y.shape != p.shape:
        raise DatasetError(f"length mismatch: {y.size} labels, {p.size} probabilities")
    if not np.all((p >= 0.0) & (p <= 1.0)):
        raise DatasetError("probabilities must lie in [0, 1]")
    if not y.any():
        raise DatasetError("no positive labels; F1 is undefined at every threshold")
    pos = np.sort(p[y])
    neg = np.sort(p[~y])
    cands = np.unique(np.concatenate([p, [0.0, 1.0]]))
    tps = pos.size - np.searchsorted(pos, cands, side="left")
    fps = neg.size - np.searchsorted(neg, cands, side="left")
    best = None
    best_f1 = Fraction(-1)
    for t, tp, fp in zip(cands.tolist(), tps.tolist(), fps.tolist()):
        fn = pos.size - tp
        f1 = Fraction(2 * tp, 2 * tp + fp + fn)
        if f1 >= best_f1:          # ascending order, so >= keeps the higher threshold
            best, best_f1, best_counts = t, f1, (tp, fp, neg.size - fp, fn)
    return best, EvalResult.from_counts(*best_counts)


def eval_report(threshold: float | None, result: EvalResult, n_missing: int = 0) -> str:
    body = {"threshold": threshold, **asdict(result), "missing_scores": n_missing}
    return json.dumps(body, indent=2, sort_keys=True) + "\n"


def evaluate_scores(rows: Sequence[LabeledSentence], scores: Mapping[str, float],
                    split: str = "test", threshold: float | None = None) -> tuple[float, EvalResult]:
    """Join scores onto the ``split`` rows; pick the F1 threshold unless one is given."""
    subset = [r for r in rows if r.split == split]
    missing = [r.id for r in subset if r.id not in scores]
    if missing:
        raise DatasetError(f"{len(missing)} {split} rows have no score (first: {missing[0]})")
    if not subset:
        raise DatasetError(f"no rows in split {split!r}")
    labels = [r.label == "hc" for r in subset]
    probs = [scores[r.id] for r in subset]
    if threshold is None:
        return select_threshold(labels, probs)
    return threshold, evaluate(labels, [q >= threshold for q in probs])
