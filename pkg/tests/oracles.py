"""Slow, obviously-correct reference implementations used by the tests."""
import math

import numpy as np


def py_cosine(a, b):
    dot = sum(float(x) * float(y) for x, y in zip(a, b))
    na = math.sqrt(sum(float(x) ** 2 for x in a))
    nb = math.sqrt(sum(float(y) ** 2 for y in b))
    return max(-1.0, min(1.0, dot / (na * nb)))


def expand_oracle(vectors, tokens, seeds, threshold, antonyms):
    """Double loop over (term, seed).  Returns term -> (category, source, negative, max_abs)."""
    index = {t: i for i, t in enumerate(tokens)}
    seed_rows = [(sl.category, s) for sl in seeds for s in sl.seeds if s in index]
    cats = [sl.category for sl in seeds]
    seed_terms = {s for sl in seeds for s in sl.seeds}
    out = {}
    for t in tokens:
        sims = [(c, py_cosine(vectors[index[t]], vectors[index[s]])) for c, s in seed_rows]
        pos = any(v >= threshold for _, v in sims)
        neg = antonyms and any(v <= -threshold for _, v in sims)
        if not (pos or neg or t in seed_terms):
            continue
        best_cat, best_mean = None, -math.inf
        for c in cats:
            vals = [v for cc, v in sims if cc == c]
            if vals and sum(vals) / len(vals) > best_mean:
                best_cat, best_mean = c, sum(vals) / len(vals)
        max_abs = max(abs(v) for _, v in sims)
        source = "seed" if t in seed_terms else "expanded"
        out[t] = (best_cat, source, source == "expanded" and not pos, max_abs)
    return out


def leftmost_longest(tokens, patterns):
    """All non-overlapping matches, scanning left to right and taking the longest
    pattern starting at each position.  ``patterns`` maps tuple -> label."""
    lengths = sorted({len(p) for p in patterns}, reverse=True)
    i, found = 0, []
    while i < len(tokens):
        for n in lengths:
            key = tuple(tokens[i:i + n])
            if len(key) == n and key in patterns:
                found.append((i, i + n, patterns[key]))
                i += n
                break
        else:
            i += 1
    return found


def silhouette_oracle(points, labels):
    pts = [np.asarray(p, dtype=float) for p in points]
    n = len(pts)

    def dist(i, j):
        return math.sqrt(sum((a - b) ** 2 for a, b in zip(pts[i], pts[j])))

    scores = []
    for i in range(n):
        same = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not same:
            scores.append(0.0)
            continue
        a = sum(dist(i, j) for j in same) / len(same)
        b = min(
            sum(dist(i, j) for j in range(n) if labels[j] == other) / sum(1 for l in labels if l == other)
            for other in set(labels) if other != labels[i]
        )
        scores.append(0.0 if max(a, b) == 0 else (b - a) / max(a, b))
    return sum(scores) / n
