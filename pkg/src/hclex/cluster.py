"""PCA projection, K-Means and silhouette analysis for keyword vectors."""
from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numba
import numpy as np


@dataclass(frozen=True)
class PointSet:
    labels: tuple[str, ...]
    points: np.ndarray
    category_of: dict[str, str] | None = None

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        pts = np.asarray(self.points, dtype=np.float64)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 2 or pts.shape[0] != len(self.labels):
            raise ValueError("points must be an N x D matrix matching the labels")
        if pts.shape[0] < 2:
            raise ValueError("need at least 2 points")
        if np.isnan(pts).any():
            raise ValueError("points contain NaN")

    def normalized(self) -> "PointSet":
        norms = np.linalg.norm(self.points, axis=1, keepdims=True)
        return PointSet(self.labels, self.points / np.where(norms == 0, 1.0, norms), self.category_of)


# ---------------------------------------------------------------------------
# PCA


@numba.njit(cache=True)
def _jacobi_eigh(a, tol, max_sweeps):
    n = a.shape[0]
    a = a.copy()
    v = np.eye(n)
    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale += a[i, j] * a[i, j]
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += a[p, q] * a[p, q]
        if off <= tol * tol * scale or off == 0.0:
            break
        for p in range(n):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    w = np.empty(n)
    for i in range(n):
        w[i] = a[i, i]
    return w, v


def jacobi_eigh(matrix: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100):
    """Eigenvalues (descending) and column eigenvectors of a symmetric matrix."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("expected a square matrix")
    w, v = _jacobi_eigh(np.ascontiguousarray(matrix), tol, max_sweeps)
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


@dataclass(frozen=True)
class Projection:
    coordinates: np.ndarray
    explained_variance_ratio: np.ndarray
    components: np.ndarray
    mean: np.ndarray


def pca_project(points, components: int = 3) -> Projection:
    """Project mean-centered points onto the top principal axes.

    Each axis is signed so that its largest-magnitude loading is positive.
    """
    x = np.asarray(points, dtype=np.float64)
    n, d = x.shape
    if components < 1 or components > min(n - 1, d):
        raise ValueError(f"components must be in [1, {min(n - 1, d)}], got {components}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (n - 1)
    evals, evecs = jacobi_eigh(cov)
    evals = np.clip(evals, 0.0, None)
    total = evals.sum()
    ratios = evals / total if total > 0 else np.zeros_like(evals)
    axes = evecs[:, :components].copy()
    for j in range(components):
        if axes[np.argmax(np.abs(axes[:, j])), j] < 0:
            axes[:, j] = -axes[:, j]
    return Projection(xc @ axes, ratios[:components], axes, mean)


# ---------------------------------------------------------------------------
# K-Means


@dataclass
class ClusterReport:
    k: int
    labels: tuple[str, ...]
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    silhouette: float | None = None
    inertia_history: list[float] = field(default_factory=list, repr=False)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)

    def assignment_map(self) -> dict[str, int]:
        return dict(zip(self.labels, (int(a) for a in self.assignments)))


def _sq_dists(x, c):
    d = (x * x).sum(axis=1)[:, None] - 2.0 * x @ c.T + (c * c).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(x, k, rng):
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    closest = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        centers.append(x[idx])
        closest = np.minimum(closest, ((x - x[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _lloyd(x, centers, max_iters):
    history = []
    labels = None
    k = centers.shape[0]
    for _ in range(max_iters):
        d = _sq_dists(x, centers)
        new = np.argmin(d, axis=1)
        history.append(float(d[np.arange(len(x)), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its center
                far = int(np.argmax(d[np.arange(len(x)), labels]))
                centers[j] = x[far]
    d = _sq_dists(x, centers)
    labels = np.argmin(d, axis=1)
    inertia = float(((x - centers[labels]) ** 2).sum())
    return labels, centers, inertia, history


def kmeans(points, k: int, seed: int = 0, max_iters: int = 300, restarts: int = 10,
           labels: Sequence[str] | None = None) -> ClusterReport:
    """K-Means with k-means++ seeding; the lowest-inertia restart wins.

    Restart ``i`` draws from ``default_rng([seed, i])`` so fewer restarts
    always see a prefix of the same random streams.
    """
    x = np.asarray(points, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    best = None
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        result = _lloyd(x, _kmeans_pp(x, k, rng), max_iters)
        if best is None or result[2] < best[2]:
            best = result
    assign, centers, inertia, history = best
    names = tuple(labels) if labels is not None else tuple(str(i) for i in range(n))
    return ClusterReport(k, names, assign.astype(np.int64), centers, inertia, None, history)


# ---------------------------------------------------------------------------
# silhouette


def pairwise_distances(x, block: int = 64) -> np.ndarray:
    """Euclidean distances from explicit differences (no Gram-matrix cancellation)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    out = np.empty((n, n))
    for i in range(0, n, block):
        diff = x[i:i + block, None, :] - x[None, :, :]
        out[i:i + block] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def silhouette_samples(points, assignments, distances=None) -> np.ndarray:
    labels = np.asarray(assignments)
    uniq, inv = np.unique(labels, return_inverse=True)
    if len(uniq) < 2:
        raise ValueError("silhouette needs at least 2 clusters")
    dist = pairwise_distances(points) if distances is None else distances
    onehot = np.zeros((len(labels), len(uniq)))
    onehot[np.arange(len(labels)), inv] = 1.0
    sizes = onehot.sum(axis=0)
    sums = dist @ onehot
    own = sizes[inv]
    a = np.where(own > 1, sums[np.arange(len(labels)), inv] / np.maximum(own - 1, 1), 0.0)
    other = sums / sizes
    other[np.arange(len(labels)), inv] = np.inf
    b = other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return np.where(own > 1, s, 0.0)


def silhouette(points, assignments, distances=None) -> float:
    """Mean silhouette; points in singleton clusters score 0."""
    return float(silhouette_samples(points, assignments, distances).mean())


def silhouette_sweep(points, k_min: int = 2, k_max: int = 25, seed: int = 0,
                     restarts: int = 10) -> list[tuple[int, float, float]]:
    """``(k, silhouette, inertia)`` for each k in ``[k_min, k_max]``."""
    x = np.asarray(points, dtype=np.float64)
    if k_min < 2:
        raise ValueError("k_min must be >= 2")
    if k_max > x.shape[0]:
        raise ValueError(f"k_max={k_max} exceeds the number of points ({x.shape[0]})")
    dist = pairwise_distances(x)
    rows = []
    for k in range(k_min, k_max + 1):
        rep = kmeans(x, k, seed=seed, restarts=restarts)
        n_used = len(np.unique(rep.assignments))
        score = silhouette(x, rep.assignments, dist) if n_used > 1 else 0.0
        rows.append((k, score, rep.inertia))
    return rows


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class ClusterComposition:
    cluster: int
    size: int
    share: float
    top_category: str | None
    top_category_share: float


def composition_report(report: ClusterReport, category_of: Mapping[str, str]):
    """Per-cluster size and dominant category, plus the largest cluster's share."""
    missing = [t for t in report.labels if t not in category_of]
    if missing:
        raise ValueError(f"no category for {len(missing)} term(s), e.g. {missing[0]!r}")
    n = len(report.labels)
    rows = []
    for j in range(report.k):
        members = [t for t, a in zip(report.labels, report.assignments) if a == j]
        counts = Counter(category_of[t] for t in members)
        if counts:
            top, top_n = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))
            rows.append(ClusterComposition(j, len(members), len(members) / n, top, top_n / len(members)))
        else:
            rows.append(ClusterComposition(j, 0, 0.0, None, 0.0))
    max_share = max(r.share for r in rows)
    return rows, max_share


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("k", "silhouette", "inertia"))
    for k, s, inertia in rows:
        w.writerow((k, f"{s:.6f}", f"{inertia:.6f}"))
    return buf.getvalue()


def composition_csv(rows: Sequence[ClusterComposition]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("cluster", "size", "share", "top_category", "top_category_share"))
    for r in rows:
        w.writerow((r.cluster, r.size, f"{r.share:.4f}", r.top_category or "", f"{r.top_category_share:.4f}"))
    return buf.getvalue()


def export_3d(labels: Sequence[str], projected, categories: Mapping[str, str] | Sequence[str]) -> str:
    coords = np.asarray(projected, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] < 3:
        raise ValueError("projection needs at least 3 columns")
    if isinstance(categories, Mapping):
        categories = [categories.get(t, "") for t in labels]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("term", "x", "y", "z", "category"))
    for term, row, cat in zip(labels, coords, categories):
        w.writerow((term, repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), cat))
    return buf.getvalue()


def read_3d(text: str):
    rows = list(csv.DictReader(io.StringIO(text)))
    labels = [r["term"] for r in rows]
    coords = np.array([[float(r["x"]), float(r["y"]), float(r["z"])] for r in rows]).reshape(-1, 3)
    return labels, coords, [r["category"] for r in rows]
