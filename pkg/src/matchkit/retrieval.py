"""Image-pair shortlisting from per-image global descriptors.

Each image carries one fixed-length vector; candidate pairs are ranked by
descriptor distance. Small scenes fall back to the exhaustive pair set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from . import io

# Scenes with at most this many images are paired exhaustively.
EXHAUSTIVE_CUTOFF = 45

NORM_TOL = 1e-5


@dataclass
class GlobalDescriptor:
    image_id: str
    vector: np.ndarray
    normalized: bool = False


@dataclass
class PairShortlist:
    pairs: list[tuple[str, str, float]] = field(default_factory=list)
    exhaustive: bool = False

    def to_text(self) -> str:
        return "".join(f"{a} {b} {d:.6f}\n" for a, b, d in self.pairs)


def load_global_descriptors(path) -> list[GlobalDescriptor]:
    """Load one descriptor per record from a tensor file; record names are image ids."""
    tensors, names = io.read_tensors(path)
    if not names:
        names = [f"image_{i:05d}" for i in range(len(tensors))]
    dims = {t.shape[-1] for t in tensors}
    if any(t.ndim != 1 for t in tensors) or len(dims) != 1:
        raise ValueError(f"inconsistent dimension: {sorted(dims)}")
    out = []
    for name, vec in zip(names, tensors):
        norm = float(np.linalg.norm(vec))
        out.append(GlobalDescriptor(name, vec, normalized=abs(norm - 1.0) <= NORM_TOL))
    return out


def pairwise_distances(descriptors: list[GlobalDescriptor], metric: str = "euclidean") -> np.ndarray:
    """Symmetric M x M distance matrix. metric is "euclidean" or "cosine"."""
    if not descriptors:
        raise ValueError("empty collection")
    vecs = [np.asarray(d.vector, dtype=np.float64) for d in descriptors]
    if len({v.shape for v in vecs}) != 1:
        raise ValueError("inconsistent dimension")
    mat = np.stack(vecs)
    if metric == "euclidean":
        dist = cdist(mat, mat, metric="euclidean")
    elif metric == "cosine":
        norms = np.linalg.norm(mat, axis=1)
        if np.any(norms == 0.0):
            raise ValueError("zero-norm vector under cosine metric")
        dist = cdist(mat, mat, metric="cosine")
    else:
        raise ValueError(f"unknown metric {metric!r}")
    dist = np.maximum(dist, 0.0)
    np.fill_diagonal(dist, 0.0)
    return (dist + dist.T) / 2.0


def shortlist_pairs(matrix: np.ndarray, ids: list[str], n: int,
                    threshold: float | None = None,
                    exhaustive_cutoff: int = EXHAUSTIVE_CUTOFF) -> PairShortlist:
    """Candidate pairs from a distance matrix.

    For M <= exhaustive_cutoff all pairs are returned; otherwise the union
    over images of each image's n nearest neighbors (distance ties broken by
    id). A threshold, when given, drops pairs with distance > threshold.
    Pairs are canonically oriented (id_a < id_b) and sorted ascending by
    distance, ties by (id_a, id_b).
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    m = matrix.shape[0]
    if m < 2:
        raise ValueError("need at least two images")
    if matrix.shape != (m, m) or len(ids) != m:
        raise ValueError("matrix/id shape mismatch")
    if n < 1:
        raise ValueError("n must be positive")

    def canon(i: int, j: int) -> tuple[str, str]:
        a, b = ids[i], ids[j]
        return (a, b) if a < b else (b, a)

    selected: dict[tuple[str, str], float] = {}
    exhaustive = m <= exhaustive_cutoff
    if exhaustive:
        for i in range(m):
            for j in range(i + 1, m):
                selected[canon(i, j)] = float(matrix[i, j])
    else:
        for i in range(m):
            others = [j for j in range(m) if j != i]
            others.sort(key=lambda j: (matrix[i, j], ids[j]))
            for j in others[:n]:
                key = canon(i, j)
                selected.setdefault(key, float(matrix[i, j]))
    pairs = [(a, b, d) for (a, b), d in selected.items()
             if threshold is None or d <= threshold]
    pairs.sort(key=lambda p: (p[2], p[0], p[1]))
    return PairShortlist(pairs=pairs, exhaustive=exhaustive)
