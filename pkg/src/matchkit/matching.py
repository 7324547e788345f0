"""Mutual nearest-neighbor descriptor matching with ratio and distance filters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist


@dataclass
class Match:
    idx_a: int
    idx_b: int
    distance: float
    confidence: float


@dataclass
class MatchSet:
    pair: tuple[str, str]
    matches: list[Match] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.matches)

    def index_array(self) -> np.ndarray:
        return np.array([[m.idx_a, m.idx_b] for m in self.matches], dtype=np.int64).reshape(-1, 2)

    def confidence_array(self) -> np.ndarray:
        return np.array([m.confidence for m in self.matches], dtype=np.float64)


def _lowe_ratio(dist_row: np.ndarray, nn: int) -> float:
    """First-to-second nearest ratio for one query against all candidates."""
    d1 = dist_row[nn]
    rest = np.delete(dist_row, nn)
    d2 = rest.min()
    if d2 <= 0.0:
        # Identical best and runner-up: fully ambiguous unless both are exact.
        return 1.0
    return float(d1 / d2)


def mutual_nn_match(desc_a: np.ndarray, desc_b: np.ndarray,
                    ratio_max: float | None = None,
                    dist_max: float | None = None,
                    pair: tuple[str, str] = ("a", "b")) -> MatchSet:
    """Keep (i, j) iff each descriptor is the other's nearest neighbor.

    Euclidean distances; nearest-neighbor ties go to the smaller index. The
    ratio test, when enabled, is applied symmetrically (both directions must
    pass) so the output is identical under swapping the inputs; confidence is
    1 - min(1, ratio) using the more conservative of the two ratios. A side
    with fewer than two descriptors skips its ratio test.
    """
    desc_a = np.asarray(desc_a, dtype=np.float64)
    desc_b = np.asarray(desc_b, dtype=np.float64)
    if desc_a.ndim != 2 or desc_b.ndim != 2:
        raise ValueError("descriptor sets must be 2-D")
    if desc_a.shape[0] == 0 or desc_b.shape[0] == 0:
        raise ValueError("empty descriptor set")
    if desc_a.shape[1] != desc_b.shape[1]:
        raise ValueError(f"dimension mismatch: {desc_a.shape[1]} vs {desc_b.shape[1]}")
    if ratio_max is not None and not (0.0 < ratio_max <= 1.0):
        raise ValueError("ratio_max must be in (0, 1]")

    dist = cdist(desc_a, desc_b)
    nn_ab = dist.argmin(axis=1)  # argmin takes the smallest index on ties
    nn_ba = dist.argmin(axis=0)
    matches = []
    for i, j in enumerate(nn_ab):
        if nn_ba[j] != i:
            continue
        d = float(dist[i, j])
        if dist_max is not None and d > dist_max:
            continue
        ratios = []
        if dist.shape[1] >= 2:
            ratios.append(_lowe_ratio(dist[i, :], j))
        if dist.shape[0] >= 2:
            ratios.append(_lowe_ratio(dist[:, j], i))
        ratio = max(ratios) if ratios else 0.0
        if ratio_max is not None and ratio > ratio_max:
            continue
        matches.append(Match(idx_a=int(i), idx_b=int(j), distance=d,
                             confidence=1.0 - min(1.0, ratio)))
    matches.sort(key=lambda m: m.idx_a)
    return MatchSet(pair=pair, matches=matches)
