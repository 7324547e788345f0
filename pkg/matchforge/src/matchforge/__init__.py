"""matchforge: thin in-process bindings over the matchkit matching core.

Every function here accepts contiguous numeric arrays (anything
``np.ascontiguousarray`` can digest), validates shapes up front with native
``TypeError``/``ValueError``, delegates to matchkit, and returns plain Python
structures (lists, tuples, floats, dicts). No file I/O and no CLI surface is
bound; callers own their own serialization.

All bound calls are pure and thread-safe: they share no mutable state, and the
heavy lifting happens inside numpy kernels.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from matchkit.adalam import AdalamConfig, adalam_filter
from matchkit.ensemble import SourceTag, merge_keypoints, merge_matches
from matchkit.feature_head import Keypoint
from matchkit.losses import (batch_distance_matrix, hardneg_constant_loss,
                             hardnet_loss)
from matchkit.matching import Match, MatchSet, mutual_nn_match

__all__ = [
    "bound_mutual_nn_match",
    "bound_adalam_filter",
    "bound_hardnet_loss",
    "bound_hardneg_constant_loss",
    "bound_merge_keypoints",
    "bound_merge_matches",
]

__version__ = "0.1.0"


def _as_2d(arr, cols, name, dtype=np.float64):
    out = np.ascontiguousarray(arr, dtype=dtype)
    if out.ndim != 2 or (cols is not None and out.shape[1] != cols):
        want = f"(n, {cols})" if cols is not None else "2-d"
        raise ValueError(f"{name} must be a {want} array, got shape {out.shape}")
    return out


def _as_index_pairs(matches):
    raw = np.ascontiguousarray(matches)
    if raw.ndim != 2 or raw.shape[1] != 2:
        raise ValueError(f"matches must be an (m, 2) array, got shape {raw.shape}")
    out = raw.astype(np.int64)
    if not np.array_equal(out, np.asarray(raw, np.float64)):
        raise TypeError("matches must hold integer indices")
    return out


def bound_mutual_nn_match(desc_a, desc_b, ratio_max: float | None = None,
                          dist_max: float | None = None) -> list[tuple]:
    """Mutual nearest-neighbor matching over two descriptor stacks.

    Returns a list of (idx_a, idx_b, distance, confidence) tuples sorted by
    idx_a, exactly as the core matcher produces them.
    """
    a = _as_2d(desc_a, None, "desc_a")
    b = _as_2d(desc_b, None, "desc_b")
    if a.shape[1] != b.shape[1]:
        raise ValueError("descriptor dimensions differ: "
                         f"{a.shape[1]} vs {b.shape[1]}")
    ms = mutual_nn_match(a, b, ratio_max=ratio_max, dist_max=dist_max)
    return [(m.idx_a, m.idx_b, m.distance, m.confidence) for m in ms.matches]


def bound_adalam_filter(kpts_a, kpts_b, matches, config: Mapping | None = None,
                        seed: int = 0, confidences=None) -> list[int]:
    """Spatially consistent match filtering; returns kept row indices.

    ``matches`` is an (m, 2) integer array of (index into kpts_a, index into
    kpts_b); the result lists the rows of that array the filter retained.
    ``config`` is a mapping of AdalamConfig field overrides.
    """
    pa = _as_2d(kpts_a, 2, "kpts_a")
    pb = _as_2d(kpts_b, 2, "kpts_b")
    idx = _as_index_pairs(matches)
    if len(idx) and (idx.min() < 0 or idx[:, 0].max() >= len(pa)
                     or idx[:, 1].max() >= len(pb)):
        raise ValueError("match indices out of range")
    if confidences is None:
        conf = np.ones(len(idx))
    else:
        conf = np.ascontiguousarray(confidences, np.float64).reshape(-1)
        if len(conf) != len(idx):
            raise ValueError("confidences length must equal number of matches")
    cfg = AdalamConfig()
    for key, value in dict(config or {}).items():
        if not hasattr(cfg, key):
            raise ValueError(f"unknown config key: {key}")
        setattr(cfg, key, type(getattr(cfg, key))(value))
    ms = MatchSet(pair=("a", "b"), matches=[
        Match(int(i), int(j), 0.0, float(c)) for (i, j), c in zip(idx, conf)])
    kept = adalam_filter(ms, pa, pb, cfg, rng_seed=seed)
    # map kept (idx_a, idx_b) pairs back to input rows; duplicates resolve to
    # the first not-yet-claimed row
    rows: dict[tuple, list[int]] = {}
    for row, (i, j) in enumerate(idx):
        rows.setdefault((int(i), int(j)), []).append(row)
    return sorted(rows[(m.idx_a, m.idx_b)].pop(0) for m in kept.matches)


def bound_hardnet_loss(anchors, positives) -> float:
    """Hardest-in-batch triplet margin loss over an (anchor, positive) batch."""
    a = _as_2d(anchors, None, "anchors", dtype=None)
    p = _as_2d(positives, None, "positives", dtype=None)
    if a.shape != p.shape:
        raise ValueError(f"anchors/positives shapes differ: {a.shape} vs {p.shape}")
    loss, _ = hardnet_loss(batch_distance_matrix(a, p))
    return float(loss)


def bound_hardneg_constant_loss(d_pos, d_neg) -> float:
    """Margin loss over paired positive/negative distance vectors (summed)."""
    dp = np.ascontiguousarray(d_pos, np.float64).reshape(-1)
    dn = np.ascontiguousarray(d_neg, np.float64).reshape(-1)
    if dp.shape != dn.shape:
        raise ValueError("d_pos and d_neg must have the same length")
    return float(hardneg_constant_loss(dp, dn))


def bound_merge_keypoints(sources: Sequence[tuple], dedup_radius: float = 1.0):
    """Merge per-source (name, (K, 2) coordinate array) stacks into one table.

    Source priority is list order. Returns (keypoints, remap): ``keypoints``
    as a list of (x, y) tuples, ``remap`` as {source name: list of unified
    indices, aligned with that source's input rows}.
    """
    converted = []
    for priority, (name, coords) in enumerate(sources):
        xy = _as_2d(coords, 2, f"source {name!r}") if len(coords) else \
            np.empty((0, 2))
        converted.append((SourceTag(str(name), priority),
                          [Keypoint(x=float(x), y=float(y)) for x, y in xy]))
    table = merge_keypoints(converted, dedup_radius=float(dedup_radius))
    kept = [(kp.x, kp.y) for kp in table.keypoints]
    remap = {tag.name: np.asarray(table.remap[tag.name]).tolist()
             for tag, _ in converted}
    return kept, remap


def bound_merge_matches(sets: Sequence[tuple],
                        strict_one_to_one: bool = False) -> list[tuple]:
    """Merge per-source match lists into unified-index space.

    Each entry of ``sets`` is (matches (m, 2), confidences (m,), remap_a,
    remap_b) where the remaps translate per-source keypoint indices to the
    unified table. Returns (idx_a, idx_b, confidence) tuples sorted by index.
    """
    converted = []
    for matches, conf, remap_a, remap_b in sets:
        idx = _as_index_pairs(matches)
        cv = np.ascontiguousarray(conf, np.float64).reshape(-1)
        if len(cv) != len(idx):
            raise ValueError("confidences length must equal number of matches")
        ms = MatchSet(pair=("a", "b"), matches=[
            Match(int(i), int(j), 0.0, float(c)) for (i, j), c in zip(idx, cv)])
        converted.append((ms, np.ascontiguousarray(remap_a, np.int64),
                          np.ascontiguousarray(remap_b, np.int64)))
    out = merge_matches(converted, strict_one_to_one=strict_one_to_one)
    return [(m.idx_a, m.idx_b, m.confidence) for m in out.matches]
