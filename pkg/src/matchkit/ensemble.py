"""Multi-source keypoint and match merging.

Keypoints from several extractors are concatenated in priority order and
optionally deduplicated; the remap tables let per-source match indices be
rewritten into the unified table. Match sets from several matchers are
remapped, deduplicated on (idx_a, idx_b) keeping the highest confidence, and
optionally forced one-to-one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .matching import Match, MatchSet


@dataclass(frozen=True)
class SourceTag:
    name: str
    priority: int = 0


@dataclass
class UnifiedKeypointTable:
    keypoints: list
    origin: list[tuple[SourceTag, int]]
    remap: dict[str, np.ndarray] = field(default_factory=dict)


def merge_keypoints(sources, dedup_radius: float = 1.0) -> UnifiedKeypointTable:
    """Merge (SourceTag, keypoints) lists into one table.

    Sources are concatenated by ascending priority value (then input order).
    With dedup_radius > 0, a keypoint within that Euclidean distance of an
    earlier-retained one is dropped and its remap entry points at the
    retained keypoint. dedup_radius = 0 disables deduplication entirely.
    """
    if not sources:
        raise ValueError("at least one source required")
    if dedup_radius < 0:
        raise ValueError("dedup_radius must be >= 0")
    names = [tag.name for tag, _ in sources]
    if len(set(names)) != len(names):
        raise ValueError("duplicate source names")
    ordered = sorted(range(len(sources)), key=lambda i: (sources[i][0].priority, i))

    kept: list = []
    kept_xy: list[np.ndarray] = []
    origin: list[tuple[SourceTag, int]] = []
    remap: dict[str, np.ndarray] = {}
    for si in ordered:
        tag, kps = sources[si]
        entry = np.empty(len(kps), dtype=np.int64)
        for oi, kp in enumerate(kps):
            p = np.array([kp.x, kp.y], dtype=np.float64)
            if dedup_radius > 0 and kept_xy:
                d = np.linalg.norm(np.stack(kept_xy) - p, axis=1)
                j = int(d.argmin())
                if d[j] <= dedup_radius:
                    entry[oi] = j
                    continue
            entry[oi] = len(kept)
            kept.append(kp)
            kept_xy.append(p)
            origin.append((tag, oi))
        remap[tag.name] = entry
    return UnifiedKeypointTable(keypoints=kept, origin=origin, remap=remap)


def merge_matches(per_source, strict_one_to_one: bool = False) -> MatchSet:
    """Merge per-source (MatchSet, remap_a, remap_b) into one MatchSet.

    Indices are rewritten through the remaps; exact duplicate (idx_a, idx_b)
    pairs keep the highest confidence. Many-to-one matches survive unless
    strict_one_to_one applies highest-confidence-wins per index.
    """
    if not per_source:
        raise ValueError("at least one source required")
    pair = per_source[0][0].pair
    merged: dict[tuple[int, int], Match] = {}
    for ms, remap_a, remap_b in per_source:
        if ms.pair != pair:
            raise ValueError(f"mismatched pair ids: {ms.pair} vs {pair}")
        remap_a = np.asarray(remap_a, dtype=np.int64)
        remap_b = np.asarray(remap_b, dtype=np.int64)
        for m in ms.matches:
            key = (int(remap_a[m.idx_a]), int(remap_b[m.idx_b]))
            old = merged.get(key)
            if old is None or m.confidence > old.confidence:
                merged[key] = Match(idx_a=key[0], idx_b=key[1],
                                    distance=m.distance, confidence=m.confidence)
    matches = [merged[k] for k in sorted(merged)]
    if strict_one_to_one:
        matches = _enforce_one_to_one(matches)
    return MatchSet(pair=pair, matches=matches)


def _enforce_one_to_one(matches: list[Match]) -> list[Match]:
    """Highest confidence wins per idx_a and per idx_b; ties by (idx_a, idx_b)."""
    order = sorted(matches, key=lambda m: (-m.confidence, m.idx_a, m.idx_b))
    used_a: set[int] = set()
    used_b: set[int] = set()
    kept = []
    for m in order:
        if m.idx_a in used_a or m.idx_b in used_b:
            continue
        used_a.add(m.idx_a)
        used_b.add(m.idx_b)
        kept.append(m)
    kept.sort(key=lambda m: (m.idx_a, m.idx_b))
    return kept
