"""Spatially-adaptive outlier filtering of candidate matches.

Pipeline: pick high-confidence, well-spread seed matches; gather each seed's
neighborhood (matches close to the seed in both images); RANSAC a local
similarity model per neighborhood (least-squares affine refinement of the
best model); keep a neighborhood's consensus only when its inlier count is
statistically significant against a uniform null.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binom

from .matching import Match, MatchSet

_DEFAULT_DIAG = math.hypot(1024.0, 1024.0)


@dataclass
class SeedPoint:
    match_index: int
    score: float


@dataclass
class Neighborhood:
    seed: SeedPoint
    member_matches: list[int]


@dataclass
class AffineModel:
    A: np.ndarray
    t: np.ndarray

    def apply(self, pts: np.ndarray) -> np.ndarray:
        return pts @ self.A.T + self.t


@dataclass
class AdalamConfig:
    seed_radius: float = _DEFAULT_DIAG / 40.0
    neighborhood_radius_a: float = _DEFAULT_DIAG / 8.0
    neighborhood_radius_b: float = _DEFAULT_DIAG / 8.0
    ransac_iters: int = 128
    inlier_tol: float = 4.0
    alpha: float = 0.01
    min_inliers: int = 6
    seed_metric: str = "euclidean"  # or "chebyshev"
    det_min: float = 1e-3
    det_max: float = 1e3
    orientation_tol: float = math.pi / 6.0
    scale_ratio_min: float = 0.5
    scale_ratio_max: float = 2.0

    def __post_init__(self):
        if min(self.seed_radius, self.neighborhood_radius_a, self.neighborhood_radius_b) <= 0:
            raise ValueError("radii must be positive")
        if self.ransac_iters < 1:
            raise ValueError("ransac_iters must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.seed_metric not in ("euclidean", "chebyshev"):
            raise ValueError(f"unknown seed metric {self.seed_metric!r}")

    @classmethod
    def for_image_shape(cls, height: float, width: float, **overrides) -> "AdalamConfig":
        diag = math.hypot(float(height), float(width))
        base = dict(seed_radius=diag / 40.0,
                    neighborhood_radius_a=diag / 8.0,
                    neighborhood_radius_b=diag / 8.0)
        base.update(overrides)
        return cls(**base)


def keypoint_xy(keypoints) -> np.ndarray:
    """(K, 2) float positions from a Keypoint list or an array."""
    arr = np.asarray(keypoints, dtype=object)
    if arr.dtype == object and arr.ndim == 1 and len(arr) and hasattr(arr[0], "x"):
        return np.array([[kp.x, kp.y] for kp in keypoints], dtype=np.float64)
    return np.asarray(keypoints, dtype=np.float64).reshape(-1, 2)


def _keypoint_frames(keypoints) -> tuple[np.ndarray, np.ndarray, bool]:
    """(orientations, scales, any non-default) for a keypoint list."""
    if not len(keypoints) or not hasattr(next(iter(keypoints)), "orientation"):
        n = len(keypoints)
        return np.zeros(n), np.ones(n), False
    ori = np.array([kp.orientation for kp in keypoints], dtype=np.float64)
    sca = np.array([kp.scale for kp in keypoints], dtype=np.float64)
    return ori, sca, bool(np.any(ori != 0.0) or np.any(sca != 1.0))


def select_seeds(ms: MatchSet, kps_a, cfg: AdalamConfig) -> list[SeedPoint]:
    """Greedy NMS over matches by descending confidence, radius in image A."""
    if not ms.matches:
        raise ValueError("matches non-empty required")
    xy = keypoint_xy(kps_a)
    pos = np.array([xy[m.idx_a] for m in ms.matches])
    conf = np.array([m.confidence for m in ms.matches])
    order = np.lexsort((np.arange(len(conf)), -conf))
    kept_pos: list[np.ndarray] = []
    seeds: list[SeedPoint] = []
    for i in order:
        p = pos[i]
        if kept_pos:
            delta = np.abs(np.stack(kept_pos) - p)
            d = delta.max(axis=1) if cfg.seed_metric == "chebyshev" \
                else np.hypot(delta[:, 0], delta[:, 1])
            if d.min() <= cfg.seed_radius:
                continue
        kept_pos.append(p)
        seeds.append(SeedPoint(match_index=int(i), score=float(conf[i])))
    seeds.sort(key=lambda s: s.match_index)
    return seeds


def assign_neighborhoods(seeds: list[SeedPoint], ms: MatchSet, kps_a, kps_b,
                         cfg: AdalamConfig) -> list[Neighborhood]:
    """Matches near a seed in both images join that seed's neighborhood.

    When keypoints carry non-default orientation/scale, members must also
    agree with the seed's relative rotation (within orientation_tol) and
    relative scale (ratio within [scale_ratio_min, scale_ratio_max]).
    """
    xy_a = keypoint_xy(kps_a)
    xy_b = keypoint_xy(kps_b)
    idx = ms.index_array()
    pa = xy_a[idx[:, 0]]
    pb = xy_b[idx[:, 1]]
    frames_a = _keypoint_frames(kps_a)
    frames_b = _keypoint_frames(kps_b)
    use_frames = frames_a[2] or frames_b[2]
    if use_frames:
        d_ori = np.mod(frames_b[0][idx[:, 1]] - frames_a[0][idx[:, 0]] + math.pi,
                       2 * math.pi) - math.pi
        d_sca = frames_b[1][idx[:, 1]] / frames_a[1][idx[:, 0]]
    out = []
    for seed in seeds:
        sa = pa[seed.match_index]
        sb = pb[seed.match_index]
        near = (np.hypot(*(pa - sa).T) <= cfg.neighborhood_radius_a) \
            & (np.hypot(*(pb - sb).T) <= cfg.neighborhood_radius_b)
        if use_frames:
            rel = np.mod(d_ori - d_ori[seed.match_index] + math.pi, 2 * math.pi) - math.pi
            near &= np.abs(rel) <= cfg.orientation_tol
            ratio = d_sca / d_sca[seed.match_index]
            near &= (ratio >= cfg.scale_ratio_min) & (ratio <= cfg.scale_ratio_max)
        out.append(Neighborhood(seed=seed, member_matches=[int(i) for i in np.nonzero(near)[0]]))
    return out


def _fit_affine_lsq(pa: np.ndarray, pb: np.ndarray) -> AffineModel | None:
    """Full 6-DoF least-squares fit; None when under-determined."""
    if len(pa) < 3:
        return None
    design = np.hstack([pa, np.ones((len(pa), 1))])
    sol, *_ = np.linalg.lstsq(design, pb, rcond=None)
    return AffineModel(A=sol[:2].T, t=sol[2])


def verify_neighborhood(n: Neighborhood, ms: MatchSet, kps_a, kps_b,
                        cfg: AdalamConfig, rng_seed: int) -> tuple[list[int], bool]:
    """RANSAC a local model over the neighborhood, test inlier significance.

    Minimal sample is 2 matches fitting a 4-DoF similarity in seed-local
    coordinates; the best model is refined to a full affine by least squares
    on its consensus. Significance: with m members, k best inliers, and
    baseline hit probability p0 = min(0.5, tol^2 / radius_b^2), require
    P[Binomial(m, p0) >= k] <= alpha and k >= min_inliers.

    Returns (consensus match indices, significant); the consensus is empty
    when not significant.
    """
    members = np.asarray(n.member_matches, dtype=np.int64)
    m = len(members)
    if m < 2:
        return [], False
    xy_a = keypoint_xy(kps_a)
    xy_b = keypoint_xy(kps_b)
    idx = ms.index_array()[members]
    sa = xy_a[ms.matches[n.seed.match_index].idx_a]
    sb = xy_b[ms.matches[n.seed.match_index].idx_b]
    la = xy_a[idx[:, 0]] - sa
    lb = xy_b[idx[:, 1]] - sb
    za = la[:, 0] + 1j * la[:, 1]
    zb = lb[:, 0] + 1j * lb[:, 1]

    rng = np.random.default_rng(np.random.SeedSequence([int(rng_seed) & 0xFFFFFFFF,
                                                        int(n.seed.match_index)]))
    iters = cfg.ransac_iters
    i1 = rng.integers(0, m, size=iters)
    i2 = rng.integers(0, m - 1, size=iters)
    i2 = np.where(i2 >= i1, i2 + 1, i2)
    denom = za[i1] - za[i2]
    valid = np.abs(denom) > 1e-9
    c = np.zeros(iters, dtype=np.complex128)
    c[valid] = (zb[i1] - zb[i2])[valid] / denom[valid]
    t = zb[i1] - c * za[i1]
    det = np.abs(c) ** 2  # similarity determinant = scale^2
    valid &= (det >= cfg.det_min) & (det <= cfg.det_max)
    resid = np.abs(c[:, None] * za[None, :] + t[:, None] - zb[None, :])
    consensus = (resid <= cfg.inlier_tol) & valid[:, None]
    counts = consensus.sum(axis=1)
    best = int(counts.argmax())
    best_mask = consensus[best]
    best_count = int(counts[best])
    if best_count == 0:
        return [], False

    # Refine the winning model to a full affine on its consensus set.
    pa = np.stack([za.real, za.imag], axis=1)
    pb = np.stack([zb.real, zb.imag], axis=1)
    refined = _fit_affine_lsq(pa[best_mask], pb[best_mask])
    if refined is not None and cfg.det_min <= abs(np.linalg.det(refined.A)) <= cfg.det_max:
        r2 = np.linalg.norm(refined.apply(pa) - pb, axis=1)
        mask2 = r2 <= cfg.inlier_tol
        if mask2.sum() >= best_count:
            best_mask, best_count = mask2, int(mask2.sum())

    p0 = min(0.5, (cfg.inlier_tol / cfg.neighborhood_radius_b) ** 2)
    p_value = float(binom.sf(best_count - 1, m, p0))
    significant = p_value <= cfg.alpha and best_count >= cfg.min_inliers
    if not significant:
        return [], False
    return sorted(int(i) for i in members[best_mask]), True


def adalam_filter(ms: MatchSet, kps_a, kps_b, cfg: AdalamConfig | None = None,
                  rng_seed: int = 0) -> MatchSet:
    """Filter a candidate MatchSet to the union of significant local consensi.

    Deterministic given (inputs, cfg, rng_seed); per-neighborhood RNG
    substreams are derived from (rng_seed, seed match index), so evaluation
    order cannot change the result. Output is a subset of the input, sorted
    by idx_a.
    """
    cfg = cfg or AdalamConfig()
    if not ms.matches:
        return MatchSet(pair=ms.pair, matches=[])
    seeds = select_seeds(ms, kps_a, cfg)
    neighborhoods = assign_neighborhoods(seeds, ms, kps_a, kps_b, cfg)
    keep: set[int] = set()
    for nb in neighborhoods:
        inliers, significant = verify_neighborhood(nb, ms, kps_a, kps_b, cfg, rng_seed)
        if significant:
            keep.update(inliers)
    matches = [ms.matches[i] for i in sorted(keep)]
    matches.sort(key=lambda mm: mm.idx_a)
    return MatchSet(pair=ms.pair, matches=matches)
