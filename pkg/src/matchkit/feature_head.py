"""Keypoint-head decoding: detection logits to keypoints, dense descriptors to
per-keypoint unit vectors.

The detection tensor has 65 channels per 8x8 cell: 64 pixel slots plus a
dustbin ("no keypoint here"). Softmax over the 65, drop the dustbin, unshuffle
the remaining 64 into the full-resolution heatmap. Descriptors live on the
coarse cell grid and are sampled at keypoint locations by bicubic
(Catmull-Rom) interpolation, then L2-normalized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import softmax

CELL = 8
DUSTBIN = 64


@dataclass
class Keypoint:
    x: float
    y: float
    score: float = 0.0
    scale: float = 1.0
    orientation: float = 0.0
    affine: np.ndarray = field(default_factory=lambda: np.eye(2))


def decode_heatmap(logits: np.ndarray) -> np.ndarray:
    """(H_c, W_c, 65) raw logits -> (8*H_c, 8*W_c) probability heatmap.

    Per cell: softmax over the 65 channels, drop the dustbin, map channel k
    to the pixel offset (k // 8, k % 8) inside the cell.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 3 or logits.shape[2] != 65:
        raise ValueError(f"expected (H_c, W_c, 65), got {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise ValueError("non-finite logits")
    hc, wc, _ = logits.shape
    probs = softmax(logits, axis=2)[:, :, :DUSTBIN]
    # (hc, wc, 8, 8) -> (hc, 8, wc, 8) -> (H, W)
    return probs.reshape(hc, wc, CELL, CELL).transpose(0, 2, 1, 3).reshape(hc * CELL, wc * CELL)


def extract_keypoints(heatmap: np.ndarray, threshold: float, k_max: int,
                      nms_radius: int = 4) -> list[Keypoint]:
    """Threshold, greedy NMS (Chebyshev radius), then top-k_max by score.

    Candidates are visited in descending score, ties by (y, x); a candidate
    within nms_radius of an already kept pixel is suppressed.
    """
    heatmap = np.asarray(heatmap, dtype=np.float64)
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    if k_max < 1:
        raise ValueError("k_max must be positive")
    h, w = heatmap.shape
    ys, xs = np.nonzero(heatmap >= threshold)
    if len(ys) == 0:
        return []
    scores = heatmap[ys, xs]
    order = np.lexsort((xs, ys, -scores))
    suppressed = np.zeros((h, w), dtype=bool)
    kept: list[Keypoint] = []
    r = nms_radius
    for i in order:
        y, x = int(ys[i]), int(xs[i])
        if suppressed[y, x]:
            continue
        kept.append(Keypoint(x=float(x), y=float(y), score=float(scores[i])))
        if len(kept) >= k_max:
            break
        if r > 0:
            suppressed[max(0, y - r):y + r + 1, max(0, x - r):x + r + 1] = True
    return kept


def _catmull_rom_weights(t: np.ndarray) -> np.ndarray:
    """Weights for taps at offsets (-1, 0, 1, 2) from the base grid index."""
    t = np.asarray(t, dtype=np.float64)
    t2 = t * t
    t3 = t2 * t
    w0 = -0.5 * t3 + t2 - 0.5 * t
    w1 = 1.5 * t3 - 2.5 * t2 + 1.0
    w2 = -1.5 * t3 + 2.0 * t2 + 0.5 * t
    w3 = 0.5 * t3 - 0.5 * t2
    return np.stack([w0, w1, w2, w3], axis=-1)


def sample_descriptors(dense: np.ndarray, keypoints: list[Keypoint]) -> np.ndarray:
    """Sample (H_c, W_c, D) cell-grid descriptors at pixel keypoints.

    Pixel (x, y) maps to grid coordinates ((x + 0.5) / 8 - 0.5,
    (y + 0.5) / 8 - 0.5); sampling is Catmull-Rom bicubic with clamped
    borders, and every output row is L2-normalized.
    """
    dense = np.asarray(dense, dtype=np.float64)
    if dense.ndim != 3:
        raise ValueError(f"expected (H_c, W_c, D), got {dense.shape}")
    hc, wc, dd = dense.shape
    if not keypoints:
        return np.zeros((0, dd))
    px = np.array([kp.x for kp in keypoints])
    py = np.array([kp.y for kp in keypoints])
    if np.any(px < 0) or np.any(px >= wc * CELL) or np.any(py < 0) or np.any(py >= hc * CELL):
        raise ValueError("keypoint outside the descriptor frame")
    gx = (px + 0.5) / CELL - 0.5
    gy = (py + 0.5) / CELL - 0.5
    x0 = np.floor(gx).astype(np.int64)
    y0 = np.floor(gy).astype(np.int64)
    wx = _catmull_rom_weights(gx - x0)  # (K, 4)
    wy = _catmull_rom_weights(gy - y0)
    tx = np.clip(x0[:, None] + np.arange(-1, 3), 0, wc - 1)  # (K, 4)
    ty = np.clip(y0[:, None] + np.arange(-1, 3), 0, hc - 1)
    # taps (K, 4, 4, D) indexed [keypoint, y-tap, x-tap]
    taps = dense[ty[:, :, None], tx[:, None, :]]
    out = np.einsum("kyxd,ky,kx->kd", taps, wy, wx)
    norms = np.linalg.norm(out, axis=1)
    if np.any(norms < 1e-12):
        raise ValueError("degenerate descriptor")
    return out / norms[:, None]
