"""Hardest-in-batch triplet loss and hard-negative-constant loss.

Both use a fixed unit margin. The triplet loss averages per-pair hinge terms
built from the hardest negative found in either the row or the column of the
batch distance matrix; the hard-negative-constant loss sums hinge terms over
precomputed positive/negative distances.
"""

from __future__ import annotations

import numpy as np

TIE_EPS = 1e-9


def batch_distance_matrix(anchors: np.ndarray, positives: np.ndarray) -> np.ndarray:
    """d[i][j] = Euclidean distance between anchors[i] and positives[j]."""
    anchors = np.asarray(anchors, dtype=np.float64)
    positives = np.asarray(positives, dtype=np.float64)
    if anchors.shape != positives.shape or anchors.ndim != 2:
        raise ValueError("anchors and positives must share an (n, D) shape")
    if anchors.shape[0] < 2:
        raise ValueError("batch must contain at least 2 pairs")
    if not (np.all(np.isfinite(anchors)) and np.all(np.isfinite(positives))):
        raise ValueError("non-finite input")
    diff = anchors[:, None, :] - positives[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def _hardest_negatives(d: np.ndarray) -> np.ndarray:
    """Per i: min over off-diagonal row i and off-diagonal column i of d."""
    n = d.shape[0]
    masked = d + np.where(np.eye(n, dtype=bool), np.inf, 0.0)
    return np.minimum(masked.min(axis=1), masked.min(axis=0))


def hardnet_loss(d: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over i of max(0, 1 + d[i][i] - hardest_negative(i)).

    Returns (loss, per-sample hinge values).
    """
    d = np.asarray(d, dtype=np.float64)
    n = d.shape[0]
    if d.ndim != 2 or d.shape != (n, n):
        raise ValueError("distance matrix must be square")
    if n < 2:
        raise ValueError("no negatives available")
    per_sample = np.maximum(0.0, 1.0 + np.diag(d) - _hardest_negatives(d))
    return float(per_sample.mean()), per_sample


def hardneg_constant_loss(d_pos: np.ndarray, d_neg: np.ndarray) -> float:
    """Sum over i of max(0, 1 + d_pos[i] - d_neg[i]). A sum, not a mean."""
    d_pos = np.asarray(d_pos, dtype=np.float64).reshape(-1)
    d_neg = np.asarray(d_neg, dtype=np.float64).reshape(-1)
    if d_pos.shape != d_neg.shape:
        raise ValueError("length mismatch")
    if d_pos.size < 1:
        raise ValueError("at least one pair required")
    return float(np.maximum(0.0, 1.0 + d_pos - d_neg).sum())


def hardnet_loss_grad(anchors: np.ndarray, positives: np.ndarray
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Analytic subgradient of hardnet_loss w.r.t. anchors and positives.

    Raises on batches where the hardest negative of an active hinge term is
    ambiguous (two candidates within 1e-9), or where an active distance is
    zero; callers may perturb and retry.
    """
    anchors = np.asarray(anchors, dtype=np.float64)
    positives = np.asarray(positives, dtype=np.float64)
    d = batch_distance_matrix(anchors, positives)
    n = d.shape[0]
    grad_a = np.zeros_like(anchors)
    grad_p = np.zeros_like(positives)

    for i in range(n):
        row = [(d[i, j], "row", j) for j in range(n) if j != i]
        col = [(d[k, i], "col", k) for k in range(n) if k != i]
        candidates = sorted(row + col)
        neg_dist, kind, other = candidates[0]
        margin = 1.0 + d[i, i] - neg_dist
        if margin <= 0.0:
            continue
        if len(candidates) > 1 and candidates[1][0] - neg_dist < TIE_EPS:
            raise ValueError("non-differentiable point: tied hardest negatives")
        if d[i, i] < TIE_EPS or neg_dist < TIE_EPS:
            raise ValueError("non-differentiable point: zero active distance")
        # d(a_i, p_i) term
        u = (anchors[i] - positives[i]) / d[i, i]
        grad_a[i] += u / n
        grad_p[i] -= u / n
        # hardest negative term, subtracted
        if kind == "row":
            v = (anchors[i] - positives[other]) / d[i, other]
            grad_a[i] -= v / n
            grad_p[other] += v / n
        else:
            v = (anchors[other] - positives[i]) / d[other, i]
            grad_a[other] -= v / n
            grad_p[i] += v / n
    return grad_a, grad_p
