"""Synthetic two-view scenes with ground-truth correspondences.

Generates keypoints in a square image frame, maps inliers through a global
affine (plus optional pixel noise) and scatters outliers uniformly in the
second frame. Paired descriptors are near-identical unit vectors so mutual-NN
matching recovers the full candidate set; evaluation then scores the outlier
filter against the ground-truth flags.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .adalam import AdalamConfig, AffineModel, adalam_filter
from .feature_head import Keypoint
from .matching import mutual_nn_match


@dataclass
class SynthScene:
    keypoints_a: list[Keypoint]
    keypoints_b: list[Keypoint]
    transform: AffineModel
    gt_inlier: np.ndarray  # per-keypoint bool, True where b = T(a) + noise
    descriptors_a: np.ndarray
    descriptors_b: np.ndarray
    noise_sigma: float
    outlier_fraction: float
    rng_seed: int
    image_size: float


def random_similarity(rng: np.random.Generator, image_size: float) -> AffineModel:
    """Rotation, mild scale, and a translation keeping points mostly in frame."""
    theta = rng.uniform(-math.pi / 6, math.pi / 6)
    scale = rng.uniform(0.9, 1.1)
    rot = scale * np.array([[math.cos(theta), -math.sin(theta)],
                            [math.sin(theta), math.cos(theta)]])
    t = rng.uniform(-0.05, 0.05, size=2) * image_size + \
        (np.eye(2) - rot) @ np.array([image_size / 2, image_size / 2])
    return AffineModel(A=rot, t=t)


def make_scene(num_keypoints: int = 200, noise_sigma: float = 0.5,
               outlier_fraction: float = 0.5, rng_seed: int = 0,
               image_size: float = 1024.0, descriptor_dim: int = 64,
               transform: AffineModel | None = None) -> SynthScene:
    if not 0.0 <= outlier_fraction < 1.0:
        raise ValueError("outlier_fraction must be in [0, 1)")
    rng = np.random.default_rng(rng_seed)
    if transform is None:
        transform = random_similarity(rng, image_size)
    if abs(np.linalg.det(transform.A)) < 1e-6:
        raise ValueError("degenerate transform")

    pa = rng.uniform(0, image_size, size=(num_keypoints, 2))
    num_outliers = int(round(num_keypoints * outlier_fraction))
    gt = np.ones(num_keypoints, dtype=bool)
    gt[:num_outliers] = False
    rng.shuffle(gt)
    pb = transform.apply(pa)
    if noise_sigma > 0:
        noise = rng.normal(0, noise_sigma, size=pb.shape)
        # keep inliers inside the stated bound |T(x_a) - x_b| <= 3 sigma
        norm = np.linalg.norm(noise, axis=1, keepdims=True)
        over = norm > 3 * noise_sigma
        noise = np.where(over, noise * (3 * noise_sigma) / norm, noise)
        pb = pb + noise
    pb[~gt] = rng.uniform(0, image_size, size=(num_outliers, 2))

    desc_a = rng.normal(size=(num_keypoints, descriptor_dim))
    desc_a /= np.linalg.norm(desc_a, axis=1, keepdims=True)
    desc_b = desc_a + 0.01 * rng.normal(size=desc_a.shape)
    desc_b /= np.linalg.norm(desc_b, axis=1, keepdims=True)

    kps_a = [Keypoint(x=float(x), y=float(y), score=1.0) for x, y in pa]
    kps_b = [Keypoint(x=float(x), y=float(y), score=1.0) for x, y in pb]
    return SynthScene(keypoints_a=kps_a, keypoints_b=kps_b, transform=transform,
                      gt_inlier=gt, descriptors_a=desc_a, descriptors_b=desc_b,
                      noise_sigma=noise_sigma, outlier_fraction=outlier_fraction,
                      rng_seed=rng_seed, image_size=image_size)


def evaluate_scene(scene: SynthScene, cfg: AdalamConfig | None = None,
                   rng_seed: int = 0) -> dict:
    """Run mutual-NN matching + adaptive filtering, score against ground truth."""
    cfg = cfg or AdalamConfig.for_image_shape(scene.image_size, scene.image_size)
    start = time.perf_counter()
    raw = mutual_nn_match(scene.descriptors_a, scene.descriptors_b)
    filtered = adalam_filter(raw, scene.keypoints_a, scene.keypoints_b, cfg, rng_seed)
    elapsed = time.perf_counter() - start

    # Descriptor pairing is index-aligned, so match (i, i) is geometry-correct
    # exactly when gt_inlier[i]; anything else is an outlier candidate.
    kept = filtered.index_array()
    kept_inliers = sum(1 for a, b in kept if a == b and scene.gt_inlier[a])
    gt_total = int(scene.gt_inlier.sum())
    precision = kept_inliers / len(kept) if len(kept) else 1.0
    recall = kept_inliers / gt_total if gt_total else 1.0
    return {
        "num_keypoints": len(scene.keypoints_a),
        "noise_sigma": scene.noise_sigma,
        "outlier_fraction": scene.outlier_fraction,
        "scene_seed": scene.rng_seed,
        "filter_seed": rng_seed,
        "image_size": scene.image_size,
        "raw_matches": len(raw),
        "kept_matches": len(kept),
        "kept_inliers": kept_inliers,
        "gt_inliers": gt_total,
        "precision": precision,
        "recall": recall,
        "seconds": elapsed,
    }
