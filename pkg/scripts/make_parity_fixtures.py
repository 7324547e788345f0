#!/usr/bin/env python3
"""Generate the shared parity fixtures under fixtures/parity/.

Each fixture is one tensor file. Filter cases hold keypoints, candidate match
indices, confidences, and the index set the filter keeps (computed here, with
rng seed 0); loss cases hold an (anchors, positives) batch and its loss value.
Both the core test suite and the matchforge binding tests consume these files,
so the binding parity check never needs to regenerate inputs.
"""

from pathlib import Path

import numpy as np

from matchkit import io
from matchkit.adalam import AdalamConfig, adalam_filter
from matchkit.losses import batch_distance_matrix, hardnet_loss
from matchkit.matching import Match, MatchSet
from matchkit.synth import make_scene

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures" / "parity"
FILTER_CASES = 25
LOSS_CASES = 25
FILTER_SEED = 0

FILTER_CONFIG = dict(seed_radius=20.0, neighborhood_radius_a=120.0,
                     neighborhood_radius_b=120.0, min_inliers=4)


def write_filter_case(path, case_seed):
    scene = make_scene(num_keypoints=60 + 4 * case_seed, noise_sigma=0.4,
                       outlier_fraction=0.3, rng_seed=case_seed, image_size=512.0)
    kpts_a = np.array([[kp.x, kp.y] for kp in scene.keypoints_a], np.float32)
    kpts_b = np.array([[kp.x, kp.y] for kp in scene.keypoints_b], np.float32)
    rng = np.random.default_rng(1000 + case_seed)
    conf = rng.random(len(kpts_a)).astype(np.float32)
    matches = np.stack([np.arange(len(kpts_a))] * 2, axis=1).astype(np.float32)
    ms = MatchSet(pair=("a", "b"), matches=[
        Match(i, i, 0.0, float(c)) for i, c in enumerate(conf)])
    cfg = AdalamConfig(**FILTER_CONFIG)
    kept = adalam_filter(ms, kpts_a.astype(np.float64), kpts_b.astype(np.float64),
                         cfg, rng_seed=FILTER_SEED)
    expected = np.array([m.idx_a for m in kept.matches], np.float32).reshape(-1)
    io.write_tensors(path, [kpts_a, kpts_b, matches, conf,
                            expected if len(expected) else np.full(1, -1, np.float32)],
                     ["kpts_a", "kpts_b", "matches", "confidences", "expected_kept"])


def write_loss_case(path, case_seed):
    rng = np.random.default_rng(2000 + case_seed)
    n = int(rng.integers(2, 9))
    d = int(rng.integers(2, 17))
    anchors = rng.normal(size=(n, d)).astype(np.float32)
    positives = (anchors + 0.3 * rng.normal(size=(n, d))).astype(np.float32)
    loss, _ = hardnet_loss(batch_distance_matrix(anchors, positives))
    io.write_tensors(path, [anchors, positives, np.array([loss], np.float32)],
                     ["anchors", "positives", "expected_loss"])


def main():
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    for i in range(FILTER_CASES):
        write_filter_case(FIXTURE_DIR / f"filter_{i:02d}.mft", i)
    for i in range(LOSS_CASES):
        write_loss_case(FIXTURE_DIR / f"loss_{i:02d}.mft", i)
    print(f"wrote {FILTER_CASES + LOSS_CASES} fixtures to {FIXTURE_DIR}")


if __name__ == "__main__":
    main()
