"""Behavioral tests for the bound functions: shape validation, edge cases,
and agreement with the core library on freshly generated inputs."""

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

import matchforge as mf
from matchkit.adalam import AdalamConfig, adalam_filter
from matchkit.matching import Match, MatchSet, mutual_nn_match


def identity_scene(n=40, seed=0):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 400, size=(n, 2))
    matches = np.stack([np.arange(n)] * 2, axis=1)
    return pts, pts.copy(), matches


def test_identity_scene_keeps_everything():
    pa, pb, matches = identity_scene()
    kept = mf.bound_adalam_filter(pa, pb, matches,
                                  config={"min_inliers": 4}, seed=0)
    assert kept == list(range(len(matches)))


def test_empty_matches_gives_empty_list():
    pa, pb, _ = identity_scene(8)
    assert mf.bound_adalam_filter(pa, pb, np.empty((0, 2), np.int64)) == []


def test_wrong_shape_matches_is_native_error():
    pa, pb, _ = identity_scene(8)
    with pytest.raises(ValueError):
        mf.bound_adalam_filter(pa, pb, np.zeros((3, 3), np.int64))
    with pytest.raises(ValueError):
        mf.bound_adalam_filter(pa[:, :1], pb, np.zeros((1, 2), np.int64))


def test_non_integer_matches_rejected():
    pa, pb, _ = identity_scene(8)
    with pytest.raises(TypeError):
        mf.bound_adalam_filter(pa, pb, np.full((2, 2), 0.5))


def test_out_of_range_indices_rejected():
    pa, pb, _ = identity_scene(8)
    with pytest.raises(ValueError, match="out of range"):
        mf.bound_adalam_filter(pa, pb, np.array([[0, 99]]))


def test_unknown_config_key_rejected():
    pa, pb, matches = identity_scene(8)
    with pytest.raises(ValueError, match="unknown config key"):
        mf.bound_adalam_filter(pa, pb, matches, config={"bogus": 1})


def test_filter_agrees_with_core_on_random_input():
    rng = np.random.default_rng(7)
    pa = rng.uniform(0, 500, size=(60, 2))
    pb = rng.uniform(0, 500, size=(60, 2))
    matches = np.stack([np.arange(60), rng.permutation(60)], axis=1)
    conf = rng.random(60)
    cfg_map = {"seed_radius": 15.0, "neighborhood_radius_a": 100.0,
               "neighborhood_radius_b": 100.0, "min_inliers": 4}
    kept = mf.bound_adalam_filter(pa, pb, matches, config=cfg_map, seed=3,
                                  confidences=conf)
    ms = MatchSet(pair=("a", "b"), matches=[
        Match(int(i), int(j), 0.0, float(c)) for (i, j), c in zip(matches, conf)])
    want = adalam_filter(ms, pa, pb, AdalamConfig(**cfg_map), rng_seed=3)
    assert [(matches[r][0], matches[r][1]) for r in kept] == \
        [(m.idx_a, m.idx_b) for m in want.matches]


def test_worked_loss_batch():
    x1 = 4.05 / 3.8
    anchors = np.array([[0.0, 0.0], [1.9, 0.0]], np.float32)
    positives = np.array([[1.0, 0.0], [x1, np.sqrt(1.44 - x1 * x1)]], np.float32)
    assert mf.bound_hardnet_loss(anchors, positives) == pytest.approx(1.1, abs=1e-5)


def test_zero_loss_batch():
    a = np.array([[0.0, 0.0], [100.0, 0.0]])
    assert mf.bound_hardnet_loss(a, a) == 0.0


def test_single_row_batch_errors():
    with pytest.raises(ValueError):
        mf.bound_hardnet_loss(np.ones((1, 4)), np.ones((1, 4)))


def test_loss_shape_mismatch_errors():
    with pytest.raises(ValueError):
        mf.bound_hardnet_loss(np.ones((3, 4)), np.ones((3, 5)))


def test_hardneg_constant_matches_hand_eval():
    d_pos = np.array([0.2, 1.5, 0.0])
    d_neg = np.array([0.9, 1.0, 2.0])
    want = max(0, 1 + 0.2 - 0.9) + max(0, 1 + 1.5 - 1.0) + max(0, 1 + 0.0 - 2.0)
    assert mf.bound_hardneg_constant_loss(d_pos, d_neg) == pytest.approx(want)
    with pytest.raises(ValueError):
        mf.bound_hardneg_constant_loss(d_pos, d_neg[:2])


def test_mutual_nn_parity():
    rng = np.random.default_rng(11)
    a = rng.normal(size=(30, 16))
    b = rng.normal(size=(25, 16))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    b /= np.linalg.norm(b, axis=1, keepdims=True)
    got = mf.bound_mutual_nn_match(a, b, ratio_max=0.95)
    want = mutual_nn_match(a, b, ratio_max=0.95)
    assert got == [(m.idx_a, m.idx_b, m.distance, m.confidence)
                   for m in want.matches]
    with pytest.raises(ValueError, match="dimensions differ"):
        mf.bound_mutual_nn_match(a, b[:, :8])


def test_merge_keypoints_basic():
    kept, remap = mf.bound_merge_keypoints(
        [("hi", np.array([[10.0, 10.0]])),
         ("lo", np.array([[10.0, 10.0], [50.0, 50.0]]))],
        dedup_radius=1.0)
    assert kept == [(10.0, 10.0), (50.0, 50.0)]
    assert remap == {"hi": [0], "lo": [0, 1]}


def test_merge_matches_basic():
    sets = [
        (np.array([[0, 0]]), np.array([0.4]), np.arange(3), np.arange(3)),
        (np.array([[0, 0]]), np.array([0.9]), np.arange(3), np.arange(3)),
    ]
    assert mf.bound_merge_matches(sets) == [(0, 0, 0.9)]


def test_bound_calls_are_thread_safe():
    pa, pb, matches = identity_scene(50, seed=2)
    rng = np.random.default_rng(3)
    anchors = rng.normal(size=(8, 16)).astype(np.float32)
    positives = (anchors + 0.1 * rng.normal(size=(8, 16))).astype(np.float32)

    def work(_):
        return (tuple(mf.bound_adalam_filter(pa, pb, matches,
                                             config={"min_inliers": 4})),
                mf.bound_hardnet_loss(anchors, positives))

    with ThreadPoolExecutor(max_workers=8) as pool:
        results = list(pool.map(work, range(32)))
    assert len(set(results)) == 1
