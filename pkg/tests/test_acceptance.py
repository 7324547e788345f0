"""Acceptance suite: one criterion per test, each printing a PASS line with
its measured numbers. Run with `pytest -s tests/test_acceptance.py` to see
the report.
"""

import time

import numpy as np
import pytest

from matchkit import io
from matchkit.cli import main
from matchkit.feature_head import decode_heatmap
from matchkit.losses import (batch_distance_matrix, hardneg_constant_loss,
                             hardnet_loss, hardnet_loss_grad)
from matchkit.matching import mutual_nn_match
from matchkit.retrieval import GlobalDescriptor, pairwise_distances, shortlist_pairs
from matchkit.synth import evaluate_scene, make_scene

from test_losses import finite_diff_grads, tie_free_batch, triple_loop_loss
from test_matching import brute_force_mutual_nn, unit_rows
from test_retrieval import brute_force_shortlist, make_descriptors


def report(name, detail=""):
    print(f"PASS: {name}" + (f" ({detail})" if detail else ""))


def test_triplet_loss_oracle():
    start = time.perf_counter()
    loss, _ = hardnet_loss(np.array([[1.0, 1.2], [0.9, 1.0]]))
    assert loss == pytest.approx(1.1, abs=1e-6)
    rng = np.random.default_rng(100)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        d = np.abs(rng.normal(size=(n, n))) * rng.uniform(0.5, 3)
        got, _ = hardnet_loss(d)
        worst = max(worst, abs(got - triple_loop_loss(d)))
    elapsed = time.perf_counter() - start
    assert worst < 1e-6
    assert elapsed < 5.0
    report("triplet loss oracle", f"worked value 1.1, 1000 batches, "
           f"max dev {worst:.2e}, {elapsed:.2f}s")


def test_hardneg_constant_loss_oracle():
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 33))
        d_pos = np.abs(rng.normal(size=n))
        d_neg = np.abs(rng.normal(size=n))
        want = sum(max(0.0, 1.0 + float(p) - float(q)) for p, q in zip(d_pos, d_neg))
        assert hardneg_constant_loss(d_pos, d_neg) == pytest.approx(want, abs=1e-6)
        worst = max(worst, abs(hardneg_constant_loss(d_pos, d_neg) - want))
    report("hard-negative-constant loss oracle", f"1000 vectors, max dev {worst:.2e}")


def test_gradient_check():
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(100):
        a, p = tie_free_batch(rng, int(rng.integers(2, 9)), int(rng.integers(2, 17)))
        ga, gp = hardnet_loss_grad(a, p)
        fa, fp = finite_diff_grads(a.copy(), p.copy())
        scale = max(1.0, np.abs(ga).max(), np.abs(gp).max())
        worst = max(worst, np.abs(ga - fa).max() / scale, np.abs(gp - fp).max() / scale)
    assert worst <= 1e-4
    report("gradient check", f"100 tie-free batches, max rel dev {worst:.2e}")


def test_feature_head_contract():
    rng = np.random.default_rng(103)
    worst = 0.0
    for _ in range(100):
        hc, wc = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        logits = rng.normal(size=(hc, wc, 65)) * 4
        h = decode_heatmap(logits)
        cells = h.reshape(hc, 8, wc, 8).transpose(0, 2, 1, 3).reshape(hc, wc, 64)
        shifted = np.exp(logits - logits.max(axis=2, keepdims=True))
        dustbin = shifted[:, :, 64] / shifted.sum(axis=2)
        worst = max(worst, np.abs(cells.sum(axis=2) + dustbin - 1.0).max())
    assert worst <= 1e-5

    one_hot = np.zeros((2, 3, 65))
    one_hot[1, 2, 19] = 1000.0
    h = decode_heatmap(one_hot)
    assert np.unravel_index(h.argmax(), h.shape) == (8 * 1 + 19 // 8, 8 * 2 + 19 % 8)

    assert decode_heatmap(np.zeros((128, 128, 65))).shape == (1024, 1024)
    report("feature-head decode contract",
           f"conservation max dev {worst:.2e}, one-hot exact, 1024 -> 128 cells")


def test_matching_oracle():
    rng = np.random.default_rng(104)
    for _ in range(200):
        na, nb = int(rng.integers(1, 65)), int(rng.integers(1, 65))
        a = unit_rows(rng, na, 8)
        b = unit_rows(rng, nb, 8)
        got = [(m.idx_a, m.idx_b) for m in mutual_nn_match(a, b).matches]
        assert got == brute_force_mutual_nn(a, b)
    report("mutual-NN vs exhaustive oracle", "200 instances, exact index sets")


def test_adalam_synthetic_targets():
    start = time.perf_counter()
    precisions, recalls = [], []
    for seed in range(20):
        scene = make_scene(num_keypoints=200, noise_sigma=0.5,
                           outlier_fraction=0.5, rng_seed=seed)
        assert int(scene.gt_inlier.sum()) == 100
        r = evaluate_scene(scene, rng_seed=seed)
        precisions.append(r["precision"])
        recalls.append(r["recall"])
    clean = evaluate_scene(make_scene(num_keypoints=200, noise_sigma=0.0,
                                      outlier_fraction=0.0, rng_seed=999), rng_seed=999)
    elapsed = time.perf_counter() - start
    assert np.mean(precisions) >= 0.95
    assert np.mean(recalls) >= 0.90
    assert clean["precision"] == 1.0 and clean["recall"] == 1.0
    assert elapsed < 10.0
    report("adaptive filter synthetic targets",
           f"mean precision {np.mean(precisions):.4f}, mean recall "
           f"{np.mean(recalls):.4f}, clean scene exact, {elapsed:.2f}s")


def test_adalam_subset_and_thread_determinism(tmp_path):
    from matchkit.adalam import AdalamConfig, adalam_filter
    from matchkit.matching import Match, MatchSet

    rng = np.random.default_rng(105)
    cfg = AdalamConfig(seed_radius=20.0, neighborhood_radius_a=150.0,
                       neighborhood_radius_b=150.0, min_inliers=4)
    for trial in range(25):
        n = int(rng.integers(1, 150))
        pa = rng.uniform(0, 600, size=(n, 2))
        pb = rng.uniform(0, 600, size=(n, 2))
        ms = MatchSet(pair=("a", "b"), matches=[
            Match(i, i, 0.0, float(c)) for i, c in enumerate(rng.random(n))])
        out = adalam_filter(ms, pa, pb, cfg, rng_seed=trial)
        assert {m.idx_a for m in out.matches} <= set(range(n))
        assert len(out.matches) <= n

    # identical bytes with 1 and 8 workers through the CLI
    from test_cli import make_scene_features, write_feature_file
    feat, shortlist = make_scene_features(tmp_path, seed=50)
    scene2 = make_scene(num_keypoints=90, noise_sigma=0.2, outlier_fraction=0.3,
                        rng_seed=51, image_size=512.0)
    write_feature_file(feat / "c.nn.feat", scene2.keypoints_a, scene2.descriptors_a)
    shortlist.write_text("a b 0.1\na c 0.2\nb c 0.3\n")
    blobs = []
    for threads in ("1", "8"):
        archive = tmp_path / f"out{threads}.mma"
        assert main(["--threads", threads, "match", str(feat), str(shortlist),
                     "-o", str(archive)]) == 0
        blobs.append(archive.read_bytes())
    assert blobs[0] == blobs[1]
    report("filter subset + thread determinism",
           "25 fuzz cases subset-safe, 1- vs 8-worker archives identical")


def test_retrieval_contract():
    rng = np.random.default_rng(106)
    for m, want_exhaustive in ((2, True), (45, True), (46, False), (80, False)):
        vecs = rng.normal(size=(m, 8))
        ids = [f"im{i:03d}" for i in range(m)]
        sl = shortlist_pairs(pairwise_distances(make_descriptors(vecs, ids)), ids, n=5)
        assert sl.exhaustive == want_exhaustive
        if want_exhaustive:
            assert len(sl.pairs) == m * (m - 1) // 2

    for _ in range(100):
        m = int(rng.integers(2, 24))
        vecs = rng.normal(size=(m, int(rng.integers(2, 12))))
        ids = [f"im{i:03d}" for i in range(m)]
        d = pairwise_distances(make_descriptors(vecs, ids))
        n = int(rng.integers(1, m))
        cutoff = int(rng.integers(0, 48))
        got = shortlist_pairs(d, ids, n=n, exhaustive_cutoff=cutoff)
        want, want_exh = brute_force_shortlist(d, ids, n, None, cutoff)
        assert got.exhaustive == want_exh
        assert [(a, b) for a, b, _ in got.pairs] == [(a, b) for a, b, _ in want]
    report("retrieval shortlist contract",
           "exhaustive iff M <= 45; 100 random collections match brute force")


def test_io_round_trips(tmp_path):
    rng = np.random.default_rng(107)
    for trial in range(20):
        shapes = [tuple(int(s) for s in rng.integers(1, 6, size=rng.integers(1, 5)))
                  for _ in range(int(rng.integers(1, 4)))]
        tensors = [rng.normal(size=s).astype(np.float32) for s in shapes]
        names = [f"rec{i}" for i in range(len(tensors))] if trial % 2 else None
        path = tmp_path / f"t{trial}.mft"
        io.write_tensors(path, tensors, names)
        back, back_names = io.read_tensors(path)
        assert all(a.tobytes() == b.tobytes() and a.shape == b.shape
                   for a, b in zip(tensors, back))
        path2 = tmp_path / f"t{trial}b.mft"
        io.write_tensors(path2, back, back_names or None)
        assert path.read_bytes() == path2.read_bytes()

    pairs = [io.ArchivePair("a", "b", np.array([[0, 1], [2, 0]]), np.array([0.9, 0.1])),
             io.ArchivePair("a", "c", np.array([[1, 1]]), np.array([0.5]))]
    counts = {"a": 3, "b": 2, "c": 2}
    apath = tmp_path / "m.mma"
    io.write_match_archive(apath, pairs, counts)
    back, back_counts = io.read_match_archive(apath)
    apath2 = tmp_path / "m2.mma"
    io.write_match_archive(apath2, back, back_counts)
    assert apath.read_bytes() == apath2.read_bytes()

    # grammar oracle: independently constructed expected bytes
    export = tmp_path / "pairs.txt"
    io.export_pair_matches_text([("b.jpg", "c.jpg", np.array([[4, 5]])),
                                 ("a.jpg", "b.jpg", np.array([[0, 3], [2, 1]]))], export)
    want = "a.jpg b.jpg\n0 3\n2 1\n\nb.jpg c.jpg\n4 5\n\n".encode("ascii")
    assert export.read_bytes() == want
    parsed = io.parse_pair_matches_text(export)
    assert [(a, b) for a, b, _ in parsed] == [("a.jpg", "b.jpg"), ("b.jpg", "c.jpg")]
    report("I/O round trips", "tensor + archive bit-exact, export matches grammar oracle")
