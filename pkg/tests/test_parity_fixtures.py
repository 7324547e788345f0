"""The shared fixtures under fixtures/parity/ pin filter and loss outputs.

These files double as the reference inputs for the matchforge binding layer,
so this module asserts the core library still reproduces the stored results.
Regenerate with scripts/make_parity_fixtures.py after an intentional change.
"""

from pathlib import Path

import numpy as np
import pytest

from matchkit import io
from matchkit.adalam import AdalamConfig, adalam_filter
from matchkit.losses import batch_distance_matrix, hardnet_loss
from matchkit.matching import Match, MatchSet

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures" / "parity"

FILTER_CONFIG = dict(seed_radius=20.0, neighborhood_radius_a=120.0,
                     neighborhood_radius_b=120.0, min_inliers=4)


def load(path):
    tensors, names = io.read_tensors(path)
    return dict(zip(names, tensors))


def stored_kept(table):
    kept = table["expected_kept"].astype(np.int64)
    return [] if kept[0] == -1 else kept.tolist()


@pytest.mark.parametrize("path", sorted(FIXTURE_DIR.glob("filter_*.mft")),
                         ids=lambda p: p.stem)
def test_filter_fixture_reproduced(path):
    t = load(path)
    ms = MatchSet(pair=("a", "b"), matches=[
        Match(int(i), int(j), 0.0, float(c))
        for (i, j), c in zip(t["matches"].astype(np.int64), t["confidences"])])
    out = adalam_filter(ms, t["kpts_a"].astype(np.float64),
                        t["kpts_b"].astype(np.float64),
                        AdalamConfig(**FILTER_CONFIG), rng_seed=0)
    assert [m.idx_a for m in out.matches] == stored_kept(t)


@pytest.mark.parametrize("path", sorted(FIXTURE_DIR.glob("loss_*.mft")),
                         ids=lambda p: p.stem)
def test_loss_fixture_reproduced(path):
    t = load(path)
    loss, _ = hardnet_loss(batch_distance_matrix(t["anchors"], t["positives"]))
    assert np.float32(loss) == t["expected_loss"][0]


def test_fixture_count():
    assert len(list(FIXTURE_DIR.glob("*.mft"))) == 50
