import numpy as np
import pytest

import grasp

SPEC = {
    "dim": 32,
    "blocks": {"object": 2, "attribute": 2, "relation": 4, "residual": 24},
    "cardinalities": {"object": 4, "attribute": 4, "relation": 4},
    "n_examples": 300,
}


@pytest.fixture(scope="module")
def corpus():
    return grasp.synthesize(SPEC, seed=3)


def test_cayley_is_orthogonal():
    rng = np.random.default_rng(0)
    R = grasp.cayley(rng.normal(size=(16, 16)))
    assert np.abs(R.T @ R - np.eye(16)).max() < 1e-10
    assert np.linalg.det(R) == pytest.approx(1.0)
    assert np.allclose(grasp.cayley(np.array([[0.0, 1.0], [0.0, 0.0]])), [[0, -1], [1, 0]])


def test_butterfly():
    assert grasp.butterfly_pairs(8, 1) == [(0, 2), (1, 3), (4, 6), (5, 7)]
    angles = np.random.default_rng(1).normal(size=(2 * 3, 4))
    R = grasp.butterfly(angles, 8)
    assert np.abs(R.T @ R - np.eye(8)).max() < 1e-12


def test_prefix_score():
    s = grasp.prefix_score(np.array([1.0, 0, 3]), np.array([1.0, 1, 0]), 2, 0.1)
    assert s == pytest.approx(1 / np.sqrt(2) / 0.1)


def test_rotation_has_no_drift():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(200, 16))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    d = grasp.full_drift(x, x @ grasp.random_orthogonal(16, 5).T)
    assert d["max_abs"] < 1e-12
    assert d["exhaustive"]
    assert d["pairs"] == 200 * 201 // 2


def test_errors_carry_a_code():
    with pytest.raises(grasp.GraspError) as info:
        grasp.butterfly(np.zeros((3, 3)), 6)
    assert info.value.code == "NOT_POWER_OF_TWO"
    with pytest.raises(grasp.GraspError) as info:
        grasp.load_cache("/nonexistent/manifest.json")
    assert info.value.code == "IO"


def test_contract_and_cost():
    c = grasp.ratio_contract(64)
    assert c["prefix_set"] == [4, 8, 16, 32, 64]
    cost = grasp.cost(512, 10_000_000, 2)
    assert cost["params"] == 512 * 512 + 5


def test_synthesize_is_deterministic(corpus):
    cache, oracle = corpus
    again, _ = grasp.synthesize(SPEC, seed=3)
    assert len(cache) == 300 and cache.dim == 32
    assert np.array_equal(cache.image, again.image)
    assert np.array_equal(cache.view("G3"), again.view("G3"))
    assert np.abs(oracle.T @ oracle - np.eye(32)).max() < 1e-10
    assert cache.split(cache.ids[0]) in {"train", "val", "test"}


def test_train_diagnose_and_checkpoint(corpus, tmp_path):
    cache, _ = corpus
    ck = grasp.train(cache, {"epochs": 3, "batch_size": 64, "optimizer": {"lr_transform": 1e-2}})
    assert ck.variant == "dense_cayley"
    assert len(ck.trace) == 3
    assert ck.val_drift <= 1e-5
    R = ck.matrix
    assert np.abs(R.T @ R - np.eye(32)).max() < 1e-8

    report = grasp.diagnose(cache, ck)
    base = grasp.diagnose(cache)
    assert report["drift"]["max_abs"] <= 1e-5
    assert report["stair"] > base["stair"]

    path = str(tmp_path / "ck.grsp")
    ck.save(path)
    back = grasp.load_checkpoint(path)
    assert np.array_equal(back.matrix, R)
    rows = cache.image[:5].astype(np.float64)
    assert np.array_equal(back.apply(rows), ck.apply(rows))


def test_gradcheck():
    rows = grasp.gradcheck(8, 0)
    assert rows
    assert max(r["max_relative_error"] for r in rows) <= 1e-4
