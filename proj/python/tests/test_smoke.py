import numpy as np
import pytest

import mkgcn


def path_adjacency(n):
    a = np.zeros((n, n))
    for i in range(n - 1):
        a[i, i + 1] = a[i + 1, i] = 1.0
    return a


def test_version():
    assert mkgcn.__version__.count(".") == 2


def test_laplacian_of_path_matches_numpy():
    a = path_adjacency(3)
    d = a.sum(axis=1)
    expected = np.eye(3) - a / np.sqrt(np.outer(d, d))
    np.testing.assert_allclose(mkgcn.laplacian(a), expected, atol=1e-15)
    assert np.allclose(np.linalg.eigvalsh(expected), [0.0, 1.0, 2.0])


def test_chebyshev_basis_matches_dense_polynomial():
    rng = np.random.default_rng(0)
    a = (rng.random((9, 9)) < 0.4).astype(float)
    a = np.triu(a, 1)
    a = a + a.T
    x = rng.normal(size=(9, 2))
    lt = mkgcn.laplacian(a) - np.eye(9)
    basis = mkgcn.chebyshev_basis(a, x, 3)
    assert len(basis) == 4
    np.testing.assert_allclose(basis[2], (2 * lt @ lt - np.eye(9)) @ x, atol=1e-12)
    np.testing.assert_allclose(basis[3], (4 * lt @ lt @ lt - 3 * lt) @ x, atol=1e-12)


def test_khop_reach_on_path():
    reach = mkgcn.khop_reach(path_adjacency(5), 2)
    assert reach[0, 2] == 1 and reach[0, 3] == 0


def test_simulate_shapes_and_determinism():
    a = mkgcn.simulate(n_per_class=30, seed=3)
    b = mkgcn.simulate(n_per_class=30, seed=3)
    assert a["features"].shape == (60, 2)
    np.testing.assert_array_equal(a["adjacency"], b["adjacency"])
    assert sum(a["test_mask"]) == 6


def test_affinity_modes():
    x = np.array([[1, 2, 3], [1, 2, 3], [3, 2, 1], [1, 3, 2], [2, 1, 3]], float)
    meta = {"age": [65, 66, 70, 67, 65], "gender": [0, 1, 0, 1, 0]}
    betas = {"age": 2.0, "gender": 0.0}
    nosim = mkgcn.affinity(x, meta, betas, mode="mixed-nosim")
    assert nosim[0, 4] == 1.0 and nosim[0, 1] == 0.5 and nosim[0, 3] == 0.0
    age = mkgcn.affinity(x, meta, betas, mode="age", sigma=1.0)
    assert age[0, 1] == pytest.approx(1.0)
    assert age[0, 4] == pytest.approx(np.exp(-0.125))
    with pytest.raises(mkgcn.ConfigError):
        mkgcn.affinity(x, meta, {"age": 2.0})


def test_predict_shape_and_errors():
    data = mkgcn.simulate(n_per_class=10, seed=1)
    scores = mkgcn.predict(data["adjacency"], data["features"], 2, [[1, 3]], width=4, aggregator="maxpool")
    assert scores.shape == (20, 2)
    with pytest.raises(mkgcn.ConfigError):
        mkgcn.predict(data["adjacency"], data["features"], 2, [[1]], aggregator="sum")
    with pytest.raises(mkgcn.Error):
        mkgcn.predict(data["adjacency"][:5, :5], data["features"], 2, [[1]])


def test_cross_validate_separable_clusters():
    data = mkgcn.simulate(n_per_class=40, v1=0.05, v2=0.05, seed=2)
    r = mkgcn.cross_validate(data["adjacency"], data["features"], data["labels"], [[1]], epochs=50, folds=4, seed=2)
    assert len(r["accuracies"]) == 4
    assert r["mean"] == pytest.approx(100.0)
    again = mkgcn.cross_validate(data["adjacency"], data["features"], data["labels"], [[1]], epochs=50, folds=4, seed=2)
    assert again["fingerprint"] == r["fingerprint"]


def test_run_cli(tmp_path):
    code, out, err = mkgcn.run_cli(["simdata", "--n-per-class", "20", "--out", str(tmp_path / "sim")])
    assert code == 0, err
    assert "nodes 40" in out
    assert (tmp_path / "sim" / "graph.edges").exists()
    code, _, err = mkgcn.run_cli(["nonsense"])
    assert code != 0 and "unknown command" in err
