import numpy as np
import pytest

from podgp.design import ParameterSpace, scale_to_space, sobol_points
from podgp.exceptions import ConfigError, DegenerateInputError
from podgp.validation import CvReport, cross_validate, fold_indices, pod_snapshot_sweep, relative_l2_errors


def test_relative_errors():
    Y = np.array([[3.0, 4.0], [1.0, 0.0]])
    np.testing.assert_allclose(relative_l2_errors(Y, Y * 1.1), [0.1, 0.1])
    with pytest.raises(DegenerateInputError):
        relative_l2_errors(np.zeros((1, 2)), np.ones((1, 2)))


@pytest.mark.parametrize("n,folds", [(10, 4), (12, 4), (7, 7), (100, 3)])
def test_folds_partition(n, folds):
    parts = fold_indices(n, folds, np.random.default_rng(0))
    allidx = np.concatenate(parts)
    assert np.array_equal(np.sort(allidx), np.arange(n))
    sizes = [len(p) for p in parts]
    assert max(sizes) - min(sizes) <= 1


def _rank_two_data(n=24):
    space = ParameterSpace.from_bounds(["a", "b"], [(0, 1), (0, 1)])
    X = scale_to_space(sobol_points(2, n), space).points
    t = np.linspace(0, 1, 15)
    Y = np.outer(1 + X[:, 0], np.ones_like(t)) + np.outer(X[:, 1], t)
    return space, X, Y


def test_exact_rank_data():
    space, X, Y = _rank_two_data()
    rep = cross_validate(X, Y, 4, 2, {"space": space, "energy_threshold": 1.0}, seed=1)
    assert rep.e_pod_mean <= 1e-8
    assert rep.e_gp_mean <= 1e-4
    assert len(rep.records) == 8
    assert sum(r["n_test"] for r in rep.records if r["repetition"] == 0) == len(Y)


def test_linear_targets_interpolated():
    # affine coefficients: the GP fits them to near machine precision
    space, X, Y = _rank_two_data(32)
    rep = cross_validate(X, Y, 4, 1, {"space": space, "energy_threshold": 1.0}, seed=0)
    assert rep.e_gp_mean <= 1e-4


def test_config_errors():
    _, X, Y = _rank_two_data(6)
    with pytest.raises(ConfigError):
        cross_validate(X, Y, folds=7)
    with pytest.raises(ConfigError):
        cross_validate(X, Y, folds=1)


def test_column_relabeling_invariance(restenosis_64):
    ds = restenosis_64
    perm = [2, 0, 3, 1]
    space_p = ParameterSpace(tuple(ds.space.params[j] for j in perm))
    a = cross_validate(ds.X, ds.Y, 4, 1, {"space": ds.space, "n_restarts": 4}, seed=3)
    b = cross_validate(ds.X[:, perm], ds.Y, 4, 1, {"space": space_p, "n_restarts": 4}, seed=3)
    assert a.e_pod_mean == b.e_pod_mean
    assert b.e_gp_mean == pytest.approx(a.e_gp_mean, rel=1e-3)


def test_report_outputs(tmp_path, restenosis_64):
    ds = restenosis_64
    rep = cross_validate(ds.X, ds.Y, 4, 1, {"space": ds.space, "n_restarts": 3}, seed=0)
    assert isinstance(rep, CvReport) and rep.e_gp_sd >= 0
    rep.to_csv(tmp_path / "cv.csv")
    lines = (tmp_path / "cv.csv").read_text().splitlines()
    assert lines[0].startswith("repetition,fold,n_test") and len(lines) == 5
    text = rep.to_text()
    assert "e_POD" in text and "e_GP" in text
    assert rep.e_pod_sum_mean == pytest.approx(np.mean([r["e_pod_sum"] for r in rep.records]))
    assert rep.records[0]["e_pod_sum"] == pytest.approx(rep.records[0]["e_pod"] * rep.records[0]["n_test"])


def test_parallel_matches_serial(restenosis_64):
    ds = restenosis_64
    cfg = {"space": ds.space, "n_restarts": 2}
    a = cross_validate(ds.X, ds.Y, 4, 2, cfg, seed=4)
    b = cross_validate(ds.X, ds.Y, 4, 2, cfg, seed=4, n_jobs=2)
    assert a.records == b.records


def test_sweep_full_basis(restenosis_64):
    Y = restenosis_64.Y
    res = pod_snapshot_sweep(Y, [len(Y)], threshold=1.0, repetitions=1)
    assert res.mean[0] <= 1e-8 and res.sd[0] == 0.0


def test_sweep_monotone(restenosis_256, tmp_path):
    res = pod_snapshot_sweep(restenosis_256.Y, [10, 25, 50, 100], repetitions=10, seed=0)
    for i in range(len(res.counts) - 1):
        assert res.mean[i + 1] <= res.mean[i] + 2 * max(res.sd[i], res.sd[i + 1])
    res.to_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "count,mean,sd"


def test_sweep_errors(restenosis_64):
    with pytest.raises(ConfigError):
        pod_snapshot_sweep(restenosis_64.Y, [65])
    with pytest.raises(ConfigError):
        pod_snapshot_sweep(restenosis_64.Y, [])
