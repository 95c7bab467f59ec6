import struct
import warnings

import numpy as np
import pytest

from podgp.design import ParameterSpace, isr3d_space, scale_to_space, sobol_points
from podgp.exceptions import ConfigError, ExtrapolationWarning, ModelFormatError, ShapeError, UnsupportedVersionError
from podgp.gp import GaussianProcess
from podgp.surrogate import (
    MAGIC,
    PodGpSurrogate,
    load_model,
    predict_response,
    read_model_header,
    save_model,
    train_surrogate,
)


@pytest.fixture(scope="module")
def trained(restenosis_64):
    ds = restenosis_64
    return PodGpSurrogate(space=ds.space, n_snapshots=40, time_grid=ds.time_grid, qoi="area").fit(ds.X, ds.Y)


def test_structure(trained, restenosis_64):
    m = trained
    assert len(m.gps_) == m.n_components_ == m.basis_.n_components_
    assert m.snapshot_indices_.size == 40
    for g in m.gps_:
        np.testing.assert_array_equal(g.X_train_, m.gps_[0].X_train_)
        assert g.X_train_.shape[0] == 64
    meta = m.metadata()
    assert meta["n_train"] == 64 and meta["n_snapshots"] == 40 and meta["energy"] >= 0.999


def test_composition_at_training_inputs(trained, restenosis_64):
    ds = restenosis_64
    proj = trained.basis_.inverse_transform(trained.basis_.transform(ds.Y))
    pred = trained.predict(ds.X)
    rel = np.linalg.norm(pred - proj, axis=1) / np.linalg.norm(proj, axis=1)
    assert rel.max() <= 1e-4


@pytest.mark.xfail(strict=True, reason="noise-floor GP residuals (noise+jitter)*alpha reach ~1e-5 relative")
def test_composition_within_1e6(trained, restenosis_64):
    ds = restenosis_64
    proj = trained.basis_.inverse_transform(trained.basis_.transform(ds.Y))
    rel = np.linalg.norm(trained.predict(ds.X) - proj, axis=1) / np.linalg.norm(proj, axis=1)
    assert rel.max() <= 1e-6


def test_linearity_in_basis(trained):
    m = PodGpSurrogate(space=trained.space_)
    m.__dict__.update({k: v for k, v in trained.__dict__.items() if k.endswith("_")})
    alpha = np.array([1.5, -0.25][: trained.n_components_])
    const = []
    for a in alpha:
        X = trained.gps_[0].X_train_
        const.append(GaussianProcess.from_state(trained.gps_[0].hyper_, X, np.zeros(len(X)), trained.gps_[0].L_,
                                                np.zeros(len(X)), a, 1.0))
    m.gps_ = const
    out = m.predict(np.array([[12.0, 0.2, 0.5, 4.0]]))
    np.testing.assert_array_equal(out[0], trained.basis_.basis_ @ alpha)


def test_identical_responses():
    X = scale_to_space(sobol_points(4, 12), isr3d_space()).points
    y = np.linspace(3.0, 2.0, 31)
    m = train_surrogate(X, np.tile(y, (12, 1)), space=isr3d_space())
    assert m.n_components_ == 1
    Xs = scale_to_space(sobol_points(4, 20, skip=100), isr3d_space()).points
    np.testing.assert_allclose(m.predict(Xs), np.tile(y, (20, 1)), rtol=1e-8)


def test_predict_response_outputs(trained):
    x = np.array([15.0, 0.2, 0.6, 6.0])
    mean, var = predict_response(trained, x)
    assert mean.shape == (31,) and var.shape == (trained.n_components_,)
    assert np.all(var >= 0)
    res = trained.predict_response(np.vstack([x, x]))
    assert res.mean.shape == (2, 31) and not res.extrapolated.any()
    rv = trained.response_variance(x)
    np.testing.assert_allclose(rv[0], (trained.basis_.basis_**2) @ var)


def test_extrapolation_warning(trained):
    with pytest.warns(ExtrapolationWarning):
        res = trained.predict_response(np.array([[25.0, 0.2, 0.6, 6.0], [15.0, 0.2, 0.6, 6.0]]))
    np.testing.assert_array_equal(res.extrapolated, [True, False])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        trained.predict(np.array([[15.0, 0.2, 0.6, 6.0]]))


def test_shape_errors(trained):
    with pytest.raises(ShapeError):
        trained.predict(np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        PodGpSurrogate().fit(np.zeros((3, 2)), np.zeros((4, 5)))
    with pytest.raises(ConfigError):
        PodGpSurrogate(n_snapshots=10).fit(np.random.default_rng(0).random((5, 2)), np.ones((5, 3)))


def test_bounding_space_when_none():
    r = np.random.default_rng(0)
    X = r.uniform([1, 100], [2, 300], (15, 2))
    m = PodGpSurrogate(n_restarts=2).fit(X, np.column_stack([X[:, 0], X[:, 1] / 100]))
    np.testing.assert_array_equal(m.space_.lower, X.min(0))
    np.testing.assert_array_equal(m.space_.upper, X.max(0))


def test_deterministic(restenosis_64):
    ds = restenosis_64
    a = PodGpSurrogate(space=ds.space, n_snapshots=30, random_state=5).fit(ds.X, ds.Y)
    b = PodGpSurrogate(space=ds.space, n_snapshots=30, random_state=5, n_jobs=2).fit(ds.X, ds.Y)
    np.testing.assert_array_equal(a.snapshot_indices_, b.snapshot_indices_)
    for ga, gb in zip(a.gps_, b.gps_):
        assert ga.hyper_ == gb.hyper_
        np.testing.assert_array_equal(ga.alpha_, gb.alpha_)


def test_round_trip_bitwise(trained, tmp_path):
    p = tmp_path / "m.podgp"
    save_model(trained, p)
    loaded = load_model(p)
    X = scale_to_space(np.random.default_rng(9).random((100, 4)), isr3d_space()).points
    a, b = trained.predict_response(X), loaded.predict_response(X)
    assert a.mean.tobytes() == b.mean.tobytes()
    assert a.coeff_var.tobytes() == b.coeff_var.tobytes()
    assert loaded.space_ == trained.space_
    np.testing.assert_array_equal(loaded.time_grid_, trained.time_grid_)


def test_save_is_deterministic(trained, tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    save_model(trained, tmp_path / "a")
    save_model(trained, tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    assert read_model_header(tmp_path / "a")["created"] == "2023-11-14T22:13:20Z"


def test_header_inspection(trained, tmp_path):
    p = tmp_path / "m.podgp"
    save_model(trained, p, timestamp="2020-01-01T00:00:00Z")
    meta = read_model_header(p)
    assert meta["n_components"] == trained.n_components_
    assert meta["qoi"] == "area" and meta["created"] == "2020-01-01T00:00:00Z"
    assert len(meta["hyperparameters"]) == trained.n_components_
    assert [s["name"] for s in meta["space"]] == trained.space_.names


def test_truncated_and_corrupt(trained, tmp_path):
    p = tmp_path / "m.podgp"
    save_model(trained, p)
    data = p.read_bytes()
    for cut in (4, 30, len(data) // 2, len(data) - 1):
        (tmp_path / "t").write_bytes(data[:cut])
        with pytest.raises(ModelFormatError):
            load_model(tmp_path / "t")
    flipped = bytearray(data)
    flipped[len(data) // 2] ^= 0xFF
    (tmp_path / "c").write_bytes(bytes(flipped))
    with pytest.raises(ModelFormatError, match="checksum"):
        load_model(tmp_path / "c")
    (tmp_path / "x").write_bytes(b"not a model at all")
    with pytest.raises(ModelFormatError, match="magic"):
        load_model(tmp_path / "x")


def test_version_mismatch(trained, tmp_path):
    p = tmp_path / "m.podgp"
    save_model(trained, p)
    data = bytearray(p.read_bytes())
    data[len(MAGIC) : len(MAGIC) + 4] = struct.pack("<I", 99)
    p.write_bytes(bytes(data))
    with pytest.raises(UnsupportedVersionError, match="99"):
        load_model(p)


def test_large_batch(trained):
    X = scale_to_space(np.random.default_rng(0).random((100_000, 4)), isr3d_space()).points
    Y = trained.predict(X)
    assert Y.shape == (100_000, 31) and np.all(np.isfinite(Y))


def test_sklearn_api():
    m = PodGpSurrogate(energy_threshold=0.99)
    assert m.get_params()["energy_threshold"] == 0.99
    space = ParameterSpace.from_bounds(["a"], [(0, 1)])
    assert m.set_params(space=space).space is space
