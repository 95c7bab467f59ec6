import numpy as np
import pytest

from podgp.design import isr3d_space, saltelli_design, scale_to_space, sobol_points
from podgp.exceptions import DataError, DomainError, ShapeError
from podgp.models import (
    A0,
    BUILTINS,
    Dataset,
    g_function,
    g_function_indices,
    generate_dataset,
    get_builtin,
    ishigami,
    ishigami_indices,
    load_dataset,
    relative_area_loss,
    save_dataset,
    synthetic_restenosis,
)
from podgp.sensitivity import estimate_sobol


def test_ishigami_examples():
    assert ishigami([0.0, 0.0, 0.0]) == 0.0
    assert ishigami([np.pi / 2, 0.0, 0.0]) == pytest.approx(1.0)
    assert ishigami([np.pi / 2, np.pi / 2, 1.0]) == pytest.approx(8.1)


def test_ishigami_indices_values():
    first, total = ishigami_indices()
    np.testing.assert_allclose(first, [0.3139, 0.4424, 0.0], atol=5e-5)
    np.testing.assert_allclose(total, [0.5576, 0.4424, 0.2437], atol=5e-5)


def test_g_function_examples():
    a = np.array([0.0, 0.5, 3.0, 9.0])
    assert g_function(np.full(4, 0.5), a) == pytest.approx(np.prod(a / (1 + a)))
    assert g_function([0.0], [0.0]) == 2.0
    big = np.array([0.0, 1e6])
    assert g_function([0.3, 0.0], big) == pytest.approx(g_function([0.3, 1.0], big), rel=1e-5)
    with pytest.raises(DomainError):
        g_function([0.1], [-1.0])


def test_g_function_indices_closed_form():
    a = np.array([0.0, 0.5, 3.0, 9.0])
    vi = (1 / 3) / (1 + a) ** 2
    first, total = g_function_indices(a)
    np.testing.assert_allclose(first, vi / (np.prod(1 + vi) - 1))
    assert np.all(total >= first)


def test_restenosis_initial_area_and_monotone():
    X = scale_to_space(sobol_points(4, 500), isr3d_space()).points
    Y = synthetic_restenosis(X)
    assert Y.shape == (500, 31)
    np.testing.assert_array_equal(Y[:, 0], A0)
    assert A0 == 3.17
    assert np.all(np.diff(Y, axis=1) <= 0)
    assert np.all(Y > 0)


def test_restenosis_strain_effect_small():
    space = isr3d_space()
    X = scale_to_space(sobol_points(4, 200), space).points
    lo, hi = X.copy(), X.copy()
    lo[:, 2], hi[:, 2] = space.lower[2], space.upper[2]
    a, b = synthetic_restenosis(lo), synthetic_restenosis(hi)
    rel = np.linalg.norm(a - b, axis=1) / np.linalg.norm(a, axis=1)
    assert rel.max() < 0.01


def test_restenosis_domain():
    with pytest.raises(DomainError):
        synthetic_restenosis([25.0, 0.2, 0.5, 5.0])
    synthetic_restenosis([25.0, 0.2, 0.5, 5.0], check_domain=False)
    with pytest.raises(ShapeError):
        synthetic_restenosis([15.0, 0.2, 0.5])
    with pytest.raises(ValueError):
        synthetic_restenosis([15.0, 0.2, 0.5, 5.0], time_grid=[0, 2, 1])


def test_restenosis_custom_grid():
    y = synthetic_restenosis([15.0, 0.2, 0.5, 5.0], time_grid=np.linspace(0, 30, 121))
    assert y.shape == (121,)
    np.testing.assert_allclose(y[::4], synthetic_restenosis([15.0, 0.2, 0.5, 5.0]), rtol=1e-14)


def test_restenosis_bit_reproducible():
    X = scale_to_space(sobol_points(4, 64), isr3d_space()).points
    assert synthetic_restenosis(X).tobytes() == synthetic_restenosis(X).tobytes()


def test_restenosis_sensitivity_pattern():
    space = isr3d_space()
    des = saltelli_design(space, 2**14)
    f_A, f_B, f_AB = des.split(synthetic_restenosis(des.stacked()))
    idx = estimate_sobol(f_A, f_B, f_AB)
    assert not idx.defined[0]
    early, late = idx.first_order[:, 1], idx.first_order[:, -1]
    assert np.argmax(early) == 3
    assert set(np.argsort(late)[-2:]) == {0, 1}
    assert idx.total[2, -1] < 0.05


def test_area_loss():
    assert relative_area_loss(A0) == 0.0
    assert relative_area_loss(A0 / 2) == pytest.approx(50.0)


def test_builtins():
    for name in BUILTINS:
        m = get_builtin(name)
        X = scale_to_space(sobol_points(m.dim, 5), m.space).points
        Y = m(X)
        assert Y.shape[0] == 5 and Y.ndim == 2
    assert get_builtin("ishigami")(np.zeros((2, 3))).shape == (2, 1)
    with pytest.raises(ValueError, match="unknown builtin"):
        get_builtin("nope")


def _write_toy(tmp_path, n=8):
    ds = generate_dataset(n)
    paths = [tmp_path / f for f in ("in.csv", "resp.csv", "t.csv")]
    save_dataset(ds, *paths)
    return ds, paths


def test_dataset_round_trip(tmp_path):
    ds, paths = _write_toy(tmp_path)
    back = load_dataset(*paths, space=isr3d_space())
    assert len(back) == 8
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.Y, ds.Y)
    np.testing.assert_array_equal(back.time_grid, ds.time_grid)


def test_dataset_ragged_row(tmp_path):
    _, paths = _write_toy(tmp_path)
    lines = paths[1].read_text().splitlines()
    lines[4] = ",".join(lines[4].split(",")[:-1])
    paths[1].write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match="row 5"):
        load_dataset(*paths, space=isr3d_space())


def test_dataset_row_count(tmp_path):
    _, paths = _write_toy(tmp_path)
    lines = paths[1].read_text().splitlines()
    paths[1].write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(DataError, match="row-count"):
        load_dataset(*paths, space=isr3d_space())


def test_dataset_non_finite(tmp_path):
    _, paths = _write_toy(tmp_path)
    lines = paths[1].read_text().splitlines()
    lines[2] = "nan," + lines[2].split(",", 1)[1]
    paths[1].write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match="non-finite"):
        load_dataset(*paths, space=isr3d_space())


def test_dataset_header_mismatch(tmp_path):
    _, paths = _write_toy(tmp_path)
    text = paths[0].read_text().replace("fenestration", "porosity")
    paths[0].write_text(text)
    with pytest.raises(DataError, match="does not match"):
        load_dataset(*paths, space=isr3d_space())


def test_dataset_permuted_columns(tmp_path):
    ds, paths = _write_toy(tmp_path)
    names = isr3d_space().names
    perm = [3, 1, 0, 2]
    with open(paths[0], "w") as fh:
        fh.write(",".join(names[j] for j in perm) + "\n")
        for row in ds.X:
            fh.write(",".join(repr(float(row[j])) for j in perm) + "\n")
    notices = []
    back = load_dataset(*paths, space="isr3d", notices=notices)
    np.testing.assert_array_equal(back.X, ds.X)
    assert notices and "reordered" in notices[0]


def test_dataset_validation():
    with pytest.raises(ShapeError):
        Dataset(np.zeros((3, 4)), np.zeros((2, 5)), np.arange(5), isr3d_space())
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 4)), np.full((2, 1), np.nan), [0.0], isr3d_space())
