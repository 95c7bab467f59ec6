import csv
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DATA
from podgp.design import (
    MAX_SOBOL_DIM,
    DesignMatrix,
    ParameterSpace,
    isr3d_space,
    load_space,
    normalize_to_unit,
    read_design_csv,
    saltelli_design,
    scale_to_space,
    sobol_points,
    write_design_csv,
)
from podgp.exceptions import ConfigError, DataError, ShapeError, UnsupportedDimensionError
from sobol_reference import reference_sobol


def test_first_point_after_skip():
    assert sobol_points(1, 1, skip=1).tolist() == [[0.5]]


def test_empty_request():
    pts = sobol_points(3, 0, skip=0)
    assert pts.shape == (0, 3)


def test_two_dim_golden():
    with open(DATA / "sobol_2d_golden.csv") as fh:
        rows = list(csv.reader(fh))[1:]
    golden = np.array(rows, dtype=float)
    np.testing.assert_array_equal(sobol_points(2, len(golden), skip=1), golden)
    np.testing.assert_array_equal(sobol_points(2, 4, skip=1), golden[:4])


@pytest.mark.parametrize("dim", [1, 2, 3, 5, 8])
def test_matches_reference_generator(dim):
    np.testing.assert_array_equal(sobol_points(dim, 700, skip=3), reference_sobol(dim, 700, skip=3))


def test_skip_continues_stream():
    full = sobol_points(4, 100, skip=0)
    np.testing.assert_array_equal(sobol_points(4, 60, skip=40), full[40:])


def test_unsupported_dimension():
    with pytest.raises(UnsupportedDimensionError):
        sobol_points(MAX_SOBOL_DIM + 1, 4)


def test_period_exceeded():
    with pytest.raises(ValueError):
        sobol_points(2, 10, skip=2**30)


@pytest.mark.parametrize("dim,m", [(1, 4), (2, 4), (2, 6), (3, 5)])
def test_elementary_intervals_balanced(dim, m):
    # (t, m, s)-net property: every elementary box of volume 2^(t-m) holds
    # exactly 2^t points; t = 0 for d <= 2 and t = 1 for d = 3
    t = 0 if dim <= 2 else 1
    pts = sobol_points(dim, 2**m, skip=0)
    for split in _compositions(m - t, dim):
        idx = np.zeros(len(pts), dtype=np.int64)
        for j, k in enumerate(split):
            idx = idx * 2**k + np.floor(pts[:, j] * 2**k).astype(np.int64)
        counts = np.bincount(idx, minlength=2 ** (m - t))
        assert np.all(counts == 2**t)


def _compositions(m, parts):
    if parts == 1:
        yield (m,)
        return
    for k in range(m + 1):
        for rest in _compositions(m - k, parts - 1):
            yield (k, *rest)


def test_deterministic_across_threads():
    ref = sobol_points(4, 256)
    results = [None] * 4

    def work(i):
        results[i] = sobol_points(4, 256)

    threads = [threading.Thread(target=work, args=(i,)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for r in results:
        np.testing.assert_array_equal(r, ref)


def test_scale_examples():
    space = isr3d_space()
    u = np.array([[0.0, 0.5, 0.0, 0.25]])
    x = scale_to_space(u, space).points[0]
    assert x[1] == pytest.approx(0.266, abs=1e-15)
    assert x[0] == space.lower[0] and x[2] == space.lower[2]
    assert x[3] == 4.0


def test_scale_shape_error():
    with pytest.raises(ShapeError):
        scale_to_space(np.zeros((3, 2)), isr3d_space())


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 20), st.integers(0, 2**31 - 1))
def test_round_trip(d, n, seed):
    r = np.random.default_rng(seed)
    lo = r.uniform(-1e3, 1e3, d)
    hi = lo + r.uniform(1e-3, 1e3, d)
    space = ParameterSpace.from_bounds([f"p{i}" for i in range(d)], np.column_stack([lo, hi]))
    u = r.random((n, d))
    back = normalize_to_unit(scale_to_space(u, space).points, space)
    np.testing.assert_allclose(back, u, rtol=1e-12, atol=1e-12)


def test_table1_space_bundled():
    space = load_space("isr3d")
    assert space.names == ["regeneration_time", "flow_velocity", "threshold_strain", "fenestration"]
    np.testing.assert_array_equal(space.bounds, [[10, 20], [0.133, 0.399], [0.446, 0.785], [2, 10]])
    assert [p.unit for p in space.params] == ["day", "m/s", "1", "%"]


def test_space_validation():
    with pytest.raises(ConfigError):
        ParameterSpace.from_bounds(["a", "a"], [(0, 1), (0, 1)])
    with pytest.raises(ConfigError):
        ParameterSpace.from_bounds(["a"], [(1, 1)])
    with pytest.raises(ConfigError):
        ParameterSpace(())


def test_space_file_round_trip(tmp_path):
    space = isr3d_space()
    p = tmp_path / "space.ini"
    p.write_text(space.to_ini())
    assert load_space(p) == space


def test_space_file_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_space(tmp_path / "missing.ini")
    p = tmp_path / "bad.ini"
    p.write_text("[a]\nmin = 0\n")
    with pytest.raises(ConfigError, match="max"):
        load_space(p)


def test_saltelli_counts():
    des = saltelli_design(isr3d_space(), 1000)
    assert des.n_evaluations == 6000
    assert des.stacked().shape == (6000, 4)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 10), st.integers(2, 40), st.integers(0, 50))
def test_saltelli_structure(d, n, skip):
    space = ParameterSpace.from_bounds([f"x{i}" for i in range(d)], [(0.0, 1.0)] * d)
    des = saltelli_design(space, n, skip)
    assert des.A.shape == des.B.shape == (n, d)
    assert len(des.AB) == d
    for i, ab in enumerate(des.AB):
        np.testing.assert_array_equal(ab[:, i], des.B[:, i])
        others = [j for j in range(d) if j != i]
        np.testing.assert_array_equal(ab[:, others], des.A[:, others])
    base = sobol_points(2 * d, n, skip)
    np.testing.assert_array_equal(des.A, base[:, :d])
    np.testing.assert_array_equal(des.B, base[:, d:])
    f_A, f_B, f_AB = des.split(des.stacked())
    np.testing.assert_array_equal(f_A, des.A)
    np.testing.assert_array_equal(f_B, des.B)


def test_saltelli_needs_two():
    with pytest.raises(ValueError):
        saltelli_design(isr3d_space(), 1)


def test_design_inside_box():
    space = isr3d_space()
    des = scale_to_space(sobol_points(4, 512), space)
    assert space.contains(des.points).all()


def test_design_csv_round_trip(tmp_path):
    space = isr3d_space()
    des = scale_to_space(sobol_points(4, 33), space)
    p = tmp_path / "d.csv"
    write_design_csv(des, p)
    back, reordered = read_design_csv(p, space)
    assert not reordered
    np.testing.assert_array_equal(back.points, des.points)


def test_design_csv_permuted_columns(tmp_path):
    space = isr3d_space()
    des = scale_to_space(sobol_points(4, 5), space)
    perm = [2, 0, 3, 1]
    p = tmp_path / "d.csv"
    with open(p, "w") as fh:
        fh.write(",".join(space.names[j] for j in perm) + "\n")
        for row in des.points:
            fh.write(",".join(repr(float(row[j])) for j in perm) + "\n")
    back, reordered = read_design_csv(p, space)
    assert reordered
    np.testing.assert_array_equal(back.points, des.points)


def test_design_csv_errors(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n3\n")
    with pytest.raises(DataError, match="row 3"):
        read_design_csv(p)
    p.write_text("a,b\n1,nan\n")
    with pytest.raises(DataError, match="non-finite"):
        read_design_csv(p)
    p.write_text("a,b\n1,2\n")
    with pytest.raises(DataError, match="does not match"):
        read_design_csv(p, ParameterSpace.from_bounds(["a", "c"], [(0, 5), (0, 5)]))


def test_design_matrix_shape():
    with pytest.raises(ShapeError):
        DesignMatrix(np.zeros((2, 3)), isr3d_space())
