"""Uncertain-parameter spaces and quasi-Monte Carlo designs.

Points come from the unscrambled Sobol' sequence (Joe-Kuo direction numbers,
Gray-code ordering) and are mapped affinely onto box-shaped parameter spaces
with independent uniform marginals.
"""

from __future__ import annotations

import configparser
import csv
import io
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.stats import qmc

from .exceptions import ConfigError, DataError, ShapeError, UnsupportedDimensionError

__all__ = [
    "Parameter",
    "ParameterSpace",
    "DesignMatrix",
    "SaltelliDesign",
    "MAX_SOBOL_DIM",
    "SOBOL_BITS",
    "sobol_points",
    "scale_to_space",
    "normalize_to_unit",
    "saltelli_design",
    "load_space",
    "isr3d_space",
    "read_design_csv",
    "write_design_csv",
]

MAX_SOBOL_DIM = qmc.Sobol.MAXDIM
SOBOL_BITS = 30


@dataclass(frozen=True)
class Parameter:
    name: str
    min: float
    max: float
    unit: str = ""
    description: str = ""

    @property
    def width(self):
        return self.max - self.min


@dataclass(frozen=True)
class ParameterSpace:
    """Ordered box of named uniform inputs.

    Parameters
    ----------
    params : sequence of Parameter
        Column order of every design built on this space.
    """

    params: tuple = field(default_factory=tuple)

    def __post_init__(self):
        params = tuple(self.params)
        object.__setattr__(self, "params", params)
        if len(params) < 1:
            raise ConfigError("a parameter space needs at least one parameter")
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate parameter names in {names}")
        for p in params:
            if not (np.isfinite(p.min) and np.isfinite(p.max)) or not p.min < p.max:
                raise ConfigError(f"parameter {p.name!r} needs finite min < max, got [{p.min}, {p.max}]")

    @classmethod
    def from_bounds(cls, names, bounds, units=None):
        units = units or [""] * len(names)
        return cls(tuple(Parameter(n, float(lo), float(hi), u) for n, (lo, hi), u in zip(names, bounds, units)))

    @property
    def dim(self):
        return len(self.params)

    @property
    def names(self):
        return [p.name for p in self.params]

    @property
    def lower(self):
        return np.array([p.min for p in self.params], dtype=float)

    @property
    def upper(self):
        return np.array([p.max for p in self.params], dtype=float)

    @property
    def bounds(self):
        return np.column_stack([self.lower, self.upper])

    def contains(self, points, rtol=1e-12):
        """Boolean mask of rows lying inside the box (with a relative slack)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        slack = rtol * (self.upper - self.lower)
        return np.all((points >= self.lower - slack) & (points <= self.upper + slack), axis=1)

    def index(self, name):
        return self.names.index(name)

    def to_ini(self):
        cp = configparser.ConfigParser(interpolation=None)
        for p in self.params:
            cp[p.name] = {"min": repr(p.min), "max": repr(p.max), "unit": p.unit}
            if p.description:
                cp[p.name]["description"] = p.description
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _parse_space(text, source):
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    params = []
    for name in cp.sections():
        sec = cp[name]
        try:
            lo, hi = float(sec["min"]), float(sec["max"])
        except KeyError as exc:
            raise ConfigError(f"{source}: parameter {name!r} is missing key {exc.args[0]!r}") from None
        except ValueError as exc:
            raise ConfigError(f"{source}: parameter {name!r}: {exc}") from None
        params.append(Parameter(name, lo, hi, sec.get("unit", ""), sec.get("description", "")))
    return ParameterSpace(tuple(params))


def load_space(path):
    """Load a ParameterSpace from an INI-style file.

    Each section is one parameter with ``min``, ``max`` and optional ``unit``
    and ``description`` keys. The names ``isr3d`` and ``isr3d_params`` resolve
    to the bundled four-parameter restenosis space.
    """
    if str(path) in ("isr3d", "isr3d_params"):
        return isr3d_space()
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"parameter space file not found: {path}")
    return _parse_space(path.read_text(), str(path))


def isr3d_space():
    text = resources.files("podgp").joinpath("data/isr3d_params.ini").read_text()
    return _parse_space(text, "isr3d_params")


def sobol_points(dim, n, skip=1):
    """Return ``n`` consecutive unscrambled Sobol' points after skipping ``skip``.

    Parameters
    ----------
    dim : int
        Dimension, at most ``MAX_SOBOL_DIM``.
    n : int
        Number of points. ``n == 0`` gives an empty ``(0, dim)`` array.
    skip : int, default 1
        Leading points to discard. The default drops the all-zero first point.

    Returns
    -------
    ndarray of shape (n, dim) in [0, 1)^dim
    """
    dim, n, skip = int(dim), int(n), int(skip)
    if dim < 1:
        raise ValueError("dim must be positive")
    if dim > MAX_SOBOL_DIM:
        raise UnsupportedDimensionError(
            f"dimension {dim} exceeds the direction-number table (max {MAX_SOBOL_DIM})"
        )
    if n < 0 or skip < 0:
        raise ValueError("n and skip must be nonnegative")
    if n + skip > 2**SOBOL_BITS:
        raise ValueError(f"n + skip = {n + skip} exceeds the generator period 2**{SOBOL_BITS}")
    if n == 0:
        return np.empty((0, dim))
    engine = qmc.Sobol(dim, scramble=False, bits=SOBOL_BITS)
    if skip:
        engine.fast_forward(skip)
    with warnings.catch_warnings():
        # balance-property warning for non power-of-two n is irrelevant for
        # contiguous sub-streams
        warnings.simplefilter("ignore", UserWarning)
        return engine.random(n)


@dataclass(frozen=True)
class DesignMatrix:
    """Points in physical units on a ParameterSpace."""

    points: np.ndarray
    space: ParameterSpace

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.space.dim:
            raise ShapeError(f"design must be N x {self.space.dim}, got shape {pts.shape}")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.points if dtype is None else self.points.astype(dtype)

    def to_unit(self):
        return normalize_to_unit(self.points, self.space)


def scale_to_space(unit_points, space):
    """Map points from [0, 1]^d onto ``space`` column by column."""
    u = np.asarray(unit_points, dtype=float)
    if u.ndim == 1 and space.dim == 1:
        u = u[:, None]
    if u.ndim != 2 or u.shape[1] != space.dim:
        raise ShapeError(f"expected N x {space.dim} unit points, got shape {u.shape}")
    lo = space.lower
    return DesignMatrix(lo + u * (space.upper - lo), space)


def normalize_to_unit(points, space):
    """Inverse of :func:`scale_to_space`; returns an ndarray."""
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[None, :] if x.shape[0] == space.dim else x[:, None]
    if x.ndim != 2 or x.shape[1] != space.dim:
        raise ShapeError(f"expected N x {space.dim} points, got shape {x.shape}")
    lo = space.lower
    return (x - lo) / (space.upper - lo)


@dataclass(frozen=True)
class SaltelliDesign:
    """Radial sampling matrices for first-order and total Sobol' indices.

    ``AB[i]`` equals ``A`` with column ``i`` taken from ``B``.
    """

    A: np.ndarray
    B: np.ndarray
    AB: tuple
    space: ParameterSpace

    @property
    def n_base(self):
        return self.A.shape[0]

    @property
    def n_evaluations(self):
        return self.n_base * (self.space.dim + 2)

    def stacked(self):
        """All rows in evaluation order: A, B, AB_1, ..., AB_d."""
        return np.vstack([self.A, self.B, *self.AB])

    def split(self, outputs):
        """Inverse of :meth:`stacked` applied to model outputs."""
        outputs = np.asarray(outputs)
        n, d = self.n_base, self.space.dim
        if outputs.shape[0] != n * (d + 2):
            raise ShapeError(f"expected {n * (d + 2)} output rows, got {outputs.shape[0]}")
        f_A, f_B = outputs[:n], outputs[n : 2 * n]
        f_AB = [outputs[(2 + i) * n : (3 + i) * n] for i in range(d)]
        return f_A, f_B, f_AB


def saltelli_design(space, n_base, skip=1):
    """Build A, B and the d column-substituted AB matrices.

    A and B are the first and last ``d`` columns of one ``2d``-dimensional
    Sobol' stream, so they never share a point.
    """
    n_base = int(n_base)
    if n_base < 2:
        raise ValueError("n_base must be at least 2")
    d = space.dim
    base = sobol_points(2 * d, n_base, skip)
    A = scale_to_space(base[:, :d], space).points
    B = scale_to_space(base[:, d:], space).points
    AB = []
    for i in range(d):
        ab = A.copy()
        ab[:, i] = B[:, i]
        AB.append(ab)
    return SaltelliDesign(A, B, tuple(AB), space)


def write_design_csv(design, path_or_buf):
    """Write a DesignMatrix as CSV with a header row of parameter names."""
    own = isinstance(path_or_buf, (str, Path))
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        w = csv.writer(fh)
        w.writerow(design.space.names)
        for row in design.points:
            w.writerow([repr(float(v)) for v in row])
    finally:
        if own:
            fh.close()


def read_design_csv(path, space=None):
    """Read a design CSV.

    Columns are matched to ``space`` by header name, so a permuted column
    order is accepted. Without a space, one is inferred from the data range.
    Returns ``(DesignMatrix, reordered)`` where ``reordered`` tells whether
    the file order differed from the space order.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"design file not found: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file, expected a header row")
    header = [h.strip() for h in rows[0]]
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: row {lineno} has {len(row)} fields, header has {len(header)}")
        try:
            vals = [float(v) for v in row]
        except ValueError as exc:
            raise DataError(f"{path}: row {lineno}: {exc}") from None
        if not np.all(np.isfinite(vals)):
            raise DataError(f"{path}: row {lineno} contains non-finite values")
        values.append(vals)
    X = np.array(values, dtype=float).reshape(len(values), len(header))
    if space is None:
        if len(X) < 2:
            raise DataError(f"{path}: cannot infer a parameter space from fewer than two rows")
        space = ParameterSpace.from_bounds(header, np.column_stack([X.min(0), X.max(0)]))
        return DesignMatrix(X, space), False
    if sorted(header) != sorted(space.names):
        raise DataError(f"{path}: header {header} does not match parameter names {space.names}")
    order = [header.index(n) for n in space.names]
    reordered = order != list(range(len(order)))
    return DesignMatrix(X[:, order], space), reordered
