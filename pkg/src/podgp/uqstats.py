"""Summary statistics of output ensembles from forward uncertainty propagation.

Ensembles are ``N x N_t`` arrays, one sampled trajectory per row. Quantiles
use linear interpolation of the empirical CDF (Hyndman-Fan type 7) and the
``p%`` band is central, spanning the ``(100-p)/2`` and ``(100+p)/2``
percentiles.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import gaussian_kde

from .exceptions import DegenerateInputError, InsufficientDataError, ShapeError

__all__ = [
    "UqSummary",
    "ExceedanceReport",
    "BAND_LEVELS",
    "summarize",
    "empirical_pdf",
    "histogram_density",
    "kde_density",
    "exceedance",
    "report_indices",
    "write_summary_table",
]

BAND_LEVELS = (50, 75, 95)


def _ensemble(ensemble):
    E = np.asarray(ensemble, dtype=float)
    if E.ndim == 1:
        E = E[:, None]
    if E.ndim != 2:
        raise ShapeError(f"ensemble must be N x N_t, got shape {E.shape}")
    return E


def _time_grid(time_grid, n_t):
    t = np.arange(n_t, dtype=float) if time_grid is None else np.asarray(time_grid, dtype=float).ravel()
    if t.size != n_t:
        raise ShapeError(f"time grid has {t.size} entries, ensemble has {n_t} columns")
    return t


@dataclass
class UqSummary:
    """Per-time-step mean, SD, CV and central percentile bands.

    ``cv`` is NaN and ``cv_defined`` False where the mean is too close to
    zero for the ratio to mean anything.
    """

    time_grid: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    cv: np.ndarray
    cv_defined: np.ndarray
    bands: dict
    sample_count: int

    def to_csv(self, path):
        """Long format: time, statistic, value."""
        stats = [("mean", self.mean), ("sd", self.sd), ("cv", self.cv)]
        for level in sorted(self.bands):
            lo, hi = self.bands[level]
            stats += [(f"p{level}_lower", lo), (f"p{level}_upper", hi)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "statistic", "value"])
            for j, t in enumerate(self.time_grid):
                for name, vals in stats:
                    w.writerow([repr(float(t)), name, repr(float(vals[j]))])


@dataclass
class ExceedanceReport:
    """Fraction of trajectories beyond a threshold at each time step.

    ``exceeding_inputs`` holds the input rows whose trajectory is beyond the
    threshold at some step, and ``first_time`` the earliest such time.
    """

    threshold: float
    direction: str
    time_grid: np.ndarray
    fraction: np.ndarray
    exceeding_index: np.ndarray
    exceeding_inputs: np.ndarray
    first_time: np.ndarray
    names: tuple = field(default_factory=tuple)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "statistic", "value"])
            for t, f in zip(self.time_grid, self.fraction):
                w.writerow([repr(float(t)), "exceedance_fraction", repr(float(f))])

    def samples_to_csv(self, path):
        """One row per exceeding sample: its index, inputs and first exceedance time."""
        names = self.names or tuple(f"x{i + 1}" for i in range(self.exceeding_inputs.shape[1]))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample", *names, "first_time"])
            for i, x, t in zip(self.exceeding_index, self.exceeding_inputs, self.first_time):
                w.writerow([int(i), *(repr(float(v)) for v in x), repr(float(t))])


def summarize(ensemble, time_grid=None, levels=BAND_LEVELS):
    """Mean, sample SD (divisor N-1), CV and central percentile bands.

    Raises
    ------
    InsufficientDataError
        Fewer than two samples.
    """
    E = _ensemble(ensemble)
    if E.shape[0] < 2:
        raise InsufficientDataError("summary statistics need at least two samples")
    t = _time_grid(time_grid, E.shape[1])
    mean = E.mean(axis=0)
    sd = E.std(axis=0, ddof=1)
    scale = np.max(np.abs(E), axis=0)
    cv_defined = np.abs(mean) >= 1e-12 * scale
    cv_defined &= scale > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        cv = np.where(cv_defined, sd / np.abs(mean), np.nan)
    bands = {}
    for level in sorted(levels):
        q = np.percentile(E, [(100 - level) / 2, (100 + level) / 2], axis=0, method="linear")
        bands[int(level)] = (q[0], q[1])
    return UqSummary(t, mean, sd, cv, cv_defined, bands, E.shape[0])


def _samples(samples):
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise InsufficientDataError("a density estimate needs at least two samples")
    if not np.all(np.isfinite(x)):
        raise DegenerateInputError("samples contain non-finite values")
    return x


def histogram_density(samples, bins=30):
    """Normalized histogram ``(edges, density)``.

    Zero-spread samples give one unit-width bin centred on the common value.
    """
    x = _samples(samples)
    if x.min() == x.max():
        return np.array([x[0] - 0.5, x[0] + 0.5]), np.array([1.0])
    density, edges = np.histogram(x, bins=bins, density=True)
    return edges, density


def kde_density(samples, bandwidth="silverman", grid_size=512):
    """Gaussian kernel density estimate ``(grid, density)``.

    The grid spans the data range padded by four bandwidths on each side.
    ``bandwidth`` is a rule name or a factor accepted by
    :class:`scipy.stats.gaussian_kde`.
    """
    x = _samples(samples)
    if x.min() == x.max():
        raise DegenerateInputError("all samples are identical; a kernel density estimate is undefined")
    kde = gaussian_kde(x, bw_method=bandwidth)
    h = float(np.sqrt(kde.covariance[0, 0]))
    grid = np.linspace(x.min() - 4 * h, x.max() + 4 * h, int(grid_size))
    return grid, kde(grid)


def empirical_pdf(samples, bins=30, bandwidth="silverman", grid_size=512):
    """Histogram and kernel density estimate of one time step's samples.

    Returns
    -------
    (edges, density), (grid, kde_density)
    """
    return histogram_density(samples, bins), kde_density(samples, bandwidth, grid_size)


def exceedance(ensemble, inputs, threshold, direction="above", time_grid=None, names=()):
    """Fraction of trajectories strictly beyond ``threshold`` per time step.

    Parameters
    ----------
    ensemble : array of shape (N, N_t)
    inputs : array of shape (N, d)
    threshold : float
    direction : {"above", "below"}
    """
    E = _ensemble(ensemble)
    X = np.asarray(inputs, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != E.shape[0]:
        raise ShapeError(f"{X.shape[0]} input rows but {E.shape[0]} trajectories")
    if direction == "above":
        hit = E > threshold
    elif direction == "below":
        hit = E < threshold
    else:
        raise ValueError(f"direction must be 'above' or 'below', got {direction!r}")
    t = _time_grid(time_grid, E.shape[1])
    ever = hit.any(axis=1)
    idx = np.flatnonzero(ever)
    first = t[np.argmax(hit[idx], axis=1)] if idx.size else np.empty(0)
    return ExceedanceReport(float(threshold), direction, t, hit.mean(axis=0), idx, X[idx], first, tuple(names))


def report_indices(time_grid, days):
    """Column indices of ``days`` in ``time_grid``; raises ValueError if any is absent."""
    t = np.asarray(time_grid, dtype=float)
    out = []
    for d in days:
        hit = np.flatnonzero(np.isclose(t, float(d), rtol=0, atol=1e-9))
        if hit.size == 0:
            raise ValueError(f"report day {d} is not on the time grid [{t.min()}, {t.max()}]")
        out.append(int(hit[0]))
    return out


def write_summary_table(summary, days, exceedances=(), label="QoI", fh=None):
    """Plain-text table of mean, SD, CV (%) and exceedance (%) at ``days``.

    Returns the text; also writes it to ``fh`` when given.
    """
    cols = report_indices(summary.time_grid, days)
    width = 10
    head = f"{label:<22}" + "".join(f"{'day ' + format(d, 'g'):>{width}}" for d in days)
    lines = [head, "-" * len(head)]

    def row(name, vals, fmt):
        return f"{name:<22}" + "".join(f"{format(v, fmt) if np.isfinite(v) else 'n/a':>{width}}" for v in vals)

    lines.append(row("Mean", summary.mean[cols], ".3f"))
    lines.append(row("SD", summary.sd[cols], ".3f"))
    lines.append(row("CV (%)", 100 * summary.cv[cols], ".1f"))
    for rep in exceedances:
        sign = ">" if rep.direction == "above" else "<"
        lines.append(row(f"Exceed {sign}{rep.threshold:g} (%)", 100 * rep.fraction[cols], ".1f"))
    text = "\n".join(lines) + "\n"
    if fh is not None:
        fh.write(text)
    return text
