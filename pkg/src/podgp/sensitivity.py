"""Variance-based global sensitivity analysis with Saltelli designs.

For each output column the first-order partial variance is estimated as
``mean(f_B * (f_AB_i - f_A))`` and the total one with Jansen's form
``mean((f_A - f_AB_i)^2) / 2``. Both are divided by the variance of the
pooled ``f_A`` and ``f_B`` samples. Outputs are centred on the pooled mean
first, which leaves the estimators unchanged in exact arithmetic and makes
them insensitive to a constant offset in floating point.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .design import saltelli_design
from .exceptions import ConfigError, ShapeError

__all__ = [
    "SobolIndices",
    "estimate_sobol",
    "replicated_sobol",
    "interaction_gap",
    "n_base_from_total",
]


@dataclass
class SobolIndices:
    """First-order and total indices, shape (d, N_t), with 95% intervals.

    ``defined[t]`` is False where the output variance vanishes; every index
    at such a step is NaN. ``first_reps`` and ``total_reps`` keep the
    per-replication estimates, shape (R, d, N_t).
    """

    first_order: np.ndarray
    total: np.ndarray
    first_low: np.ndarray
    first_high: np.ndarray
    total_low: np.ndarray
    total_high: np.ndarray
    defined: np.ndarray
    n_base: int
    replications: int
    names: tuple = ()
    time_grid: np.ndarray = None
    first_reps: np.ndarray = None
    total_reps: np.ndarray = None

    @property
    def dim(self):
        return self.first_order.shape[0]

    def to_csv(self, path):
        """Long-format CSV: time, parameter, index_type, estimate, ci_low, ci_high.

        ``index_type`` is one of ``first``, ``total`` and ``interaction_gap``.
        """
        t = self.time_grid if self.time_grid is not None else np.arange(self.first_order.shape[1], dtype=float)
        names = self.names or tuple(f"x{i + 1}" for i in range(self.dim))
        gap = interaction_gap(self)
        gap_reps = self.total_reps - self.first_reps
        gap_low, gap_high = _interval(gap_reps, gap)
        rows = (
            ("first", self.first_order, self.first_low, self.first_high),
            ("total", self.total, self.total_low, self.total_high),
            ("interaction_gap", gap, gap_low, gap_high),
        )
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "parameter", "index_type", "estimate", "ci_low", "ci_high"])
            for j, tj in enumerate(t):
                for i, name in enumerate(names):
                    for kind, est, lo, hi in rows:
                        w.writerow([repr(float(tj)), name, kind, repr(float(est[i, j])),
                                    repr(float(lo[i, j])), repr(float(hi[i, j]))])


def _as_columns(f):
    f = np.asarray(f, dtype=float)
    return f[:, None] if f.ndim == 1 else f


def _single(f_A, f_B, f_AB):
    f_A, f_B = _as_columns(f_A), _as_columns(f_B)
    f_AB = [_as_columns(f) for f in f_AB]
    if f_A.shape != f_B.shape or any(f.shape != f_A.shape for f in f_AB):
        raise ShapeError("f_A, f_B and every f_AB[i] must share one shape")
    if f_A.shape[0] < 2:
        raise ShapeError("need at least two base samples")
    pooled = np.vstack([f_A, f_B])
    centre = pooled.mean(axis=0)
    var = pooled.var(axis=0)
    scale = np.max(np.abs(pooled), axis=0)
    defined = var > (1e-12 * scale) ** 2
    a, b = f_A - centre, f_B - centre
    first = np.empty((len(f_AB), f_A.shape[1]))
    total = np.empty_like(first)
    for i, fab in enumerate(f_AB):
        ab = fab - centre
        first[i] = np.mean(b * (ab - a), axis=0)
        total[i] = 0.5 * np.mean((a - ab) ** 2, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        first = np.where(defined, first / np.where(defined, var, 1.0), np.nan)
        total = np.where(defined, total / np.where(defined, var, 1.0), np.nan)
    return first, total, defined


def _interval(reps, est):
    if reps.shape[0] == 1:
        return est.copy(), est.copy()
    lo, hi = np.percentile(reps, [2.5, 97.5], axis=0)
    return np.fmin(lo, est), np.fmax(hi, est)


def _assemble(first_reps, total_reps, defined, n_base, names=(), time_grid=None):
    first = first_reps.mean(axis=0)
    total = total_reps.mean(axis=0)
    flo, fhi = _interval(first_reps, first)
    tlo, thi = _interval(total_reps, total)
    return SobolIndices(first, total, flo, fhi, tlo, thi, defined, int(n_base), first_reps.shape[0],
                        tuple(names), time_grid, first_reps, total_reps)


def estimate_sobol(f_A, f_B, f_AB, names=(), time_grid=None):
    """Indices from one Saltelli sample.

    Parameters
    ----------
    f_A, f_B : array of shape (N,) or (N, N_t)
        Outputs at the rows of ``A`` and ``B``.
    f_AB : sequence of d arrays like ``f_A``
        Outputs at ``A`` with column ``i`` taken from ``B``.

    Returns
    -------
    SobolIndices
        Confidence bounds collapse onto the estimates.
    """
    first, total, defined = _single(f_A, f_B, f_AB)
    return _assemble(first[None], total[None], defined, _as_columns(f_A).shape[0], names, time_grid)


def _evaluate(model_eval, design):
    out = _as_columns(model_eval(design.stacked()))
    if out.shape[0] != design.n_evaluations:
        raise ShapeError(f"model returned {out.shape[0]} rows for {design.n_evaluations} inputs")
    return design.split(out)


def replicated_sobol(model_eval, space, n_base, replications=1, skip=1, n_jobs=None, time_grid=None):
    """Indices averaged over replications on disjoint pieces of one Sobol' stream.

    Replication ``r`` draws its design with ``skip + r * n_base * 2d``
    points discarded. The point estimate is the replication mean and the
    interval spans the 2.5 and 97.5 percentiles of the replicates, widened
    where needed so that it always contains the estimate.

    Parameters
    ----------
    model_eval : callable
        Maps an ``(M, d)`` array of physical inputs to ``(M,)`` or ``(M, N_t)``
        outputs.
    space : ParameterSpace
    n_base : int
    replications : int, default 1
    skip : int, default 1
    n_jobs : int, optional
        Replications evaluated in parallel. Results do not depend on it.
    """
    replications = int(replications)
    if replications < 1:
        raise ConfigError("replications must be at least 1")
    d = space.dim

    def one(r):
        design = saltelli_design(space, n_base, skip + r * int(n_base) * 2 * d)
        return _single(*_evaluate(model_eval, design))

    if n_jobs in (None, 1):
        results = [one(r) for r in range(replications)]
    else:
        results = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(one)(r) for r in range(replications))
    first = np.stack([r[0] for r in results])
    total = np.stack([r[1] for r in results])
    defined = np.logical_and.reduce([r[2] for r in results])
    return _assemble(first, total, defined, n_base, space.names, time_grid)


def interaction_gap(indices):
    """``S_Ti - S_i`` elementwise; small negative values are left as they are."""
    return indices.total - indices.first_order


def n_base_from_total(n_total, dim):
    """Base sample size giving at most ``n_total`` model evaluations."""
    n = int(n_total) // (int(dim) + 2)
    if n < 2:
        raise ConfigError(f"{n_total} evaluations are too few for a {dim}-dimensional Saltelli design")
    return n
