"""Proper orthogonal decomposition of response snapshots.

Responses are stored one per row (scikit-learn convention, ``n_samples x
n_timesteps``); the snapshot matrix proper has them as columns. No mean is
subtracted before the SVD.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import scipy.linalg as la
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DataError, DegenerateInputError, ShapeError

__all__ = [
    "PODBasis",
    "build_snapshot_matrix",
    "compute_pod",
    "relative_energy",
    "select_rank",
    "project",
    "reconstruct",
]

# singular values below this fraction of sigma_1 are treated as zero
RANK_TOL = 1e-12


def build_snapshot_matrix(responses):
    """Stack response vectors as the columns of an ``N_t x N_s`` matrix."""
    if isinstance(responses, np.ndarray) and responses.ndim == 2:
        cols = list(responses)
    else:
        cols = [np.asarray(r, dtype=float).ravel() for r in responses]
    if not cols:
        raise ShapeError("need at least one response")
    lengths = {len(c) for c in cols}
    if len(lengths) != 1:
        bad = next(i for i, c in enumerate(cols) if len(c) != len(cols[0]))
        raise ShapeError(f"ragged responses: response {bad} has length {len(cols[bad])}, expected {len(cols[0])}")
    S = np.column_stack(cols).astype(float)
    if S.shape[0] < 1:
        raise ShapeError("responses must have at least one entry")
    if not np.all(np.isfinite(S)):
        col = int(np.where(~np.all(np.isfinite(S), axis=0))[0][0])
        raise DataError(f"response {col} contains non-finite values")
    return S


def relative_energy(singular_values, k):
    """Fraction of squared singular values carried by the first ``k`` modes."""
    s = np.asarray(singular_values, dtype=float)
    k = int(k)
    if not 1 <= k <= s.size:
        raise ValueError(f"k must lie in [1, {s.size}], got {k}")
    sq = s**2
    total = sq.sum()
    if total <= 0:
        raise DegenerateInputError("all singular values are zero; relative energy undefined")
    return float(sq[:k].sum() / total)


def select_rank(singular_values, threshold):
    """Smallest k whose relative energy reaches ``threshold``.

    Modes past the numerical rank are never selected, even if floating-point
    round-off keeps the cumulative energy a hair below a threshold of 1.
    """
    s = np.asarray(singular_values, dtype=float)
    sq = s**2
    total = sq.sum()
    if total <= 0:
        raise DegenerateInputError("all singular values are zero; relative energy undefined")
    numrank = int(np.sum(s > RANK_TOL * s[0]))
    cum = np.cumsum(sq) / total
    k = int(np.searchsorted(cum, threshold, side="left")) + 1
    return max(1, min(k, numrank))


def _svd_direct(S):
    U, s, _ = la.svd(S, full_matrices=False, lapack_driver="gesdd")
    return U, s


def _svd_snapshots(S):
    # method of snapshots: eigen-decompose the N_s x N_s correlation matrix
    C = S.T @ S
    w, V = la.eigh(C)
    order = np.argsort(w)[::-1]
    w, V = np.clip(w[order], 0.0, None), V[:, order]
    s = np.sqrt(w)
    keep = s > RANK_TOL * max(s[0], np.finfo(float).tiny)
    U = np.zeros((S.shape[0], s.size))
    U[:, keep] = (S @ V[:, keep]) / s[keep]
    return U, s


class PODBasis(TransformerMixin, BaseEstimator):
    """Truncated POD basis chosen by a relative-energy threshold.

    Parameters
    ----------
    energy_threshold : float in (0, 1], default 0.999
        Retain the fewest modes whose relative energy reaches this value.
    method : {"auto", "svd", "snapshots"}, default "auto"
        ``"svd"`` takes a thin SVD of the snapshot matrix, ``"snapshots"``
        eigen-decomposes ``S^T S``. ``"auto"`` uses the latter when the
        response length exceeds four times the snapshot count.

    Attributes
    ----------
    basis_ : ndarray of shape (n_timesteps, n_components_)
        Orthonormal modes, one per column.
    singular_values_ : ndarray of shape (n_snapshots,)
    n_components_ : int
    energy_ : float
        Relative energy actually captured.
    """

    def __init__(self, energy_threshold=0.999, method="auto"):
        self.energy_threshold = energy_threshold
        self.method = method

    def fit(self, Y, y=None):
        """Fit on responses ``Y`` of shape (n_snapshots, n_timesteps)."""
        thr = float(self.energy_threshold)
        if not 0.0 < thr <= 1.0:
            raise ValueError(f"energy_threshold must lie in (0, 1], got {thr}")
        S = build_snapshot_matrix(np.atleast_2d(np.asarray(Y, dtype=float)))
        if not np.any(S):
            raise DegenerateInputError("snapshot matrix is identically zero")
        method = self.method
        if method == "auto":
            method = "snapshots" if S.shape[0] > 4 * S.shape[1] else "svd"
        if method == "svd":
            U, s = _svd_direct(S)
        elif method == "snapshots":
            U, s = _svd_snapshots(S)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        k = select_rank(s, thr)
        self.basis_ = np.ascontiguousarray(U[:, :k])
        self.singular_values_ = s
        self.n_components_ = k
        self.energy_ = relative_energy(s, k)
        self.n_features_in_ = S.shape[0]
        self.n_snapshots_ = S.shape[1]
        return self

    def transform(self, Y):
        """Projection coefficients, shape (n_samples, n_components_)."""
        check_is_fitted(self, "basis_")
        Y = np.asarray(Y, dtype=float)
        single = Y.ndim == 1
        Y = np.atleast_2d(Y)
        if Y.shape[1] != self.basis_.shape[0]:
            raise ShapeError(f"response length {Y.shape[1]} does not match basis length {self.basis_.shape[0]}")
        A = Y @ self.basis_
        return A[0] if single else A

    def inverse_transform(self, A):
        """Reconstruct responses from coefficients."""
        check_is_fitted(self, "basis_")
        A = np.asarray(A, dtype=float)
        single = A.ndim == 1
        A = np.atleast_2d(A)
        if A.shape[1] != self.n_components_:
            raise ShapeError(f"expected {self.n_components_} coefficients, got {A.shape[1]}")
        Y = A @ self.basis_.T
        return Y[0] if single else Y

    def projection_residual(self, Y):
        """Per-response squared residual of the orthogonal projection."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        R = Y - self.inverse_transform(self.transform(Y))
        return np.sum(R**2, axis=1)

    def to_csv(self, directory):
        """Write ``singular_values.csv`` and ``basis.csv`` for inspection."""
        check_is_fitted(self, "basis_")
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "singular_values.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "singular_value", "cumulative_energy", "retained"])
            cum = np.cumsum(self.singular_values_**2) / np.sum(self.singular_values_**2)
            for i, (s, c) in enumerate(zip(self.singular_values_, cum), start=1):
                w.writerow([i, repr(float(s)), repr(float(c)), int(i <= self.n_components_)])
        with open(directory / "basis.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"phi_{j + 1}" for j in range(self.n_components_)])
            for row in self.basis_:
                w.writerow([repr(float(v)) for v in row])


def compute_pod(S, energy_threshold=0.999, method="auto"):
    """POD of a snapshot matrix given with responses as columns."""
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    return PODBasis(energy_threshold, method).fit(S.T)


def project(basis, y):
    return basis.transform(y)


def reconstruct(basis, alpha):
    return basis.inverse_transform(alpha)
