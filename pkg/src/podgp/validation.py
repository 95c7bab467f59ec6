"""Cross-validation of POD truncation and of the full POD+GP surrogate.

The error of one held-out response ``y`` with approximation ``y_hat`` is the
relative L2 norm ``||y - y_hat|| / ||y||``. Per fold, both the sum over the
held-out set and its per-sample mean are recorded. The mean is the headline
figure; the sum is kept for completeness.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .exceptions import ConfigError, DegenerateInputError, ShapeError
from .pod import PODBasis
from .surrogate import PodGpSurrogate

__all__ = [
    "CvReport",
    "SweepResult",
    "relative_l2_errors",
    "cross_validate",
    "pod_snapshot_sweep",
    "fold_indices",
]


def relative_l2_errors(Y, Y_hat):
    """Per-row ``||y - y_hat|| / ||y||``."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    Y_hat = np.atleast_2d(np.asarray(Y_hat, dtype=float))
    if Y.shape != Y_hat.shape:
        raise ShapeError(f"shape mismatch {Y.shape} vs {Y_hat.shape}")
    norm = np.linalg.norm(Y, axis=1)
    if np.any(norm == 0):
        raise DegenerateInputError(f"response {int(np.flatnonzero(norm == 0)[0])} is zero; relative error undefined")
    return np.linalg.norm(Y - Y_hat, axis=1) / norm


def fold_indices(n, folds, rng):
    """Shuffle ``0..n-1`` and split into ``folds`` parts whose sizes differ by at most one."""
    return np.array_split(rng.permutation(n), folds)


def _sd(values):
    values = np.asarray(values, dtype=float)
    return float(values.std(ddof=1)) if values.size > 1 else 0.0


@dataclass
class CvReport:
    """Outcome of repeated k-fold cross-validation.

    ``e_*_mean`` and ``e_*_sd`` are taken over all fold x repetition
    records of the per-sample mean error. ``e_*_sum_mean`` averages the
    per-fold summed errors.
    """

    folds: int
    repetitions: int
    e_pod_mean: float
    e_pod_sd: float
    e_gp_mean: float
    e_gp_sd: float
    e_pod_sum_mean: float
    e_gp_sum_mean: float
    records: list = field(default_factory=list)

    _COLUMNS = ("repetition", "fold", "n_test", "n_components", "e_pod", "e_gp", "e_pod_sum", "e_gp_sum")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self._COLUMNS)
            for r in self.records:
                w.writerow([r[c] if isinstance(r[c], int) else repr(float(r[c])) for c in self._COLUMNS])

    def to_text(self):
        lines = [
            f"{self.folds}-fold cross-validation, {self.repetitions} repetition(s), {len(self.records)} folds total",
            f"{'metric':<8}{'mean (%)':>12}{'sd (%)':>12}{'sum/fold':>12}",
            f"{'e_POD':<8}{100 * self.e_pod_mean:>12.4f}{100 * self.e_pod_sd:>12.4f}{self.e_pod_sum_mean:>12.5f}",
            f"{'e_GP':<8}{100 * self.e_gp_mean:>12.4f}{100 * self.e_gp_sd:>12.4f}{self.e_gp_sum_mean:>12.5f}",
        ]
        return "\n".join(lines) + "\n"


def _run_fold(X, Y, train, test, params, rep, fold):
    model = PodGpSurrogate(**params).fit(X[train], Y[train])
    Yt = Y[test]
    e_pod = relative_l2_errors(Yt, model.basis_.inverse_transform(model.basis_.transform(Yt)))
    e_gp = relative_l2_errors(Yt, model.predict(X[test]))
    return {
        "repetition": rep,
        "fold": fold,
        "n_test": int(len(test)),
        "n_components": int(model.n_components_),
        "e_pod": float(e_pod.mean()),
        "e_gp": float(e_gp.mean()),
        "e_pod_sum": float(e_pod.sum()),
        "e_gp_sum": float(e_gp.sum()),
    }


def cross_validate(X, Y, folds=4, repetitions=1, config=None, seed=0, n_jobs=None):
    """Repeated k-fold cross-validation of a :class:`PodGpSurrogate`.

    Parameters
    ----------
    X : array of shape (N, d)
    Y : array of shape (N, N_t)
    folds : int, default 4
    repetitions : int, default 1
        Each repetition reshuffles the fold assignment.
    config : dict, optional
        Keyword arguments for :class:`PodGpSurrogate`. ``random_state``
        defaults to ``seed``.
    seed : int, default 0
    n_jobs : int, optional
        Folds run in parallel with this many workers. Results do not depend
        on it.

    Returns
    -------
    CvReport
    """
    X = np.asarray(getattr(X, "points", X), dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ShapeError(f"inputs {X.shape} and responses {Y.shape} do not pair up")
    folds, repetitions = int(folds), int(repetitions)
    if folds < 2:
        raise ConfigError("folds must be at least 2")
    if folds > len(Y):
        raise ConfigError(f"{folds} folds requested but only {len(Y)} runs available")
    if repetitions < 1:
        raise ConfigError("repetitions must be at least 1")
    params = dict(config or {})
    params.setdefault("random_state", seed)
    params.pop("n_jobs", None)

    tasks = []
    for rep in range(repetitions):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), rep]))
        parts = fold_indices(len(Y), folds, rng)
        for f, test in enumerate(parts):
            train = np.sort(np.concatenate([p for g, p in enumerate(parts) if g != f]))
            tasks.append(delayed(_run_fold)(X, Y, train, np.sort(test), params, rep, f))
    if n_jobs in (None, 1):
        records = [fn(*a, **kw) for fn, a, kw in tasks]
    else:
        records = Parallel(n_jobs=n_jobs)(tasks)

    pod = [r["e_pod"] for r in records]
    gp = [r["e_gp"] for r in records]
    return CvReport(
        folds=folds,
        repetitions=repetitions,
        e_pod_mean=float(np.mean(pod)),
        e_pod_sd=_sd(pod),
        e_gp_mean=float(np.mean(gp)),
        e_gp_sd=_sd(gp),
        e_pod_sum_mean=float(np.mean([r["e_pod_sum"] for r in records])),
        e_gp_sum_mean=float(np.mean([r["e_gp_sum"] for r in records])),
        records=records,
    )


@dataclass
class SweepResult:
    counts: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    repetitions: int

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["count", "mean", "sd"])
            for c, m, s in zip(self.counts, self.mean, self.sd):
                w.writerow([int(c), repr(float(m)), repr(float(s))])


def pod_snapshot_sweep(Y, counts, threshold=0.999, repetitions=10, seed=0, method="auto"):
    """POD truncation error as a function of the number of snapshots.

    For each count and repetition a random snapshot subset builds the basis,
    and the per-sample mean relative L2 projection error is measured on the
    remaining responses (on all responses when the subset is everything).
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    counts = np.asarray([int(c) for c in counts])
    if counts.size == 0 or counts.min() < 1 or counts.max() > len(Y):
        raise ConfigError(f"snapshot counts must lie in [1, {len(Y)}]")
    if int(repetitions) < 1:
        raise ConfigError("repetitions must be at least 1")
    means, sds = [], []
    for i, c in enumerate(counts):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), i]))
        errs = []
        for _ in range(int(repetitions)):
            idx = rng.choice(len(Y), c, replace=False)
            basis = PODBasis(threshold, method).fit(Y[idx])
            rest = np.setdiff1d(np.arange(len(Y)), idx)
            Ye = Y[rest] if rest.size else Y
            errs.append(relative_l2_errors(Ye, basis.inverse_transform(basis.transform(Ye))).mean())
        means.append(float(np.mean(errs)))
        sds.append(_sd(errs))
    return SweepResult(counts, np.array(means), np.array(sds), int(repetitions))
