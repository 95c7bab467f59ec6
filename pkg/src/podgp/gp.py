"""Single-output Gaussian-process regression with an ARD squared-exponential kernel.

Hyperparameters are the signal variance, one lengthscale per input dimension
and an additive Gaussian noise variance. They are fitted by maximizing the
log marginal likelihood with L-BFGS-B in log space, from several random
starting points. The prior mean is zero on standardized targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
from scipy.optimize import minimize
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import ConditioningError, DomainError, FitError, ShapeError

__all__ = [
    "Hyperparameters",
    "GaussianProcess",
    "kernel",
    "kernel_matrix",
    "log_marginal_likelihood",
    "mll_gradient",
    "posterior",
    "fit_gp",
    "JITTER_START",
    "JITTER_MAX",
]

LOG_2PI = math.log(2.0 * math.pi)

JITTER_START = 1e-10
JITTER_MAX = 1e-4

# log-space box for the optimizer, in units of standardized targets and
# unit-box inputs
_LOG_BOUNDS_SIGNAL = (math.log(1e-6), math.log(1e4))
_LOG_BOUNDS_LENGTH = (math.log(1e-3), math.log(1e3))
_NOISE_CEILING = 10.0

_PREDICT_CHUNK = 4096


@dataclass(frozen=True)
class Hyperparameters:
    """Kernel hyperparameters.

    ``signal_variance`` and ``noise_variance`` are variances, not standard
    deviations. The log-space vector used by the optimizer is
    ``[log signal_variance, log lengthscale_1, ..., log lengthscale_d, log noise_variance]``.
    """

    signal_variance: float
    lengthscales: tuple
    noise_variance: float

    def __post_init__(self):
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))

    @property
    def dim(self):
        return len(self.lengthscales)

    def validate(self):
        if not self.signal_variance > 0 or not all(v > 0 for v in self.lengthscales):
            raise DomainError(f"signal variance and lengthscales must be positive: {self}")
        if not self.noise_variance >= 0:
            raise DomainError(f"noise variance must be nonnegative: {self}")
        if not all(map(math.isfinite, (self.signal_variance, self.noise_variance, *self.lengthscales))):
            raise DomainError(f"hyperparameters must be finite: {self}")
        return self

    def to_log(self):
        return np.log(np.array([self.signal_variance, *self.lengthscales, self.noise_variance]))

    @classmethod
    def from_log(cls, theta):
        theta = np.asarray(theta, dtype=float)
        e = np.exp(theta)
        return cls(e[0], tuple(e[1:-1]), e[-1])


def kernel(x, x2, hyper):
    """ARD squared-exponential covariance between two points."""
    hyper.validate()
    x, x2 = np.asarray(x, dtype=float).ravel(), np.asarray(x2, dtype=float).ravel()
    if x.shape != x2.shape or x.size != hyper.dim:
        raise ShapeError(f"points of dimension {x.size} and {x2.size} do not match {hyper.dim} lengthscales")
    r2 = np.sum(((x - x2) / np.asarray(hyper.lengthscales)) ** 2)
    return hyper.signal_variance * math.exp(-0.5 * r2)


def kernel_matrix(X1, X2, hyper):
    """Cross-covariance matrix ``k(X1, X2)`` (noise excluded)."""
    ls = np.asarray(hyper.lengthscales)
    X1, X2 = np.atleast_2d(X1), np.atleast_2d(X2)
    if X1.shape[1] != ls.size or X2.shape[1] != ls.size:
        raise ShapeError(f"inputs have {X1.shape[1]}/{X2.shape[1]} columns, kernel has {ls.size} lengthscales")
    r2 = cdist(X1 / ls, X2 / ls, metric="sqeuclidean")
    return hyper.signal_variance * np.exp(-0.5 * r2)


def _factor(K, hyper):
    """Cholesky factor of ``K + (noise + jitter) I`` with jitter escalation.

    Jitter is proportional to the signal variance: it starts at
    ``JITTER_START * signal_variance`` and grows tenfold per failure up to
    ``JITTER_MAX * signal_variance``. Returns ``(L, jitter)``.
    """
    n = K.shape[0]
    rel = JITTER_START
    while True:
        jitter = rel * hyper.signal_variance
        Ky = K.copy()
        Ky[np.diag_indices(n)] += hyper.noise_variance + jitter
        try:
            return la.cholesky(Ky, lower=True, check_finite=False), jitter
        except la.LinAlgError:
            pass
        if rel >= JITTER_MAX * (1 - 1e-12):
            raise ConditioningError(
                f"K + noise*I is not positive definite even with jitter {jitter:.3g} (hyperparameters {hyper})"
            )
        rel *= 10.0


def _check_xy(X, y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise ShapeError(f"X has {X.shape[0]} rows but y has {y.size} entries")
    if y.size < 2:
        raise ShapeError("need at least two training points")
    return X, y


def _mll_parts(X, y, hyper, want_grad):
    K = kernel_matrix(X, X, hyper)
    L, jitter = _factor(K, hyper)
    alpha = la.cho_solve((L, True), y, check_finite=False)
    n = y.size
    mll = -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI
    if not want_grad:
        return mll, None
    Kinv = la.cho_solve((L, True), np.eye(n), check_finite=False)
    W = np.outer(alpha, alpha) - Kinv
    grad = np.empty(hyper.dim + 2)
    # jitter scales with the signal variance, so it belongs to this derivative
    grad[0] = 0.5 * (np.sum(W * K) + jitter * np.trace(W))
    for j, ell in enumerate(hyper.lengthscales):
        D = (X[:, j, None] - X[None, :, j]) ** 2 / ell**2
        grad[1 + j] = 0.5 * np.sum(W * K * D)
    grad[-1] = 0.5 * hyper.noise_variance * np.trace(W)
    return mll, grad


def log_marginal_likelihood(X, y, hyper):
    """Log marginal likelihood of targets ``y`` at inputs ``X``.

    The log-determinant is taken from the Cholesky factor as
    ``2 * sum(log(diag(L)))``.
    """
    X, y = _check_xy(X, y)
    hyper.validate()
    return float(_mll_parts(X, y, hyper, False)[0])


def mll_gradient(X, y, hyper):
    """Gradient of the log marginal likelihood with respect to log-hyperparameters.

    Ordering follows :meth:`Hyperparameters.to_log`.
    """
    X, y = _check_xy(X, y)
    hyper.validate()
    return _mll_parts(X, y, hyper, True)[1]


def posterior(X, y, hyper, Xstar, return_var=True):
    """Predictive mean and latent variance at ``Xstar`` given raw targets ``y``."""
    X, y = _check_xy(X, y)
    hyper.validate()
    L, _ = _factor(kernel_matrix(X, X, hyper), hyper)
    alpha = la.cho_solve((L, True), y, check_finite=False)
    return _predict_from_factor(X, L, alpha, hyper, np.atleast_2d(Xstar), return_var)


def _predict_from_factor(X, L, alpha, hyper, Xstar, return_var):
    if Xstar.shape[1] != X.shape[1]:
        raise ShapeError(f"query points have {Xstar.shape[1]} columns, model was trained on {X.shape[1]}")
    m = Xstar.shape[0]
    mean = np.empty(m)
    var = np.empty(m) if return_var else None
    for start in range(0, m, _PREDICT_CHUNK):
        sl = slice(start, min(start + _PREDICT_CHUNK, m))
        Ks = kernel_matrix(Xstar[sl], X, hyper)
        mean[sl] = Ks @ alpha
        if return_var:
            v = la.solve_triangular(L, Ks.T, lower=True, check_finite=False)
            var[sl] = np.maximum(hyper.signal_variance - np.sum(v * v, axis=0), 0.0)
    return mean, var


def _newton_polish(objective, theta, bounds, max_steps=8, gtol=1e-9):
    """Refine an L-BFGS-B solution with Newton steps on the unconstrained coordinates.

    L-BFGS-B tends to stop on a failed line search once the objective stops
    changing in floating point, leaving gradients around 1e-5. The Hessian is
    taken by central differences of the analytic gradient.
    """
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    f, g = objective(theta)
    for _ in range(max_steps):
        free = (theta > lo + 1e-8) & (theta < hi - 1e-8)
        if not free.any() or np.max(np.abs(g[free])) < gtol:
            break
        idx = np.flatnonzero(free)
        h = 1e-5
        H = np.empty((idx.size, idx.size))
        try:
            for a, i in enumerate(idx):
                e = np.zeros_like(theta)
                e[i] = h
                H[:, a] = (objective(theta + e)[1][idx] - objective(theta - e)[1][idx]) / (2 * h)
            H = 0.5 * (H + H.T)
            step = -np.linalg.solve(H, g[idx])
        except (ConditioningError, np.linalg.LinAlgError):
            break
        if np.any(np.linalg.eigvalsh(H) <= 0):
            break
        cand = theta.copy()
        cand[idx] = np.clip(theta[idx] + step, lo[idx], hi[idx])
        try:
            fc, gc = objective(cand)
        except ConditioningError:
            break
        if not (fc <= f + 1e-10 * max(1.0, abs(f))) or np.max(np.abs(gc[idx])) >= np.max(np.abs(g[idx])):
            break
        theta, f, g = cand, fc, gc
    return theta


class GaussianProcess(RegressorMixin, BaseEstimator):
    """Gaussian-process regressor with ARD-RBF kernel and fitted noise.

    Parameters
    ----------
    n_restarts : int, default 10
        Number of optimizer runs from random log-uniform starting points.
    noise_floor : float, default 1e-8
        Lower bound on the noise variance, relative to the target variance.
    max_iters : int, default 500
        Iteration cap per optimizer run.
    random_state : int, default 0
        Seed for the starting points.
    standardize : bool, default True
        Shift and scale targets to zero mean, unit variance before fitting.

    Attributes
    ----------
    hyper_ : Hyperparameters
        Fitted hyperparameters in standardized-target units.
    X_train_, y_train_ : ndarray
        Training inputs and standardized targets.
    L_ : ndarray
        Lower Cholesky factor of ``K + (noise + jitter) I``.
    alpha_ : ndarray
        ``(K + noise I)^{-1} y_train_``.
    y_shift_, y_scale_ : float
    log_marginal_likelihood_value_ : float
    noise_variance_ : float
        Noise variance in original target units.
    """

    def __init__(self, n_restarts=10, noise_floor=1e-8, max_iters=500, random_state=0, standardize=True):
        self.n_restarts = n_restarts
        self.noise_floor = noise_floor
        self.max_iters = max_iters
        self.random_state = random_state
        self.standardize = standardize

    def _initial_points(self, d):
        rng = np.random.default_rng(self.random_state)
        pts = []
        for _ in range(max(1, int(self.n_restarts))):
            log_sf2 = rng.uniform(math.log(0.1), math.log(10.0))
            log_ls = rng.uniform(math.log(0.05), math.log(2.0), size=d)
            log_sn2 = rng.uniform(math.log(1e-6), math.log(1e-2))
            pts.append(np.concatenate([[log_sf2], log_ls, [max(log_sn2, math.log(self.noise_floor))]]))
        return pts

    def _bounds(self, d):
        return [_LOG_BOUNDS_SIGNAL] + [_LOG_BOUNDS_LENGTH] * d + [(math.log(self.noise_floor), math.log(_NOISE_CEILING))]

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        if X.shape[0] < 2:
            raise ShapeError("need at least two training points")
        if not self.noise_floor > 0:
            raise ValueError("noise_floor must be positive")
        shift, scale = 0.0, 1.0
        if self.standardize:
            shift = float(np.mean(y))
            scale = float(np.std(y))
            if not scale > 1e-12 * max(1.0, abs(shift)):
                scale = 1.0
        ys = (y - shift) / scale
        d = X.shape[1]

        def objective(theta):
            mll, grad = _mll_parts(X, ys, Hyperparameters.from_log(theta), True)
            return -mll, -grad

        best, failures = None, []
        bounds = self._bounds(d)
        for i, theta0 in enumerate(self._initial_points(d)):
            try:
                res = minimize(
                    objective,
                    theta0,
                    jac=True,
                    method="L-BFGS-B",
                    bounds=bounds,
                    options={"maxiter": int(self.max_iters), "gtol": 1e-9, "ftol": 1e-15, "maxcor": 20},
                )
            except (ConditioningError, la.LinAlgError, FloatingPointError, ValueError) as exc:
                failures.append(f"restart {i}: {exc}")
                continue
            if not np.isfinite(res.fun):
                failures.append(f"restart {i}: non-finite objective ({res.message})")
                continue
            if best is None or res.fun < best.fun:
                best = res
        if best is None:
            raise FitError(f"all {len(failures)} optimizer restarts failed", failures)

        theta = _newton_polish(objective, best.x, bounds)
        fun = objective(theta)[0]
        hyper = Hyperparameters.from_log(theta)
        K = kernel_matrix(X, X, hyper)
        L, jitter = _factor(K, hyper)
        self.hyper_ = hyper
        self.jitter_ = jitter
        self.X_train_ = X
        self.y_train_ = ys
        self.L_ = L
        self.alpha_ = la.cho_solve((L, True), ys, check_finite=False)
        self.y_shift_ = shift
        self.y_scale_ = scale
        self.log_marginal_likelihood_value_ = -float(fun)
        self.optimizer_result_ = best
        self.n_failed_restarts_ = len(failures)
        self.n_features_in_ = d
        return self

    @classmethod
    def from_state(cls, hyper, X_train, y_train, L, alpha, y_shift, y_scale, **params):
        """Rebuild a fitted model from stored arrays without refactoring."""
        gp = cls(**params)
        gp.hyper_ = hyper
        gp.X_train_ = np.asarray(X_train, dtype=float)
        gp.y_train_ = np.asarray(y_train, dtype=float)
        gp.L_ = np.asarray(L, dtype=float)
        gp.alpha_ = np.asarray(alpha, dtype=float)
        gp.y_shift_ = float(y_shift)
        gp.y_scale_ = float(y_scale)
        gp.n_features_in_ = gp.X_train_.shape[1]
        return gp

    @property
    def noise_variance_(self):
        return self.hyper_.noise_variance * self.y_scale_**2

    @property
    def signal_variance_(self):
        return self.hyper_.signal_variance * self.y_scale_**2

    def predict(self, X, return_std=False, return_var=False):
        """Predictive mean, optionally with latent standard deviation or variance."""
        check_is_fitted(self, "alpha_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.X_train_.shape[1]:
            raise ShapeError(f"model expects {self.X_train_.shape[1]} input columns, got {X.shape[1]}")
        want = return_std or return_var
        mean, var = _predict_from_factor(self.X_train_, self.L_, self.alpha_, self.hyper_, X, want)
        mean = mean * self.y_scale_ + self.y_shift_
        if not want:
            return mean
        var = var * self.y_scale_**2
        return (mean, np.sqrt(var)) if return_std else (mean, var)

    def log_marginal_likelihood(self, hyper=None):
        check_is_fitted(self, "alpha_")
        return log_marginal_likelihood(self.X_train_, self.y_train_, hyper or self.hyper_)


def fit_gp(X, y, restarts=10, seed=0, noise_floor=1e-8, max_iters=500):
    """Functional wrapper around :class:`GaussianProcess`."""
    return GaussianProcess(n_restarts=restarts, noise_floor=noise_floor, max_iters=max_iters, random_state=seed).fit(X, y)
