"""POD-compressed Gaussian-process surrogate for vector-valued responses.

Training builds a POD basis from a random subset of the training responses,
projects every training response onto it and fits one independent GP per
projection coefficient. Prediction regresses the coefficients and maps them
back through the basis.

Model file layout (all integers little-endian)::

    magic        8 bytes   b"PODGPSM\\0"
    version      uint32
    meta_len     uint64
    metadata     meta_len bytes of UTF-8 JSON
    n_arrays     uint32
    per array:   name_len uint16, name (UTF-8), rows uint64, cols uint64,
                 rows * cols float64 in row-major order
    crc32        uint32 over every preceding byte
"""

from __future__ import annotations

import datetime as _dt
import io
import json
import os
import struct
import warnings
import zlib
from pathlib import Path
from typing import NamedTuple

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .design import Parameter, ParameterSpace, normalize_to_unit
from .exceptions import (
    ConfigError,
    ExtrapolationWarning,
    ModelFormatError,
    ShapeError,
    UnsupportedVersionError,
)
from .gp import GaussianProcess, Hyperparameters
from .pod import PODBasis

__all__ = [
    "PodGpSurrogate",
    "ResponsePrediction",
    "train_surrogate",
    "predict_response",
    "save_model",
    "load_model",
    "read_model_header",
    "MAGIC",
    "FORMAT_VERSION",
]

MAGIC = b"PODGPSM\0"
FORMAT_VERSION = 1


class ResponsePrediction(NamedTuple):
    mean: np.ndarray
    coeff_var: np.ndarray
    extrapolated: np.ndarray


def _gp_seed(seed, j):
    return int(np.random.SeedSequence([int(seed), int(j)]).generate_state(1)[0])


def _fit_one(Xu, a, seed, params):
    return GaussianProcess(random_state=seed, **params).fit(Xu, a)


class PodGpSurrogate(RegressorMixin, BaseEstimator):
    """Surrogate made of a truncated POD basis and one GP per coefficient.

    Parameters
    ----------
    space : ParameterSpace, optional
        Box used to map inputs onto the unit cube. When omitted, the
        bounding box of the training inputs is used.
    energy_threshold : float, default 0.999
        Relative-energy truncation level of the POD basis.
    n_snapshots : int, optional
        Size of the random response subset the basis is built from. All
        training responses are used when omitted. The coefficient GPs are
        always trained on every response.
    random_state : int, default 0
        Seed for snapshot selection and for the GP restarts.
    n_restarts, noise_floor, max_iters :
        Passed to every :class:`~podgp.gp.GaussianProcess`.
    pod_method : {"auto", "svd", "snapshots"}, default "auto"
    n_jobs : int, optional
        Workers used to fit the coefficient GPs. The result does not depend
        on this value.
    qoi : str, default ""
        Free-text name of the modelled quantity, kept in the metadata.
    time_grid : array-like, optional
        Output grid, kept in the metadata. Defaults to ``0..N_t-1``.

    Attributes
    ----------
    basis_ : PODBasis
    gps_ : list of GaussianProcess
        ``gps_[j]`` regresses coefficient ``j``.
    space_ : ParameterSpace
    snapshot_indices_ : ndarray of int
    time_grid_ : ndarray
    n_components_ : int
    """

    def __init__(
        self,
        space=None,
        energy_threshold=0.999,
        n_snapshots=None,
        random_state=0,
        n_restarts=10,
        noise_floor=1e-8,
        max_iters=500,
        pod_method="auto",
        n_jobs=None,
        qoi="",
        time_grid=None,
    ):
        self.space = space
        self.energy_threshold = energy_threshold
        self.n_snapshots = n_snapshots
        self.random_state = random_state
        self.n_restarts = n_restarts
        self.noise_floor = noise_floor
        self.max_iters = max_iters
        self.pod_method = pod_method
        self.n_jobs = n_jobs
        self.qoi = qoi
        self.time_grid = time_grid

    def _gp_params(self):
        return {"n_restarts": self.n_restarts, "noise_floor": self.noise_floor, "max_iters": self.max_iters}

    def fit(self, X, Y):
        """Fit on inputs ``X`` (N x d, physical units) and responses ``Y`` (N x N_t)."""
        X = check_array(np.asarray(X, dtype=float), dtype=float)
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.shape[0] != X.shape[0]:
            raise ShapeError(f"{X.shape[0]} input rows but {Y.shape[0]} responses")
        n = X.shape[0]
        if n < 2:
            raise ShapeError("need at least two training runs")
        space = self.space if self.space is not None else _bounding_space(X)
        if space.dim != X.shape[1]:
            raise ShapeError(f"inputs have {X.shape[1]} columns, parameter space has {space.dim}")
        n_snap = n if self.n_snapshots is None else int(self.n_snapshots)
        if not 1 <= n_snap <= n:
            raise ConfigError(f"n_snapshots must lie in [1, {n}], got {self.n_snapshots}")

        rng = np.random.default_rng(self.random_state)
        idx = np.arange(n) if n_snap == n else np.sort(rng.choice(n, n_snap, replace=False))
        basis = PODBasis(self.energy_threshold, self.pod_method).fit(Y[idx])
        coeffs = basis.transform(Y)
        Xu = normalize_to_unit(X, space)

        jobs = [delayed(_fit_one)(Xu, coeffs[:, j], _gp_seed(self.random_state, j), self._gp_params())
                for j in range(basis.n_components_)]
        if self.n_jobs in (None, 1) or len(jobs) == 1:
            gps = [f(*a, **kw) for f, a, kw in jobs]
        else:
            gps = Parallel(n_jobs=self.n_jobs)(jobs)

        t = np.arange(Y.shape[1], dtype=float) if self.time_grid is None else np.asarray(self.time_grid, float).ravel()
        if t.size != Y.shape[1]:
            raise ShapeError(f"time grid has {t.size} entries, responses have {Y.shape[1]}")
        self.space_ = space
        self.basis_ = basis
        self.gps_ = gps
        self.snapshot_indices_ = idx
        self.time_grid_ = t
        self.n_components_ = basis.n_components_
        self.n_features_in_ = X.shape[1]
        self.n_train_ = n
        return self

    def _unit(self, X, warn=True):
        check_is_fitted(self, "gps_")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ShapeError(f"model expects {self.n_features_in_} input columns, got shape {X.shape}")
        outside = ~self.space_.contains(X)
        if warn and outside.any():
            warnings.warn(
                f"{int(outside.sum())} of {len(X)} query points lie outside the training parameter box",
                ExtrapolationWarning,
                stacklevel=3,
            )
        return normalize_to_unit(X, self.space_), outside

    def predict_coefficients(self, X, return_var=False):
        """GP means (and variances) of the projection coefficients, N x k."""
        Xu, _ = self._unit(X)
        return self._coefficients(Xu, return_var)

    def _coefficients(self, Xu, return_var):
        out = [gp.predict(Xu, return_var=return_var) for gp in self.gps_]
        if not return_var:
            return np.column_stack(out)
        return np.column_stack([m for m, _ in out]), np.column_stack([v for _, v in out])

    def predict(self, X):
        """Mean responses, shape (N, N_t)."""
        Xu, _ = self._unit(X)
        return self.basis_.inverse_transform(np.atleast_2d(self._coefficients(Xu, False)))

    def predict_response(self, X):
        """Mean responses, per-coefficient variances and an extrapolation mask."""
        Xu, outside = self._unit(X)
        mean, var = self._coefficients(Xu, True)
        return ResponsePrediction(self.basis_.inverse_transform(mean), var, outside)

    def response_variance(self, X):
        """Diagnostic per-time-step variance ``sum_j Var(alpha_j) phi_j^2``.

        Assumes independent coefficients. Not used by any UQ estimate.
        """
        Xu, _ = self._unit(X)
        _, var = self._coefficients(Xu, True)
        return var @ (self.basis_.basis_**2).T

    def metadata(self):
        check_is_fitted(self, "gps_")
        return {
            "qoi": self.qoi,
            "n_train": int(self.n_train_),
            "n_snapshots": int(self.snapshot_indices_.size),
            "energy_threshold": float(self.energy_threshold),
            "energy": float(self.basis_.energy_),
            "n_components": int(self.n_components_),
            "n_timesteps": int(self.basis_.basis_.shape[0]),
            "seed": int(self.random_state),
            "pod_method": self.pod_method,
            "gp": self._gp_params(),
            "space": [
                {"name": p.name, "min": p.min, "max": p.max, "unit": p.unit, "description": p.description}
                for p in self.space_.params
            ],
            "hyperparameters": [
                {
                    "signal_variance": g.hyper_.signal_variance,
                    "lengthscales": list(g.hyper_.lengthscales),
                    "noise_variance": g.hyper_.noise_variance,
                    "target_shift": g.y_shift_,
                    "target_scale": g.y_scale_,
                }
                for g in self.gps_
            ],
        }


def _bounding_space(X):
    lo, hi = X.min(axis=0), X.max(axis=0)
    flat = hi <= lo
    lo, hi = np.where(flat, lo - 0.5, lo), np.where(flat, hi + 0.5, hi)
    return ParameterSpace.from_bounds([f"x{j + 1}" for j in range(X.shape[1])], np.column_stack([lo, hi]))


def train_surrogate(X, Y, energy_threshold=0.999, n_snapshots=None, seed=0, space=None, **gp_config):
    """Functional form of ``PodGpSurrogate(...).fit(X, Y)``.

    ``X`` may be a :class:`~podgp.design.DesignMatrix`, whose space is then
    used unless ``space`` is given.
    """
    if space is None and hasattr(X, "space"):
        space = X.space
    X = np.asarray(getattr(X, "points", X), dtype=float)
    model = PodGpSurrogate(space=space, energy_threshold=energy_threshold, n_snapshots=n_snapshots,
                           random_state=seed, **gp_config)
    return model.fit(X, Y)


def predict_response(model, x_star):
    mean, var, _ = model.predict_response(x_star)
    single = np.asarray(x_star).ndim == 1
    return (mean[0], var[0]) if single else (mean, var)


# -- persistence ---------------------------------------------------------------


def _timestamp():
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (_dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch
            else _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0))
    return when.isoformat().replace("+00:00", "Z")


def _arrays(model):
    out = {
        "time_grid": model.time_grid_[None, :],
        "basis": model.basis_.basis_,
        "singular_values": model.basis_.singular_values_[None, :],
        "snapshot_indices": model.snapshot_indices_.astype(float)[None, :],
        "X_train_unit": model.gps_[0].X_train_,
    }
    for j, g in enumerate(model.gps_):
        out[f"gp{j}.theta"] = g.hyper_.to_log()[None, :]
        out[f"gp{j}.hyper"] = np.concatenate(
            [[g.hyper_.signal_variance], g.hyper_.lengthscales, [g.hyper_.noise_variance]])[None, :]
        out[f"gp{j}.target"] = np.array([[g.y_shift_, g.y_scale_]])
        out[f"gp{j}.y"] = g.y_train_[:, None]
        out[f"gp{j}.L"] = g.L_
        out[f"gp{j}.alpha"] = g.alpha_[:, None]
    return out


def save_model(model, path, timestamp=None):
    """Write a fitted surrogate to a single binary file.

    ``timestamp`` overrides the creation time recorded in the metadata;
    otherwise ``SOURCE_DATE_EPOCH`` is honoured, then the current time.
    """
    meta = model.metadata()
    meta["format_version"] = FORMAT_VERSION
    meta["created"] = timestamp or _timestamp()
    from . import __version__

    meta["podgp_version"] = __version__
    buf = io.BytesIO()
    blob = json.dumps(meta, sort_keys=True, indent=1).encode()
    buf.write(MAGIC)
    buf.write(struct.pack("<IQ", FORMAT_VERSION, len(blob)))
    buf.write(blob)
    arrays = _arrays(model)
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        key = name.encode()
        buf.write(struct.pack("<H", len(key)))
        buf.write(key)
        buf.write(struct.pack("<QQ", *arr.shape))
        buf.write(arr.tobytes())
    payload = buf.getvalue()
    path = Path(path)
    tmp = path.with_name(path.name + ".part")
    tmp.write_bytes(payload + struct.pack("<I", zlib.crc32(payload)))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, data, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise ModelFormatError(f"{self.path}: file truncated while reading {what}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def _read_header(reader):
    if reader.take(len(MAGIC), "magic") != MAGIC:
        raise ModelFormatError(f"{reader.path}: not a podgp model file (bad magic)")
    version, meta_len = reader.unpack("<IQ", "header")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"{reader.path}: model format version {version} is not supported (this build reads {FORMAT_VERSION})"
        )
    try:
        return json.loads(reader.take(meta_len, "metadata").decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{reader.path}: corrupt metadata: {exc}") from None


def read_model_header(path):
    """Return the metadata dictionary without reading any matrix data."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC) + 12)
        reader = _Reader(head, path)
        reader.take(len(MAGIC), "magic")
        _, meta_len = reader.unpack("<IQ", "header")
        head += fh.read(meta_len)
    return _read_header(_Reader(head, path))


def load_model(path):
    """Load a surrogate written by :func:`save_model`.

    Raises
    ------
    ModelFormatError
        Bad magic, truncation, checksum mismatch or missing arrays.
    UnsupportedVersionError
        The file was written in a different format version.
    """
    path = Path(path)
    data = path.read_bytes()
    reader = _Reader(data, path)
    meta = _read_header(reader)
    if len(data) < 4:
        raise ModelFormatError(f"{path}: file truncated")
    (n_arrays,) = reader.unpack("<I", "array count")
    arrays = {}
    for _ in range(n_arrays):
        (klen,) = reader.unpack("<H", "array name length")
        name = reader.take(klen, "array name").decode(errors="replace")
        rows, cols = reader.unpack("<QQ", f"shape of {name}")
        raw = reader.take(8 * rows * cols, f"array {name}")
        arrays[name] = np.frombuffer(raw, dtype="<f8").reshape(rows, cols).astype(float)
    (crc,) = reader.unpack("<I", "checksum")
    if reader.pos != len(data):
        raise ModelFormatError(f"{path}: {len(data) - reader.pos} trailing bytes after checksum")
    if zlib.crc32(data[:-4]) != crc:
        raise ModelFormatError(f"{path}: checksum mismatch, file is corrupt")
    try:
        return _rebuild(meta, arrays)
    except KeyError as exc:
        raise ModelFormatError(f"{path}: missing array {exc.args[0]}") from None


def _rebuild(meta, arrays):
    space = ParameterSpace(tuple(Parameter(p["name"], p["min"], p["max"], p["unit"], p.get("description", ""))
                                 for p in meta["space"]))
    k = int(meta["n_components"])
    model = PodGpSurrogate(
        space=space,
        energy_threshold=meta["energy_threshold"],
        n_snapshots=meta["n_snapshots"],
        random_state=meta["seed"],
        pod_method=meta["pod_method"],
        qoi=meta["qoi"],
        **meta["gp"],
    )
    basis = PODBasis(meta["energy_threshold"], meta["pod_method"])
    basis.basis_ = np.ascontiguousarray(arrays["basis"])
    basis.singular_values_ = arrays["singular_values"].ravel()
    basis.n_components_ = k
    basis.energy_ = meta["energy"]
    basis.n_features_in_ = basis.basis_.shape[0]
    basis.n_snapshots_ = int(meta["n_snapshots"])
    X = arrays["X_train_unit"]
    gps = []
    for j in range(k):
        h = arrays[f"gp{j}.hyper"].ravel()
        shift, scale = arrays[f"gp{j}.target"].ravel()
        hyper = Hyperparameters(float(h[0]), tuple(float(v) for v in h[1:-1]), float(h[-1]))
        gps.append(GaussianProcess.from_state(hyper, X, arrays[f"gp{j}.y"].ravel(), arrays[f"gp{j}.L"],
                                              arrays[f"gp{j}.alpha"].ravel(), shift, scale, **meta["gp"]))
    model.space_ = space
    model.basis_ = basis
    model.gps_ = gps
    model.snapshot_indices_ = arrays["snapshot_indices"].ravel().astype(int)
    model.time_grid_ = arrays["time_grid"].ravel()
    model.n_components_ = k
    model.n_features_in_ = space.dim
    model.n_train_ = int(meta["n_train"])
    model.metadata_ = meta
    return model
