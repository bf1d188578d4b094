"""Immutable survival datasets with a designated covariate split.

A dataset holds right-censored survival rows: observed time ``y``
(minimum of event and censoring time), event indicator ``delta``, a block
``x`` of conventional covariates and a block ``z`` of new covariates.
The split drives everything downstream: risk models are fit on ``(x, z)``
jointly, and projection estimators ask what the ``x`` block alone retains.

Datasets are immutable after construction (arrays are read-only views)
and safe to share across concurrent workers.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import sys
from dataclasses import dataclass

import numpy as np

from ._errors import ValidationError

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

FAMILIES = ("ph", "po", "probit")
METHODS = ("pl-cpe", "pl-wci", "pr-wci")


@dataclass(frozen=True)
class Subject:
    """One survival record: observed time, event indicator, covariates."""

    y: float
    delta: int
    x: np.ndarray
    z: np.ndarray


@dataclass(frozen=True)
class SurvivalDataset:
    """Immutable cohort of (y, delta, x, z) rows.

    Parameters
    ----------
    y : ndarray of shape (n,)
        Observed times, strictly positive.
    delta : ndarray of shape (n,)
        Event indicators in {0, 1}.
    x : ndarray of shape (n, p)
        Conventional covariates, p >= 1.
    z : ndarray of shape (n, q)
        New covariates, q >= 0.
    x_names, z_names : tuple of str
        Column labels.
    tau : float or None
        Analysis horizon annotation set by :func:`truncate_to_horizon`.
    """

    y: np.ndarray
    delta: np.ndarray
    x: np.ndarray
    z: np.ndarray
    x_names: tuple = ()
    z_names: tuple = ()
    tau: float | None = None

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=float)
        delta = np.ascontiguousarray(self.delta, dtype=np.int64)
        x = np.ascontiguousarray(self.x, dtype=float)
        z = np.ascontiguousarray(self.z, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if z.ndim == 1:
            z = z.reshape(-1, 1) if z.size else z.reshape(len(y), 0)
        n = y.shape[0]
        if n < 2:
            raise ValidationError("dataset needs at least 2 rows, got %d" % n)
        if delta.shape[0] != n or x.shape[0] != n or z.shape[0] != n:
            raise ValidationError("row count mismatch between y, delta, x, z")
        if x.shape[1] < 1:
            raise ValidationError("at least one conventional covariate column is required")
        if not np.all(np.isfinite(y)) or np.any(y <= 0):
            bad = int(np.argmin((np.isfinite(y)) & (y > 0)))
            raise ValidationError("nonpositive or non-finite time in row %d" % (bad + 1))
        bad_delta = ~np.isin(delta, (0, 1))
        if np.any(bad_delta):
            raise ValidationError(
                "event indicator outside {0,1} in row %d" % (int(np.argmax(bad_delta)) + 1))
        for name, arr in (("x", x), ("z", z)):
            if arr.size and not np.all(np.isfinite(arr)):
                r, c = np.unravel_index(int(np.argmin(np.isfinite(arr))), arr.shape)
                raise ValidationError(
                    "non-finite %s covariate in row %d, column %d" % (name, r + 1, c + 1))
        if int(delta.sum()) < 1:
            raise ValidationError("dataset has no observed events")
        x_names = tuple(self.x_names) if self.x_names else tuple(
            "x%d" % (j + 1) for j in range(x.shape[1]))
        z_names = tuple(self.z_names) if self.z_names else tuple(
            "z%d" % (j + 1) for j in range(z.shape[1]))
        if len(x_names) != x.shape[1] or len(z_names) != z.shape[1]:
            raise ValidationError("covariate name count does not match column count")
        if self.tau is not None:
            tau = float(self.tau)
            if tau <= 0:
                raise ValidationError("tau must be positive, got %g" % tau)
            if tau > float(y.max()):
                raise ValidationError(
                    "tau=%g exceeds the maximum observed time %g; the estimand is "
                    "undefined beyond follow-up" % (tau, float(y.max())))
            object.__setattr__(self, "tau", tau)
        for arr in (y, delta, x, z):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x_names", x_names)
        object.__setattr__(self, "z_names", z_names)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    @property
    def q(self):
        return self.z.shape[1]

    def subject(self, i):
        """Return row ``i`` as a :class:`Subject`."""
        return Subject(float(self.y[i]), int(self.delta[i]),
                       self.x[i].copy(), self.z[i].copy())

    def take(self, indices):
        """Return a new dataset made of the given rows (with repetition
        allowed); used by bootstrap resampling."""
        idx = np.asarray(indices, dtype=np.intp)
        return SurvivalDataset(self.y[idx], self.delta[idx], self.x[idx],
                               self.z[idx], self.x_names, self.z_names, self.tau)

    def checksum(self):
        """SHA-256 over all field bytes; unchanged checksum certifies that
        downstream operations did not mutate the dataset."""
        h = hashlib.sha256()
        for arr in (self.y, self.delta, self.x, self.z):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(repr((self.x_names, self.z_names, self.tau)).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class ColumnSpec:
    """Mapping from CSV header names to dataset roles."""

    time: str
    status: str
    x: tuple
    z: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(self.x))
        object.__setattr__(self, "z", tuple(self.z))
        if not self.x:
            raise ValidationError("column mapping needs at least one x column")


@dataclass(frozen=True)
class AnalysisConfig:
    """Horizon, link family, analysis route, and inference settings.

    ``method`` is one of ``pl-cpe`` (partial-likelihood coefficients with
    the model-based concordance probability estimate), ``pl-wci``
    (partial-likelihood coefficients with the censoring-weighted c-index)
    or ``pr-wci`` (partial-rank coefficients with the weighted c-index).
    """

    tau: float
    family: str = "ph"
    method: str = "pl-cpe"
    bootstrap_reps: int = 0
    seed: int = 0
    h: float | None = None
    g: float | None = None
    anchor: int = 0

    def __post_init__(self):
        object.__setattr__(self, "family", canonical_family(self.family))
        object.__setattr__(self, "method", canonical_method(self.method))
        if not self.tau > 0:
            raise ValidationError("tau must be positive, got %r" % (self.tau,))
        if self.bootstrap_reps < 0:
            raise ValidationError("bootstrap_reps must be >= 0")
        if self.h is not None and not self.h > 0:
            raise ValidationError("bandwidth h must be positive")
        if self.g is not None and not self.g > 0:
            raise ValidationError("bandwidth g must be positive")


def canonical_family(tag):
    t = str(tag).strip().lower()
    if t not in FAMILIES:
        raise ValidationError("unknown link family %r (choose from %s)" % (tag, FAMILIES))
    return t


def canonical_method(tag):
    t = str(tag).strip().lower().replace("/", "-").replace("_", "-")
    if t not in METHODS:
        raise ValidationError("unknown method %r (choose from %s)" % (tag, METHODS))
    return t


def _parse_cell(raw, row, col):
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ValidationError(
            "non-numeric value %r in row %d, column %r" % (raw, row, col)) from None


def load_csv(path, spec):
    """Load a survival dataset from a headered CSV file.

    ``spec`` is a :class:`ColumnSpec` or an equivalent mapping with keys
    ``time``, ``status``, ``x`` and optional ``z``.  Rows are validated
    one by one; the first offending cell is reported with its (1-based
    data) row number and column name.  Missing values are rejected, not
    imputed.
    """
    if isinstance(spec, dict):
        spec = ColumnSpec(spec["time"], spec["status"],
                          tuple(spec["x"]), tuple(spec.get("z", ())))
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ValidationError("cannot read data file %s: %s" % (path, exc)) from None
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        wanted = (spec.time, spec.status) + spec.x + spec.z
        for col in wanted:
            if col not in header:
                raise ValidationError("column %r missing from %s (header: %s)"
                                      % (col, path, header))
        y, delta, xs, zs = [], [], [], []
        for irow, rec in enumerate(reader, start=1):
            for col in wanted:
                if rec.get(col) in (None, ""):
                    raise ValidationError("missing value in row %d, column %r" % (irow, col))
            t = _parse_cell(rec[spec.time], irow, spec.time)
            if not t > 0:
                raise ValidationError(
                    "nonpositive time %g in row %d, column %r" % (t, irow, spec.time))
            d = _parse_cell(rec[spec.status], irow, spec.status)
            if d not in (0.0, 1.0):
                raise ValidationError(
                    "event indicator %g outside {0,1} in row %d, column %r"
                    % (d, irow, spec.status))
            y.append(t)
            delta.append(int(d))
            xs.append([_parse_cell(rec[c], irow, c) for c in spec.x])
            zs.append([_parse_cell(rec[c], irow, c) for c in spec.z])
    if not y:
        raise ValidationError("no data rows in %s" % path)
    z = np.asarray(zs, dtype=float).reshape(len(y), len(spec.z))
    return SurvivalDataset(np.asarray(y), np.asarray(delta), np.asarray(xs), z,
                           x_names=spec.x, z_names=spec.z)


def write_csv(ds, path):
    """Write a dataset back to CSV with full float precision, so that
    ``load_csv(write_csv(ds))`` reproduces every field bit-exactly."""
    cols = ("time", "status") + ds.x_names + ds.z_names
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for i in range(ds.n):
            row = [repr(float(ds.y[i])), str(int(ds.delta[i]))]
            row += [repr(float(v)) for v in ds.x[i]]
            row += [repr(float(v)) for v in ds.z[i]]
            writer.writerow(row)
    return ColumnSpec("time", "status", ds.x_names, ds.z_names)


def truncate_to_horizon(ds, tau):
    """Validate and annotate the analysis horizon.

    Identity on rows: downstream estimators apply the pair filter
    ``I(y_i < tau)`` themselves, so nothing is deleted here.  ``tau``
    beyond the maximum observed time is rejected because the estimand is
    undefined there.
    """
    tau = float(tau)
    if not tau > 0:
        raise ValidationError("tau must be positive, got %g" % tau)
    y_max = float(np.max(ds.y))
    if tau > y_max:
        raise ValidationError(
            "horizon tau=%g exceeds the maximum observed time %g; the "
            "estimand is undefined beyond follow-up" % (tau, y_max))
    return dataclasses.replace(ds, tau=tau)


def _read_toml(path):
    """Parse a TOML file into a dict, mapping missing-file and syntax
    errors onto ValidationError."""
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise ValidationError("cannot read config %s: %s" % (path, exc)) from None
    with fh:
        try:
            return _toml.load(fh)
        except _toml.TOMLDecodeError as exc:
            raise ValidationError("cannot parse config %s: %s" % (path, exc)) from None


def load_config(path):
    """Read an analysis config file (TOML) with ``[data]`` and
    ``[analysis]`` tables; returns ``(ColumnSpec, AnalysisConfig)``."""
    doc = _read_toml(path)
    try:
        data = doc["data"]
        analysis = doc["analysis"]
        spec = ColumnSpec(data["time"], data["status"],
                          tuple(data["x"]), tuple(data.get("z", ())))
        cfg = AnalysisConfig(
            tau=float(analysis["tau"]),
            family=analysis.get("family", "ph"),
            method=analysis.get("method", "pl-cpe"),
            bootstrap_reps=int(analysis.get("bootstrap_reps", 0)),
            seed=int(analysis.get("seed", 0)),
            h=analysis.get("h"),
            g=analysis.get("g"),
            anchor=int(analysis.get("anchor", 0)),
        )
    except KeyError as exc:
        raise ValidationError("config %s is missing required key %s" % (path, exc)) from None
    return spec, cfg
