"""Foundational value types: uniformly sampled time series and frame utilities.

All kinematic quantities travel through :class:`TimeSeries3` (3-component) or
:class:`TimeSeries1` (scalar resultants, filter inputs).  Both are immutable:
the sample arrays are copied on construction and marked read-only, so every
operation in the toolkit is a pure function and safe to call from concurrent
workers.

Head frame convention used throughout (documented, not inferable from data):
x = posterior -> anterior, y = right -> left, z = inferior -> superior.
Rotation matrices map sensor-frame vectors into this head frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, WindowError

__all__ = [
    "TimeSeries1",
    "TimeSeries3",
    "rotate_series",
    "resample",
    "magnitude",
    "validate_rotation",
    "is_rotation",
]

#: Orthonormality tolerance for rotation matrices (R^T R = I, det = +1).
ROTATION_TOL = 1e-9


def _as_grid_array(values, name: str, ncols: int | None) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if ncols is None:
        if arr.ndim != 1:
            raise DataError(f"{name} must be a 1-d array, got shape {arr.shape}")
    else:
        if arr.ndim != 2 or arr.shape[1] != ncols:
            raise DataError(f"{name} must have shape (n, {ncols}), got {arr.shape}")
    if arr.shape[0] == 0:
        raise DataError(f"{name} must not be empty")
    if not np.isfinite(arr).all():
        raise DataError(f"{name} contains non-finite values")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


def _check_rate(rate: float) -> float:
    rate = float(rate)
    if not np.isfinite(rate) or rate <= 0.0:
        raise DataError(f"sample_rate must be a positive finite number, got {rate}")
    return rate


@dataclass(frozen=True)
class TimeSeries1:
    """Uniformly sampled scalar signal.

    Attributes
    ----------
    start_time : float
        Time of the first sample, in seconds.
    sample_rate : float
        Sampling rate in Hz; spacing is uniform by construction.
    values : numpy.ndarray
        Read-only float64 array of shape ``(n,)``.
    """

    start_time: float
    sample_rate: float
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "start_time", float(self.start_time))
        object.__setattr__(self, "sample_rate", _check_rate(self.sample_rate))
        object.__setattr__(self, "values", _as_grid_array(self.values, "values", None))

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(len(self)) / self.sample_rate

    @property
    def end_time(self) -> float:
        return self.start_time + (len(self) - 1) / self.sample_rate

    def with_values(self, values) -> "TimeSeries1":
        """Same clock, new values."""
        return TimeSeries1(self.start_time, self.sample_rate, values)


@dataclass(frozen=True)
class TimeSeries3:
    """Uniformly sampled 3-component signal (the universal kinematics carrier).

    Attributes
    ----------
    start_time : float
        Time of the first sample, in seconds.
    sample_rate : float
        Sampling rate in Hz.
    samples : numpy.ndarray
        Read-only float64 array of shape ``(n, 3)``; one row per instant.
    """

    start_time: float
    sample_rate: float
    samples: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "start_time", float(self.start_time))
        object.__setattr__(self, "sample_rate", _check_rate(self.sample_rate))
        object.__setattr__(self, "samples", _as_grid_array(self.samples, "samples", 3))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(len(self)) / self.sample_rate

    @property
    def end_time(self) -> float:
        return self.start_time + (len(self) - 1) / self.sample_rate

    def component(self, axis: int) -> TimeSeries1:
        """Scalar series of one component (0=x, 1=y, 2=z)."""
        return TimeSeries1(self.start_time, self.sample_rate, self.samples[:, axis])

    def with_samples(self, samples) -> "TimeSeries3":
        """Same clock, new samples."""
        return TimeSeries3(self.start_time, self.sample_rate, samples)

    def shifted(self, offset: float) -> "TimeSeries3":
        """Same data on a clock shifted by ``offset`` seconds."""
        return TimeSeries3(self.start_time + offset, self.sample_rate, self.samples)


def is_rotation(R, tol: float = ROTATION_TOL) -> bool:
    """True when ``R`` is orthonormal with determinant +1 within ``tol``."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.isfinite(R).all():
        return False
    err = np.abs(R.T @ R - np.eye(3)).max()
    return err <= tol and abs(np.linalg.det(R) - 1.0) <= tol


def validate_rotation(R, tol: float = ROTATION_TOL) -> np.ndarray:
    """Return ``R`` as a float64 array, raising :class:`ConfigError` if it is
    not a proper rotation within ``tol``."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise ConfigError(f"rotation matrix must be 3x3, got shape {R.shape}")
    if not is_rotation(R, tol):
        raise ConfigError(
            "matrix is not a proper rotation (orthonormality or det +1 "
            f"violated beyond {tol:g})"
        )
    return R


def rotate_series(s: TimeSeries3, R) -> TimeSeries3:
    """Apply a fixed rotation to every sample; timing metadata unchanged.

    Parameters
    ----------
    s : TimeSeries3
        Input series (e.g. a sensor-frame channel).
    R : array-like, shape (3, 3)
        Proper rotation matrix; each sample is replaced by ``R @ sample``.

    Raises
    ------
    ConfigError
        If ``R`` is not orthonormal with determinant +1 within 1e-9.
    """
    R = validate_rotation(R)
    return s.with_samples(s.samples @ R.T)


def sample_on_grid(s: TimeSeries3 | TimeSeries1, times: np.ndarray):
    """Linearly interpolate a series at the given absolute times.

    ``times`` must lie inside the series support (no extrapolation).
    Returns a new series whose clock is inferred from ``times`` (which must be
    uniform); used to put multi-rate channels on one grid.
    """
    times = np.asarray(times, dtype=np.float64)
    if times.size < 1:
        raise DataError("empty target grid")
    eps = 0.5 / s.sample_rate * 1e-6
    if times[0] < s.start_time - eps or times[-1] > s.end_time + eps:
        raise WindowError(
            f"target grid [{times[0]:.6f}, {times[-1]:.6f}] s exceeds series "
            f"support [{s.start_time:.6f}, {s.end_time:.6f}] s"
        )
    src_t = s.times
    if isinstance(s, TimeSeries3):
        out = np.column_stack(
            [np.interp(times, src_t, s.samples[:, k]) for k in range(3)]
        )
        rate = _grid_rate(times)
        return TimeSeries3(times[0], rate, out)
    out = np.interp(times, src_t, s.values)
    return TimeSeries1(times[0], _grid_rate(times), out)


def _grid_rate(times: np.ndarray) -> float:
    if times.size == 1:
        raise DataError("cannot infer a rate from a single-point grid")
    return 1.0 / float(np.median(np.diff(times)))


def resample(s: TimeSeries3 | TimeSeries1, target_rate: float):
    """Linearly interpolate onto a uniform grid at ``target_rate``.

    The new grid starts at the series start time and spans the original
    support; no extrapolation beyond the endpoints.  Resampling at the source
    rate reproduces the series exactly (bitwise-equal grid).

    Raises
    ------
    DataError
        If the series has fewer than 2 samples or ``target_rate <= 0``.
    """
    target_rate = float(target_rate)
    if target_rate <= 0.0 or not np.isfinite(target_rate):
        raise DataError(f"target_rate must be positive, got {target_rate}")
    if len(s) < 2:
        raise DataError("resample needs at least 2 samples")
    span = (len(s) - 1) / s.sample_rate
    n_out = int(np.floor(span * target_rate + 1e-9)) + 1
    new_times = s.start_time + np.arange(n_out) / target_rate
    src_t = s.times
    if isinstance(s, TimeSeries3):
        out = np.column_stack(
            [np.interp(new_times, src_t, s.samples[:, k]) for k in range(3)]
        )
        return TimeSeries3(s.start_time, target_rate, out)
    return TimeSeries1(s.start_time, target_rate, np.interp(new_times, src_t, s.values))


def magnitude(s: TimeSeries3) -> TimeSeries1:
    """Per-sample Euclidean norm (the resultant); timing preserved."""
    return TimeSeries1(
        s.start_time, s.sample_rate, np.linalg.norm(s.samples, axis=1)
    )


def same_clock(a, b, rel: float = 1e-9) -> bool:
    """True when two series share length, rate and start time (within ``rel``
    on the rate and 1 ns absolute on the start; rates inferred from file
    grids can differ by an ulp)."""
    return (len(a) == len(b)
            and abs(a.sample_rate - b.sample_rate) <= rel * a.sample_rate
            and abs(a.start_time - b.start_time) <= 1e-9)
