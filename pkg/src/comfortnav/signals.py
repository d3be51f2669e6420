"""Vehicle-state logs, signal windowing, and per-axis amplitude spectra.

A state log is a time series of poses plus body-frame angular velocity and
linear acceleration. The disturbance signals we care about are the roll and
pitch angular velocities and the vertical (Z-down) acceleration: those three
channels are cut into fixed-length windows and turned into concatenated FFT
amplitude spectra that describe how rough the traversed ground felt.

All functions here are pure and deterministic; logs and windows are treated
as immutable once constructed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: CSV column order for state logs.
STATE_LOG_HEADER = "t,px,py,pz,qw,qx,qy,qz,wr,wp,wy,ax,ay,az"

DEFAULT_WINDOW = 256
DEFAULT_STRIDE = 128


def quat_from_yaw(yaw: float) -> np.ndarray:
    """Unit quaternion (w, x, y, z) for a rotation of `yaw` about world +Z."""
    half = 0.5 * yaw
    return np.array([np.cos(half), 0.0, 0.0, np.sin(half)])


def yaw_from_quat(q: np.ndarray) -> float:
    """Yaw (rotation about +Z, ZYX convention) of a unit quaternion (w,x,y,z)."""
    w, x, y, z = q
    return float(np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z)))


@dataclass(frozen=True)
class VehicleStateSample:
    """One state-estimate sample.

    t: seconds. p: world position (3,). q: unit quaternion (w,x,y,z).
    w: body angular velocity (roll, pitch, yaw) in rad/s.
    a: body linear acceleration (x, y, z) in m/s^2 with Z pointing down.
    """

    t: float
    p: np.ndarray
    q: np.ndarray
    w: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        for name, v, k in (("p", self.p, 3), ("q", self.q, 4), ("w", self.w, 3), ("a", self.a, 3)):
            arr = np.asarray(v, dtype=float)
            if arr.shape != (k,):
                raise ValueError(f"{name} must have shape ({k},), got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)
        if abs(np.linalg.norm(self.q) - 1.0) > 1e-6:
            raise ValueError("q is not a unit quaternion (|q| off by more than 1e-6)")


class StateLog:
    """Column-wise container for a sequence of vehicle-state samples.

    Stores contiguous arrays (t, p, q, w, a) for cheap windowing; indexing
    returns a VehicleStateSample view. Timestamps must be strictly
    increasing and quaternions unit-norm.
    """

    def __init__(self, t: np.ndarray, p: np.ndarray, q: np.ndarray,
                 w: np.ndarray, a: np.ndarray):
        t = np.asarray(t, dtype=float)
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        w = np.asarray(w, dtype=float)
        a = np.asarray(a, dtype=float)
        n = t.shape[0]
        if t.ndim != 1:
            raise ValueError("t must be 1-D")
        for name, arr, cols in (("p", p, 3), ("q", q, 4), ("w", w, 3), ("a", a, 3)):
            if arr.shape != (n, cols):
                raise ValueError(f"{name} must have shape ({n}, {cols}), got {arr.shape}")
        for name, arr in (("t", t), ("p", p), ("q", q), ("w", w), ("a", a)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        if n > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if n > 0:
            norms = np.linalg.norm(q, axis=1)
            if np.max(np.abs(norms - 1.0)) > 1e-6:
                raise ValueError("quaternions must be unit-norm within 1e-6")
        self.t = t
        self.p = p
        self.q = q
        self.w = w
        self.a = a

    def __len__(self) -> int:
        return self.t.shape[0]

    def __getitem__(self, i: int) -> VehicleStateSample:
        return VehicleStateSample(float(self.t[i]), self.p[i].copy(), self.q[i].copy(),
                                  self.w[i].copy(), self.a[i].copy())

    @classmethod
    def from_samples(cls, samples) -> "StateLog":
        samples = list(samples)
        if not samples:
            return cls(np.zeros(0), np.zeros((0, 3)), np.zeros((0, 4)),
                       np.zeros((0, 3)), np.zeros((0, 3)))
        return cls(np.array([s.t for s in samples]),
                   np.stack([s.p for s in samples]),
                   np.stack([s.q for s in samples]),
                   np.stack([s.w for s in samples]),
                   np.stack([s.a for s in samples]))


def write_state_log(log: StateLog, path) -> None:
    """Write a state log as CSV with the canonical header (byte-deterministic)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(STATE_LOG_HEADER + "\n")
        for i in range(len(log)):
            row = [log.t[i], *log.p[i], *log.q[i], *log.w[i], *log.a[i]]
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_state_log(path) -> StateLog:
    """Read a state log CSV written by `write_state_log` (or any file with
    the same header)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != STATE_LOG_HEADER:
            raise ValueError(f"unexpected state log header: {header!r}")
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            vals = [float(x) for x in line.split(",")]
            if len(vals) != 14:
                raise ValueError(f"state log row has {len(vals)} fields, expected 14")
            rows.append(vals)
    data = np.array(rows, dtype=float).reshape(len(rows), 14)
    return StateLog(data[:, 0], data[:, 1:4], data[:, 4:8], data[:, 8:11], data[:, 11:14])


@dataclass(frozen=True)
class WindowAnchor:
    """Pose of the log sample at a window's center: time, world position, yaw."""

    t: float
    position: np.ndarray
    yaw: float


@dataclass(frozen=True)
class SignalWindow:
    """`n` consecutive (w_roll, w_pitch, a_z) triples plus the anchor pose.

    `samples` has shape (n, 3) in that column order; `start_index` is the
    offset of the first sample in the source log.
    """

    samples: np.ndarray
    start_index: int
    anchor: WindowAnchor

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] < 1:
            raise ValueError(f"samples must have shape (n, 3) with n >= 1, got {arr.shape}")
        object.__setattr__(self, "samples", arr)

    @property
    def n(self) -> int:
        return self.samples.shape[0]


def window_states(log, n: int = DEFAULT_WINDOW, stride: int = DEFAULT_STRIDE) -> list[SignalWindow]:
    """Cut a state log into windows of `n` samples every `stride` samples.

    Windows start at offsets 0, stride, 2*stride, ... while a full window
    fits. Each window's anchor is the pose of its center sample (index
    start + n//2), the sample with the least worst-case offset from any
    sample in the window.

    Returns an empty list when the log is shorter than `n`; raises
    ValueError for invalid n/stride or a non-monotone log.
    """
    if n < 1 or stride < 1:
        raise ValueError("n and stride must be >= 1")
    if not isinstance(log, StateLog):
        log = StateLog.from_samples(log)
    total = len(log)
    if total < n:
        return []
    signal = np.column_stack([log.w[:, 0], log.w[:, 1], log.a[:, 2]])
    windows = []
    for start in range(0, total - n + 1, stride):
        mid = start + n // 2
        anchor = WindowAnchor(float(log.t[mid]), log.p[mid].copy(),
                              yaw_from_quat(log.q[mid]))
        windows.append(SignalWindow(signal[start:start + n].copy(), start, anchor))
    return windows


@dataclass(frozen=True)
class AmplitudeSpectrum:
    """Per-axis FFT magnitude vectors for one signal window.

    `per_axis` has shape (3, n//2 + 1): rows are (roll, pitch, z), columns
    run from DC through Nyquist. Magnitudes are the real-input DFT moduli
    divided by the window length, so they do not grow with n.
    """

    per_axis: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.per_axis, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != 3:
            raise ValueError(f"per_axis must have shape (3, bins), got {arr.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("spectrum magnitudes must be finite and non-negative")
        object.__setattr__(self, "per_axis", arr)

    @property
    def bins(self) -> int:
        return self.per_axis.shape[1]

    @property
    def concatenated(self) -> np.ndarray:
        """Single vector of length 3*(n//2+1): roll bins, then pitch, then z."""
        return self.per_axis.reshape(-1)

    @classmethod
    def from_concatenated(cls, vec: np.ndarray) -> "AmplitudeSpectrum":
        vec = np.asarray(vec, dtype=float)
        if vec.ndim != 1 or vec.size % 3 != 0:
            raise ValueError("concatenated spectrum length must be a multiple of 3")
        return cls(vec.reshape(3, -1))


def amplitude_spectrum(window: SignalWindow, taper: str = "rectangular") -> AmplitudeSpectrum:
    """Per-axis amplitude spectrum of a window.

    For each of the three channels: subtract the window mean (so constant
    sensor offsets do not register), optionally apply a Hann taper, take
    the real-input FFT, and divide the magnitudes by n. A pure tone
    a*sin(2*pi*k*t/n) at integer bin k therefore shows magnitude a/2 at
    bin k under the default rectangular taper.
    """
    x = window.samples
    n = x.shape[0]
    if n == 0:
        raise ValueError("window is empty")
    if not np.all(np.isfinite(x)):
        raise ValueError("window contains non-finite samples")
    centered = x - x.mean(axis=0, keepdims=True)
    if taper == "hann":
        centered = centered * np.hanning(n)[:, None]
    elif taper != "rectangular":
        raise ValueError(f"unknown taper {taper!r}")
    mags = np.abs(np.fft.rfft(centered, axis=0)) / n
    return AmplitudeSpectrum(mags.T.copy())
