"""Ride-comfort scoring of state logs.

The perceived-motion score of a run combines the peak acceleration and
peak jerk of an axis: mu = w_a * A_max + w_j * J_max + w_aj * A_max * J_max.
For the z axis the acceleration channel is used directly; for roll,
pitch, and yaw the angular acceleration is the centered finite difference
of the angular velocity. Jerk is the centered difference of acceleration.
Scores are compared across runs after per-axis normalization by the
maximum, and rankings can be correlated with Spearman's rho.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

AXES = ("z", "roll", "pitch", "yaw")
_ANGULAR_COLUMN = {"roll": 0, "pitch": 1, "yaw": 2}


@dataclass(frozen=True)
class PmiWeights:
    w_accel: float = 1.0
    w_jerk: float = 1.0
    w_interaction: float = 0.0

    def __post_init__(self):
        if self.w_accel < 0 or self.w_jerk < 0:
            raise ValueError("acceleration and jerk weights must be >= 0")


@dataclass(frozen=True)
class PmiReport:
    """Per-axis scores for one run; `normalized` is filled by
    normalize_pmi relative to a run set."""

    run: str
    mu: dict[str, float]
    a_max: dict[str, float]
    j_max: dict[str, float]
    normalized: dict[str, float] | None = None


def _centered_diff(x: np.ndarray, dt: float) -> np.ndarray:
    return (x[2:] - x[:-2]) / (2.0 * dt)


def _uniform_dt(t: np.ndarray) -> float:
    dts = np.diff(t)
    mean = float(dts.mean())
    if mean <= 0:
        raise ValueError("timestamps must be increasing")
    if np.max(np.abs(dts - mean)) > 0.01 * mean:
        raise ValueError("timestamps jitter by more than 1%; cannot difference reliably")
    return mean


def pmi(log, axis: str, weights: PmiWeights = PmiWeights()) -> tuple[float, float, float]:
    """(mu, A_max, J_max) of one axis of a log.

    Needs at least 3 samples for the z axis and 5 for the angular axes
    (each centered difference trims one sample per side). Timestamps must
    be uniform within 1% jitter.
    """
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}")
    n = len(log)
    if n < 3:
        raise ValueError("need at least 3 samples to estimate jerk")
    dt = _uniform_dt(np.asarray(log.t))
    if axis == "z":
        accel = np.asarray(log.a)[:, 2]
    else:
        if n < 5:
            raise ValueError("angular axes need at least 5 samples")
        accel = _centered_diff(np.asarray(log.w)[:, _ANGULAR_COLUMN[axis]], dt)
    jerk = _centered_diff(accel, dt)
    a_max = float(np.max(np.abs(accel)))
    j_max = float(np.max(np.abs(jerk)))
    mu = (weights.w_accel * a_max + weights.w_jerk * j_max
          + weights.w_interaction * a_max * j_max)
    return mu, a_max, j_max


def pmi_report(log, weights: PmiWeights = PmiWeights(), run: str = "") -> PmiReport:
    """All four axes of one log."""
    mu, a_max, j_max = {}, {}, {}
    for axis in AXES:
        mu[axis], a_max[axis], j_max[axis] = pmi(log, axis, weights)
    return PmiReport(run=run, mu=mu, a_max=a_max, j_max=j_max)


def normalize_pmi(reports: list[PmiReport]) -> list[PmiReport]:
    """Divide each axis score by the maximum over the run set; an axis
    that is zero everywhere normalizes to zero."""
    if not reports:
        raise ValueError("no reports to normalize")
    out = []
    maxima = {axis: max(r.mu[axis] for r in reports) for axis in AXES}
    for r in reports:
        normalized = {axis: (r.mu[axis] / maxima[axis] if maxima[axis] > 0 else 0.0)
                      for axis in AXES}
        out.append(replace(r, normalized=normalized))
    return out


def average_reports(reports: list[PmiReport], run: str) -> PmiReport:
    """Arithmetic mean of repeated runs, axis by axis."""
    if not reports:
        raise ValueError("no reports to average")
    k = len(reports)
    return PmiReport(
        run=run,
        mu={a: sum(r.mu[a] for r in reports) / k for a in AXES},
        a_max={a: sum(r.a_max[a] for r in reports) / k for a in AXES},
        j_max={a: sum(r.j_max[a] for r in reports) / k for a in AXES},
    )


def _ranks(values: np.ndarray) -> np.ndarray:
    """Fractional ranks (1-based); tied values share the average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.shape[0])
    i = 0
    while i < values.shape[0]:
        j = i
        while j + 1 < values.shape[0] and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Spearman rank correlation with average ranks for ties.

    Raises when either list is constant (rank variance zero) or shorter
    than 2.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("inputs must be 1-D and the same length")
    if xs.shape[0] < 2:
        raise ValueError("need at least 2 observations")
    rx = _ranks(xs)
    ry = _ranks(ys)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    vx = float(rx @ rx)
    vy = float(ry @ ry)
    if vx == 0.0 or vy == 0.0:
        raise ValueError("rank variance is zero; correlation undefined")
    return float((rx @ ry) / np.sqrt(vx * vy))


def write_pmi_csv(reports: list[PmiReport], path) -> None:
    """One row per (run, axis): run,axis,mu,a_max,j_max,mu_normalized."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["run", "axis", "mu", "a_max", "j_max", "mu_normalized"])
        for r in reports:
            for axis in AXES:
                norm = "" if r.normalized is None else repr(r.normalized[axis])
                writer.writerow([r.run, axis, repr(r.mu[axis]), repr(r.a_max[axis]),
                                 repr(r.j_max[axis]), norm])
