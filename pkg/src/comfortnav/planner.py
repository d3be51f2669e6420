"""Comfort-aware local planning over a trajectory library.

Candidates are constant-curvature arcs in the vehicle frame (x forward,
y left), sampled at a fixed arc-length step. A candidate's score is the
cost-weighted length it travels plus a goal-distance term; the planner
returns the minimum-score candidate with deterministic tie-breaking.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .costmap import Costmap

DEFAULT_UNKNOWN_COST = 0.5
DEFAULT_GOAL_WEIGHT = 1.0


@dataclass(frozen=True)
class TrajectoryCandidate:
    """A constant-curvature arc: poses are (x, y, heading) rows sampled at
    arc length ds, 2*ds, ..., arc_length."""

    curvature: float
    arc_length: float
    ds: float
    poses: np.ndarray

    def endpoint(self) -> np.ndarray:
        return self.poses[-1, :2]


def make_arc(curvature: float, arc_length: float = 6.0, ds: float = 0.1) -> TrajectoryCandidate:
    """Closed-form arc from the origin heading +x. For curvature k != 0:
    x = sin(k s)/k, y = (1 - cos(k s))/k, heading = k s."""
    if arc_length <= 0 or ds <= 0:
        raise ValueError("arc_length and ds must be positive")
    steps = int(round(arc_length / ds))
    if steps < 2:
        raise ValueError("arc must contain at least 2 poses")
    s = ds * np.arange(1, steps + 1)
    if curvature == 0.0:
        poses = np.column_stack([s, np.zeros_like(s), np.zeros_like(s)])
    else:
        poses = np.column_stack([np.sin(curvature * s) / curvature,
                                 (1.0 - np.cos(curvature * s)) / curvature,
                                 curvature * s])
    return TrajectoryCandidate(curvature=float(curvature), arc_length=float(steps * ds),
                               ds=float(ds), poses=poses)


def default_library(count: int = 15, max_curvature: float = 0.5,
                    arc_length: float = 6.0, ds: float = 0.1) -> list[TrajectoryCandidate]:
    """Symmetric fan of arcs with curvatures evenly spaced in
    [-max_curvature, max_curvature]."""
    if count < 1:
        raise ValueError("library needs at least one candidate")
    curvatures = np.linspace(-max_curvature, max_curvature, count)
    return [make_arc(float(k), arc_length, ds) for k in curvatures]


def score_trajectory(traj: TrajectoryCandidate, costmap: Costmap, goal,
                     unknown_cost: float = DEFAULT_UNKNOWN_COST,
                     goal_weight: float = DEFAULT_GOAL_WEIGHT) -> float:
    """Cost-weighted arc length plus goal-distance penalty.

    Every sampled pose contributes cell_cost * ds, with UNKNOWN and
    off-grid cells charged `unknown_cost`; the endpoint adds goal_weight
    times its Euclidean distance to the goal.
    """
    if traj.poses.shape[0] < 2:
        raise ValueError("trajectory must have at least 2 poses")
    goal = np.asarray(goal, dtype=float)
    total = 0.0
    for pose in traj.poses:
        c = costmap.value_at(pose[:2])
        total += (unknown_cost if np.isnan(c) else c) * traj.ds
    total += goal_weight * float(np.linalg.norm(traj.endpoint() - goal))
    return total


def plan(costmap: Costmap, goal, library: list[TrajectoryCandidate],
         unknown_cost: float = DEFAULT_UNKNOWN_COST,
         goal_weight: float = DEFAULT_GOAL_WEIGHT) -> TrajectoryCandidate:
    """Minimum-score candidate; exact score ties prefer smaller |curvature|,
    then earlier library position."""
    if not library:
        raise ValueError("trajectory library is empty")
    scores = [score_trajectory(t, costmap, goal, unknown_cost, goal_weight)
              for t in library]
    best = min(scores)
    tied = [i for i, s in enumerate(scores) if s == best]
    winner = min(tied, key=lambda i: (abs(library[i].curvature), i))
    return library[winner]


def write_trajectory_csv(traj: TrajectoryCandidate, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "heading"])
        for pose in traj.poses:
            writer.writerow([repr(float(pose[0])), repr(float(pose[1])),
                             repr(float(pose[2]))])


def read_trajectory_csv(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["x", "y", "heading"]:
            raise ValueError(f"unexpected trajectory header: {header}")
        rows = [[float(v) for v in row] for row in reader]
    return np.array(rows, dtype=float)
