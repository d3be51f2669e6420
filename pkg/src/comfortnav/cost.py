"""Traversal-cost labels from clustered vehicle-state spectra.

Each state class gets a mean amplitude spectrum and a magnification
weight; a sample's cost is its class weight times the sum over the three
axes of the dot product between the class mean spectrum and the sample's
spectrum. Costs are min-max normalized over the dataset before they feed
the regressor, and the bounds are kept so later costs can be mapped into
the same range.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace

import numpy as np

from .signals import AmplitudeSpectrum

DEFAULT_BASE_WEIGHTS = (1.0, 2.0, 4.0)


@dataclass(frozen=True)
class ClassSpectralStats:
    """Per-class mean amplitude spectrum (3, bins), sample count, and
    magnification weight."""

    class_id: int
    mean_spectrum: np.ndarray
    count: int
    omega: float = 1.0

    def __post_init__(self):
        arr = np.asarray(self.mean_spectrum, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != 3:
            raise ValueError("mean_spectrum must have shape (3, bins)")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("mean_spectrum entries must be finite and >= 0")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.omega <= 0:
            raise ValueError("omega must be positive")
        object.__setattr__(self, "mean_spectrum", arr)

    @property
    def energy(self) -> float:
        """Total mean spectral energy: sum of squared mean magnitudes."""
        return float(np.sum(self.mean_spectrum ** 2))


@dataclass(frozen=True)
class CostLabel:
    value: float
    class_id: int
    normalized: float | None = None

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value < 0:
            raise ValueError("cost value must be finite and >= 0")


def class_means(spectra: list[AmplitudeSpectrum], labels, k: int | None = None) -> list[ClassSpectralStats]:
    """Arithmetic mean spectrum per class.

    `labels` assigns a class id to each spectrum. When `k` is given, every
    class id in 0..k-1 must be populated; otherwise the classes present in
    `labels` define the set. Results are ordered by class id.
    """
    labels = np.asarray(labels)
    if len(spectra) != labels.shape[0]:
        raise ValueError("spectra and labels must be aligned")
    if len(spectra) == 0:
        raise ValueError("no spectra given")
    ids = sorted(int(c) for c in np.unique(labels))
    if k is not None:
        missing = sorted(set(range(k)) - set(ids))
        if missing:
            raise ValueError(f"classes {missing} have no samples")
        ids = list(range(k))
    stacked = np.stack([s.per_axis for s in spectra])
    out = []
    for cid in ids:
        members = stacked[labels == cid]
        out.append(ClassSpectralStats(class_id=cid,
                                      mean_spectrum=members.mean(axis=0),
                                      count=members.shape[0]))
    return out


def assign_weights(stats: list[ClassSpectralStats],
                   base_weights=DEFAULT_BASE_WEIGHTS) -> list[ClassSpectralStats]:
    """Attach magnification weights by roughness rank.

    Classes are ranked by total mean spectral energy, ascending (ties
    broken by class id), and `base_weights` is handed out in that order:
    the calmest class gets base_weights[0]. Returns new stats objects.
    """
    base_weights = [float(w) for w in base_weights]
    if len(base_weights) != len(stats):
        raise ValueError(f"{len(stats)} classes but {len(base_weights)} base weights")
    if any(w <= 0 for w in base_weights):
        raise ValueError("base weights must be positive")
    ranked = sorted(stats, key=lambda s: (s.energy, s.class_id))
    weighted = {s.class_id: replace(s, omega=w) for s, w in zip(ranked, base_weights)}
    return [weighted[s.class_id] for s in stats]


def traversal_cost(spectrum: AmplitudeSpectrum, stats: ClassSpectralStats) -> CostLabel:
    """Cost of one sample against its class: omega * sum over axes of
    dot(class mean spectrum, sample spectrum). Linear in the spectrum and
    zero exactly when the spectrum is orthogonal to the class mean."""
    if spectrum.per_axis.shape != stats.mean_spectrum.shape:
        raise ValueError(f"spectrum bins {spectrum.per_axis.shape} do not match "
                         f"class stats {stats.mean_spectrum.shape}")
    value = stats.omega * float(np.sum(stats.mean_spectrum * spectrum.per_axis))
    return CostLabel(value=value, class_id=stats.class_id)


@dataclass(frozen=True)
class CostNormalization:
    """Dataset min/max retained so later raw costs map into the same scale."""

    lo: float
    hi: float

    def apply(self, value: float) -> float:
        if self.hi == self.lo:
            return 0.0
        return (value - self.lo) / (self.hi - self.lo)


def normalize_costs(labels: list[CostLabel]) -> tuple[list[CostLabel], CostNormalization]:
    """Min-max normalize cost values to [0, 1].

    A constant dataset normalizes to all zeros. Order-preserving by
    construction. Returns fresh labels plus the bounds used.
    """
    if not labels:
        raise ValueError("no labels to normalize")
    values = np.array([lab.value for lab in labels])
    norm = CostNormalization(lo=float(values.min()), hi=float(values.max()))
    return [replace(lab, normalized=norm.apply(lab.value)) for lab in labels], norm


# ---------------------------------------------------------------------------
# Labeled-dataset manifest


def write_labeled_manifest(csv_path, json_path, patch_paths: list[str],
                           labels: list[CostLabel], stats: list[ClassSpectralStats],
                           norm: CostNormalization, seed: int) -> None:
    """CSV of `patch_path,class_id,cost,cost_normalized` rows plus a JSON
    sidecar holding class stats, weights, and the normalization bounds."""
    if len(patch_paths) != len(labels):
        raise ValueError("patch paths and labels must be aligned")
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["patch_path", "class_id", "cost", "cost_normalized"])
        for path, lab in zip(patch_paths, labels):
            writer.writerow([path, lab.class_id, repr(lab.value), repr(lab.normalized)])
    doc = {
        "seed": seed,
        "normalization": {"lo": norm.lo, "hi": norm.hi},
        "classes": [{"class_id": s.class_id, "count": s.count, "omega": s.omega,
                     "energy": s.energy, "mean_spectrum": s.mean_spectrum.tolist()}
                    for s in stats],
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def read_labeled_manifest(csv_path) -> tuple[list[str], list[CostLabel]]:
    paths, labels = [], []
    with open(csv_path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["patch_path", "class_id", "cost", "cost_normalized"]:
            raise ValueError(f"unexpected labeled manifest header: {header}")
        for row in reader:
            paths.append(row[0])
            labels.append(CostLabel(value=float(row[2]), class_id=int(row[1]),
                                    normalized=float(row[3])))
    return paths, labels


def read_class_stats(json_path) -> tuple[list[ClassSpectralStats], CostNormalization, int]:
    with open(json_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    stats = [ClassSpectralStats(class_id=int(c["class_id"]),
                                mean_spectrum=np.array(c["mean_spectrum"], dtype=float),
                                count=int(c["count"]), omega=float(c["omega"]))
             for c in doc["classes"]]
    norm = CostNormalization(lo=float(doc["normalization"]["lo"]),
                             hi=float(doc["normalization"]["hi"]))
    return stats, norm, int(doc["seed"])
