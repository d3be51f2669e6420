"""Ground-plane costmaps aggregated from per-patch cost predictions.

The grid lives in the vehicle frame at the moment the image was taken:
x forward, y left, origin under the camera. Cells hold mean predicted
cost in [0, 1]; cells no patch reached stay UNKNOWN (NaN in memory, 255
in the PGM export, with known costs scaled to 0..254 so the sentinel
stays unambiguous).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .features import texture_feature
from .geometry import CameraModel, Extrinsics, GroundPlane, crop_patch
from .learning import RegressorModel, predict
from .rasters import read_pgm, write_pgm

UNKNOWN_PGM = 255
_COST_SCALE = 254.0


@dataclass(frozen=True)
class GridSpec:
    """Costmap geometry: `origin` is the vehicle-frame position of the
    (0, 0) cell corner; cell (ix, iy) covers
    [origin + i*res, origin + (i+1)*res) on each axis."""

    origin: tuple[float, float] = (0.0, -4.0)
    resolution: float = 0.1
    width: int = 80
    height: int = 80

    def __post_init__(self):
        if self.resolution <= 0 or self.width < 1 or self.height < 1:
            raise ValueError("grid needs positive resolution and size")


@dataclass
class Costmap:
    spec: GridSpec
    cells: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)

    @classmethod
    def empty(cls, spec: GridSpec) -> "Costmap":
        return cls(spec=spec,
                   cells=np.full((spec.height, spec.width), np.nan),
                   counts=np.zeros((spec.height, spec.width), dtype=int))

    def cell_index(self, point) -> tuple[int, int] | None:
        """(ix, iy) of the cell containing a vehicle-frame (x, y) point, or
        None outside the grid."""
        ix = int(np.floor((point[0] - self.spec.origin[0]) / self.spec.resolution))
        iy = int(np.floor((point[1] - self.spec.origin[1]) / self.spec.resolution))
        if 0 <= ix < self.spec.width and 0 <= iy < self.spec.height:
            return ix, iy
        return None

    def value_at(self, point) -> float:
        """Cell cost at a point; NaN when unknown or outside the grid."""
        idx = self.cell_index(point)
        if idx is None:
            return float("nan")
        return float(self.cells[idx[1], idx[0]])

    @property
    def known_mask(self) -> np.ndarray:
        return ~np.isnan(self.cells)


def build_costmap(image: np.ndarray, model: RegressorModel, cam: CameraModel,
                  ext: Extrinsics, plane: GroundPlane, spec: GridSpec,
                  patch_size: int = 256) -> Costmap:
    """Predict per-patch costs over the lower image half and splat them
    into a vehicle-frame grid.

    The lower half is tiled into `patch_size` squares at 50% overlap; each
    patch's center pixel is cast through the ground plane and the patch's
    predicted cost lands in the cell containing the hit point (overlaps
    averaged). Patches whose center ray misses the plane are skipped;
    `ext` must be the vehicle-to-camera transform so hits come out in the
    costmap frame.
    """
    image = np.asarray(image)
    h, w = image.shape[:2]
    stride = max(1, patch_size // 2)
    k_inv = cam.inverse_matrix()
    cam_to_vehicle_r = ext.rotation.T
    out = Costmap.empty(spec)
    sums = np.zeros_like(out.cells)
    sums[:] = 0.0

    row0 = h // 2
    for top in range(row0, h - patch_size + 1, stride):
        for left in range(0, w - patch_size + 1, stride):
            patch = image[top:top + patch_size, left:left + patch_size]
            center = np.array([left + patch_size / 2.0, top + patch_size / 2.0, 1.0])
            ray = k_inv @ center
            s = plane.intersect_ray(ray)
            if s is None:
                continue
            hit_cam = s * ray
            hit_vehicle = cam_to_vehicle_r @ (hit_cam - ext.translation)
            idx = out.cell_index(hit_vehicle[:2])
            if idx is None:
                continue
            _, cost_value = predict(model, texture_feature(patch))
            ix, iy = idx
            sums[iy, ix] += cost_value
            out.counts[iy, ix] += 1

    known = out.counts > 0
    out.cells[known] = sums[known] / out.counts[known]
    return out


def save_costmap(costmap: Costmap, pgm_path, json_path) -> None:
    """PGM with known costs scaled to 0..254 and UNKNOWN = 255, plus a JSON
    header carrying the grid geometry."""
    encoded = np.full(costmap.cells.shape, UNKNOWN_PGM, dtype=np.uint8)
    known = costmap.known_mask
    encoded[known] = np.clip(np.rint(costmap.cells[known] * _COST_SCALE), 0, 254).astype(np.uint8)
    write_pgm(pgm_path, encoded)
    doc = {"origin": list(costmap.spec.origin),
           "resolution": costmap.spec.resolution,
           "width": costmap.spec.width,
           "height": costmap.spec.height}
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_costmap(pgm_path, json_path) -> Costmap:
    with open(json_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    spec = GridSpec(origin=(float(doc["origin"][0]), float(doc["origin"][1])),
                    resolution=float(doc["resolution"]),
                    width=int(doc["width"]), height=int(doc["height"]))
    encoded = read_pgm(pgm_path)
    if encoded.shape != (spec.height, spec.width):
        raise ValueError("costmap PGM size does not match its JSON header")
    cells = np.full(encoded.shape, np.nan)
    known = encoded != UNKNOWN_PGM
    cells[known] = encoded[known] / _COST_SCALE
    counts = known.astype(int)
    return Costmap(spec=spec, cells=cells, counts=counts)
