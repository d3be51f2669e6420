"""Deterministic synthetic driving environment.

A world is a 2-D grid of terrain classes. Each class pairs a vibration
signature (a bank of per-axis sinusoids plus broadband Gaussian noise,
injected into the roll/pitch angular velocities and the vertical
acceleration) with a procedural texture (hash noise anchored in world
coordinates, so every camera sees the same ground pattern). Simulated
drives follow a waypoint polyline at constant speed, emitting a state log
at the state rate and rendered first-person views at the image rate;
`export_dataset` then harvests aligned (patch, spectrum, class) records
the learning stages consume.

Identical seeds and parameters reproduce logs, images, and manifests
bit-for-bit.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import (CameraModel, Extrinsics, Footprint, GroundPlane,
                       bev_homography, crop_patch, project_footprints,
                       relative_extrinsics, save_calibration, warp_point,
                       warp_region, wrap_angle)
from .rasters import write_ppm
from .signals import (StateLog, amplitude_spectrum, quat_from_yaw, window_states,
                      write_state_log)

logger = logging.getLogger(__name__)

SKY_COLOR = (168, 196, 230)
_FINE_NOISE_CELL = 0.02   # meters; grain of the brightness jitter
_SPOT_CELL = 0.10         # meters; grain of the spot pattern
_MAX_RENDER_RANGE = 500.0


@dataclass(frozen=True)
class TerrainTexture:
    base_color: tuple[int, int, int]
    noise_amp: float
    spot_density: float
    spot_color: tuple[int, int, int]


@dataclass(frozen=True)
class TerrainClassSpec:
    """One terrain class: vibration bands per axis (roll, pitch, z) as
    (frequency Hz, amplitude) pairs, broadband noise levels, and the
    procedural texture."""

    class_id: int
    name: str
    roughness_rank: int
    bands: tuple[tuple[tuple[float, float], ...], ...]
    noise_amp: tuple[float, float, float]
    texture: TerrainTexture

    def __post_init__(self):
        if len(self.bands) != 3 or len(self.noise_amp) != 3:
            raise ValueError("bands and noise_amp must cover the 3 axes")
        for axis in self.bands:
            for freq, amp in axis:
                if freq <= 0 or amp < 0:
                    raise ValueError("band frequencies must be positive, amplitudes >= 0")

    @property
    def band_energy(self) -> float:
        """Sum of squared band amplitudes over all axes; the roughness
        ordering key."""
        return float(sum(amp * amp for axis in self.bands for _, amp in axis))

    def max_frequency(self) -> float:
        freqs = [freq for axis in self.bands for freq, _ in axis]
        return max(freqs) if freqs else 0.0


def default_classes() -> tuple[TerrainClassSpec, ...]:
    """Asphalt, grass, gravel: strictly increasing band energy with rank,
    visually distinct textures."""
    return (
        TerrainClassSpec(
            class_id=0, name="asphalt", roughness_rank=0,
            bands=(((21.0, 0.008),), ((19.0, 0.008),), ((25.0, 0.02),)),
            noise_amp=(0.004, 0.004, 0.008),
            texture=TerrainTexture((95, 95, 100), 10.0, 0.02, (70, 70, 75))),
        TerrainClassSpec(
            class_id=1, name="grass", roughness_rank=1,
            bands=(((11.0, 0.02), (23.0, 0.014)),
                   ((13.0, 0.02), (27.0, 0.014)),
                   ((9.0, 0.032), (21.0, 0.02))),
            noise_amp=(0.008, 0.008, 0.014),
            texture=TerrainTexture((70, 125, 60), 22.0, 0.12, (40, 90, 35))),
        TerrainClassSpec(
            class_id=2, name="gravel", roughness_rank=2,
            bands=(((8.0, 0.034), (17.0, 0.028)),
                   ((10.0, 0.034), (22.0, 0.028)),
                   ((7.0, 0.05), (15.0, 0.045), (33.0, 0.03))),
            noise_amp=(0.014, 0.014, 0.024),
            texture=TerrainTexture((150, 140, 125), 45.0, 0.35, (95, 88, 80))),
    )


@dataclass
class WorldMap:
    """Grid of terrain-class ids over a rectangle of ground.

    `origin` is the world position of the grid's (0, 0) cell corner.
    Class lookups outside the extent clamp to the border cell; drives are
    required to stay inside. `texture_seed` anchors the procedural noise
    so every render of this world agrees."""

    grid: np.ndarray
    cell_size: float
    origin: tuple[float, float]
    classes: tuple[TerrainClassSpec, ...]
    texture_seed: int = 0

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=int)
        if self.grid.ndim != 2:
            raise ValueError("grid must be 2-D")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        ids = {c.class_id for c in self.classes}
        if ids != set(range(len(self.classes))):
            raise ValueError("class ids must be 0..K-1")
        if not np.all(np.isin(self.grid, list(ids))):
            raise ValueError("grid references unknown class ids")
        ranked = sorted(self.classes, key=lambda c: c.roughness_rank)
        energies = [c.band_energy for c in ranked]
        if any(b <= a for a, b in zip(energies, energies[1:])):
            raise ValueError("band energy must strictly increase with roughness rank")

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(x_min, x_max, y_min, y_max)."""
        rows, cols = self.grid.shape
        return (self.origin[0], self.origin[0] + cols * self.cell_size,
                self.origin[1], self.origin[1] + rows * self.cell_size)

    def contains(self, x: float, y: float) -> bool:
        x0, x1, y0, y1 = self.extent
        return x0 <= x <= x1 and y0 <= y <= y1

    def class_at(self, x, y) -> np.ndarray | int:
        """Class id under world point(s); scalar in, scalar out."""
        xs = np.asarray(x, dtype=float)
        ys = np.asarray(y, dtype=float)
        rows, cols = self.grid.shape
        ix = np.clip(np.floor((xs - self.origin[0]) / self.cell_size).astype(int), 0, cols - 1)
        iy = np.clip(np.floor((ys - self.origin[1]) / self.cell_size).astype(int), 0, rows - 1)
        out = self.grid[iy, ix]
        return int(out) if np.isscalar(x) else out

    def to_dict(self) -> dict:
        return {
            "cell_size": self.cell_size,
            "origin": list(self.origin),
            "texture_seed": self.texture_seed,
            "classes": [_class_to_dict(c) for c in self.classes],
            "grid": self.grid.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "WorldMap":
        known = {"cell_size", "origin", "texture_seed", "classes", "grid"}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown world keys: {sorted(unknown)}")
        return cls(grid=np.array(doc["grid"], dtype=int),
                   cell_size=float(doc["cell_size"]),
                   origin=(float(doc["origin"][0]), float(doc["origin"][1])),
                   classes=tuple(_class_from_dict(c) for c in doc["classes"]),
                   texture_seed=int(doc["texture_seed"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "WorldMap":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _class_to_dict(c: TerrainClassSpec) -> dict:
    return {"class_id": c.class_id, "name": c.name, "roughness_rank": c.roughness_rank,
            "bands": [[list(b) for b in axis] for axis in c.bands],
            "noise_amp": list(c.noise_amp),
            "texture": {"base_color": list(c.texture.base_color),
                        "noise_amp": c.texture.noise_amp,
                        "spot_density": c.texture.spot_density,
                        "spot_color": list(c.texture.spot_color)}}


def _class_from_dict(doc: dict) -> TerrainClassSpec:
    tex = doc["texture"]
    return TerrainClassSpec(
        class_id=int(doc["class_id"]), name=str(doc["name"]),
        roughness_rank=int(doc["roughness_rank"]),
        bands=tuple(tuple((float(f), float(a)) for f, a in axis) for axis in doc["bands"]),
        noise_amp=tuple(float(v) for v in doc["noise_amp"]),
        texture=TerrainTexture(
            base_color=tuple(int(v) for v in tex["base_color"]),
            noise_amp=float(tex["noise_amp"]),
            spot_density=float(tex["spot_density"]),
            spot_color=tuple(int(v) for v in tex["spot_color"])))


def striped_world(length: float = 420.0, width: float = 16.0, stripe: float = 20.0,
                  cell_size: float = 0.5, texture_seed: int = 0,
                  classes: tuple[TerrainClassSpec, ...] | None = None) -> WorldMap:
    """Stripes of the terrain classes repeating along +x; a straight drive
    down the middle visits every class in turn."""
    classes = classes or default_classes()
    origin = (-2.0, -width / 2.0)
    cols = int(np.ceil((length + 4.0) / cell_size))
    rows = int(np.ceil(width / cell_size))
    centers_x = origin[0] + (np.arange(cols) + 0.5) * cell_size
    stripe_idx = np.floor(np.maximum(centers_x, 0.0) / stripe).astype(int)
    col_classes = stripe_idx % len(classes)
    grid = np.tile(col_classes, (rows, 1))
    return WorldMap(grid=grid, cell_size=cell_size, origin=origin,
                    classes=classes, texture_seed=texture_seed)


def two_corridor_world(boundary_y: float = -0.2, cell_size: float = 0.1,
                       texture_seed: int = 0,
                       classes: tuple[TerrainClassSpec, ...] | None = None) -> WorldMap:
    """Smooth corridor on and left of the boundary line, roughest class on
    the right: the layout used to show comfort-aware avoidance."""
    classes = classes or default_classes()
    smooth = min(classes, key=lambda c: c.roughness_rank).class_id
    rough = max(classes, key=lambda c: c.roughness_rank).class_id
    origin = (-2.0, -5.0)
    cols = int(np.ceil(12.0 / cell_size))
    rows = int(np.ceil(10.0 / cell_size))
    centers_y = origin[1] + (np.arange(rows) + 0.5) * cell_size
    grid = np.where(centers_y[:, None] < boundary_y, rough, smooth)
    grid = np.broadcast_to(grid, (rows, cols)).copy()
    return WorldMap(grid=grid, cell_size=cell_size, origin=origin,
                    classes=classes, texture_seed=texture_seed)


# ---------------------------------------------------------------------------
# Camera rig


@dataclass(frozen=True)
class CameraRig:
    """Forward-looking camera mounted `height` above the ground, pitched
    down by `pitch` radians, zero roll."""

    camera: CameraModel
    height: float = 1.0
    pitch: float = 0.35

    def __post_init__(self):
        if self.height <= 0:
            raise ValueError("camera height must be positive")
        if not 0.0 < self.pitch < np.pi / 2:
            raise ValueError("pitch must lie in (0, pi/2)")

    def extrinsics(self, position, yaw: float) -> Extrinsics:
        """World-to-camera transform for the vehicle at `position` (its
        ground point) facing `yaw`."""
        return _rig_extrinsics(np.asarray(position, dtype=float)[:2], yaw,
                               self.height, self.pitch)

    def ground_plane(self) -> GroundPlane:
        """The ground in this camera's frame (same for every vehicle pose)."""
        return GroundPlane(np.array([0.0, -np.cos(self.pitch), -np.sin(self.pitch)]),
                           self.height)


def default_rig() -> CameraRig:
    return CameraRig(CameraModel(fx=500.0, fy=500.0, cx=480.0, cy=384.0,
                                 width=960, height=768))


def _rig_extrinsics(position_xy: np.ndarray, yaw: float, height: float,
                    pitch: float) -> Extrinsics:
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    x_c = np.array([sy, -cy, 0.0])              # image right
    y_c = np.array([-sp * cy, -sp * sy, -cp])   # image down
    z_c = np.array([cp * cy, cp * sy, -sp])     # optical axis
    rot = np.stack([x_c, y_c, z_c])
    center = np.array([position_xy[0], position_xy[1], height])
    return Extrinsics(rot, -rot @ center)


def _bev_extrinsics(position_xy: np.ndarray, yaw: float, ahead: float,
                    height: float) -> Extrinsics:
    """Straight-down camera above the point `ahead` meters in front of the
    vehicle; image up is the driving direction."""
    cy, sy = np.cos(yaw), np.sin(yaw)
    rot = np.stack([np.array([sy, -cy, 0.0]),
                    np.array([-cy, -sy, 0.0]),
                    np.array([0.0, 0.0, -1.0])])
    center = np.array([position_xy[0] + ahead * cy,
                       position_xy[1] + ahead * sy, height])
    return Extrinsics(rot, -rot @ center)


# ---------------------------------------------------------------------------
# Procedural texture


def _hash01(ix: np.ndarray, iy: np.ndarray, salt: int) -> np.ndarray:
    """Uniform [0, 1) values from integer lattice coordinates; pure
    function of (ix, iy, salt)."""
    salt_mix = np.uint64((salt * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF)
    z = (ix.astype(np.int64).astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
         ^ iy.astype(np.int64).astype(np.uint64) * np.uint64(0xBF58476D1CE4E5B9)
         ^ salt_mix)
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return z.astype(np.float64) / float(2 ** 64)


def terrain_color(world: WorldMap, xs: np.ndarray, ys: np.ndarray,
                  seed: int | None = None) -> np.ndarray:
    """Procedural ground color at world points (vectorized, uint8 (..., 3)).

    View-independent: color depends only on the world coordinates, the
    class underneath, and the texture seed.
    """
    seed = world.texture_seed if seed is None else seed
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    cls = world.class_at(xs, ys)

    base = np.array([c.texture.base_color for c in world.classes], dtype=np.float32)
    spot = np.array([c.texture.spot_color for c in world.classes], dtype=np.float32)
    noise_amp = np.array([c.texture.noise_amp for c in world.classes], dtype=np.float32)
    density = np.array([c.texture.spot_density for c in world.classes])

    jitter_u = _hash01(np.floor(xs / _FINE_NOISE_CELL), np.floor(ys / _FINE_NOISE_CELL),
                       2 * seed + 1)
    spot_u = _hash01(np.floor(xs / _SPOT_CELL), np.floor(ys / _SPOT_CELL), 2 * seed + 2)

    color = base[cls]
    spotted = spot_u < density[cls]
    color[spotted] = spot[cls[spotted]]
    jitter = ((jitter_u - 0.5).astype(np.float32) * (2.0 * noise_amp[cls]))
    color += jitter[..., None]
    np.clip(np.rint(color, out=color), 0, 255, out=color)
    return color.astype(np.uint8)


# Ray/plane geometry is pose-independent for a rigid rig, so the hit mask
# and camera-frame hit points are cached per (camera, plane).
_RAY_CACHE: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}


def _ground_hits(cam: CameraModel, plane: GroundPlane) -> tuple[np.ndarray, np.ndarray]:
    key = (cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height,
           tuple(plane.normal), plane.dist)
    cached = _RAY_CACHE.get(key)
    if cached is not None:
        return cached
    k_inv = cam.inverse_matrix()
    us, vs = np.meshgrid(np.arange(cam.width, dtype=float),
                         np.arange(cam.height, dtype=float))
    dirs = np.tensordot(k_inv, np.stack([us, vs, np.ones_like(us)]), axes=1)
    denom = np.tensordot(plane.normal, dirs, axes=1)
    hit = denom < -1e-9
    s = np.where(hit, -plane.dist / np.where(hit, denom, 1.0), np.inf)
    hit &= s < _MAX_RENDER_RANGE
    pts_cam = (dirs[:, hit] * s[hit]).T.copy()  # (M, 3)
    if len(_RAY_CACHE) > 8:
        _RAY_CACHE.clear()
    _RAY_CACHE[key] = (hit, pts_cam)
    return hit, pts_cam


def render_view(world: WorldMap, cam: CameraModel, pose, plane: GroundPlane,
                seed: int | None = None) -> np.ndarray:
    """Render the first-person view from a vehicle pose.

    `pose` is (position, yaw) of the vehicle's ground point; `plane` is
    the camera-frame ground plane of a zero-roll rig and fixes the mount
    height and pitch. Each pixel's ray is intersected with the ground and
    shaded by the procedural texture; rays that miss get the sky color.
    """
    position, yaw = pose
    n = plane.normal
    if abs(n[0]) > 1e-9:
        raise ValueError("ground plane implies a rolled camera; only zero-roll rigs render")
    pitch = float(np.arctan2(-n[2], -n[1]))
    ext = _rig_extrinsics(np.asarray(position, dtype=float)[:2], float(yaw),
                          plane.dist, pitch)

    hit, pts_cam = _ground_hits(cam, plane)
    cam_pos = ext.camera_position()
    r_t = ext.rotation.T
    xs = pts_cam @ r_t[0] + cam_pos[0]
    ys = pts_cam @ r_t[1] + cam_pos[1]

    image = np.empty((cam.height, cam.width, 3), dtype=np.uint8)
    image[:] = np.array(SKY_COLOR, dtype=np.uint8)
    image[hit] = terrain_color(world, xs, ys, seed)
    return image


# ---------------------------------------------------------------------------
# Driving


class _Polyline:
    def __init__(self, waypoints):
        pts = np.asarray(waypoints, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError("path needs at least 2 waypoints of (x, y)")
        seg = np.diff(pts, axis=0)
        lengths = np.linalg.norm(seg, axis=1)
        if np.any(lengths <= 0):
            raise ValueError("consecutive waypoints must be distinct")
        self.pts = pts
        self.cum = np.concatenate([[0.0], np.cumsum(lengths)])
        self.yaws = np.arctan2(seg[:, 1], seg[:, 0])
        self.total = float(self.cum[-1])

    def eval(self, s: np.ndarray):
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.total)
        idx = np.clip(np.searchsorted(self.cum, s, side="right") - 1,
                      0, len(self.yaws) - 1)
        seg_len = self.cum[idx + 1] - self.cum[idx]
        frac = (s - self.cum[idx]) / seg_len
        pos = self.pts[idx] + frac[..., None] * (self.pts[idx + 1] - self.pts[idx])
        return pos, self.yaws[idx]


@dataclass
class DriveImage:
    t: float
    image: np.ndarray
    position: np.ndarray
    yaw: float


@dataclass
class DriveResult:
    log: StateLog
    images: list[DriveImage]
    rig: CameraRig
    world: WorldMap
    seed: int
    speed: float
    state_rate: float
    image_rate: float


def simulate_drive(world: WorldMap, path, speed: float = 1.0,
                   state_rate: float = 200.0, image_rate: float = 5.0,
                   seed: int = 0, rig: CameraRig | None = None,
                   render: bool = True) -> DriveResult:
    """Drive the waypoint polyline at constant speed.

    At every state tick the terrain class under the vehicle drives the
    (w_roll, w_pitch, a_z) channels: the class's sinusoid bank (random
    phases fixed per drive) plus Gaussian broadband noise. Yaw follows the
    path tangent. Views are rendered at `image_rate` (set `render=False`
    to skip them when only the log matters).
    """
    rig = rig or default_rig()
    if image_rate > state_rate:
        raise ValueError("image_rate cannot exceed state_rate")
    if speed <= 0 or state_rate <= 0 or image_rate <= 0:
        raise ValueError("speed and rates must be positive")
    line = _Polyline(path)
    for x, y in line.pts:
        if not world.contains(x, y):
            raise ValueError(f"path waypoint ({x}, {y}) is outside the world extent")
    nyquist = state_rate / 2.0
    for spec in world.classes:
        if spec.max_frequency() >= nyquist:
            raise ValueError(f"class {spec.name!r} has bands at or above Nyquist "
                             f"({nyquist} Hz)")

    duration = line.total / speed
    n_states = int(round(duration * state_rate))
    if n_states < 1:
        raise ValueError("path too short for even one state sample")
    rng = np.random.default_rng(seed)
    phases = {(spec.class_id, axis, b): rng.uniform(0.0, 2.0 * np.pi)
              for spec in world.classes
              for axis in range(3)
              for b in range(len(spec.bands[axis]))}
    noise = rng.standard_normal((n_states, 3))

    t = np.arange(n_states) / state_rate
    pos, yaw = line.eval(speed * t)
    cls = world.class_at(pos[:, 0], pos[:, 1])

    signal = np.zeros((n_states, 3))
    for spec in world.classes:
        mask = cls == spec.class_id
        if not mask.any():
            continue
        tm = t[mask]
        for axis in range(3):
            val = np.zeros(tm.shape[0])
            for b, (freq, amp) in enumerate(spec.bands[axis]):
                val += amp * np.sin(2.0 * np.pi * freq * tm
                                    + phases[(spec.class_id, axis, b)])
            val += spec.noise_amp[axis] * noise[mask, axis]
            signal[mask, axis] = val

    dt = 1.0 / state_rate
    w_yaw = np.zeros(n_states)
    if n_states > 1:
        dyaw = (np.diff(yaw) + np.pi) % (2.0 * np.pi) - np.pi
        w_yaw[1:] = dyaw / dt

    p = np.column_stack([pos, np.zeros(n_states)])
    q = np.column_stack([np.cos(yaw / 2.0), np.zeros(n_states),
                         np.zeros(n_states), np.sin(yaw / 2.0)])
    w = np.column_stack([signal[:, 0], signal[:, 1], w_yaw])
    a = np.column_stack([np.zeros(n_states), np.zeros(n_states), signal[:, 2]])
    log = StateLog(t, p, q, w, a)

    images: list[DriveImage] = []
    if render:
        plane = rig.ground_plane()
        n_images = int(round(duration * image_rate))
        for j in range(n_images):
            tj = j / image_rate
            pj, yj = line.eval(np.array([speed * tj]))
            view = render_view(world, rig.camera, (pj[0], float(yj[0])), plane)
            images.append(DriveImage(t=tj, image=view, position=pj[0], yaw=float(yj[0])))

    return DriveResult(log=log, images=images, rig=rig, world=world, seed=seed,
                       speed=speed, state_rate=state_rate, image_rate=image_rate)


# ---------------------------------------------------------------------------
# Dataset harvesting


@dataclass
class ExportParams:
    window: int = 256
    stride: int = 128
    taper: str = "rectangular"
    heading_threshold: float = 0.26
    max_footprints: int = 10
    patch_width: int = 256
    patch_height: int = 256
    bev_augment: bool = True
    bev_height: float = 4.0
    bev_ahead: float = 2.5


@dataclass
class HarvestedDataset:
    """In-memory dataset: window spectra plus per-record patch links.

    Records reference windows by index; `window_classes` holds the ground
    truth class under each window's anchor.
    """

    spectra: np.ndarray            # (n_windows, 3 * bins)
    window_classes: np.ndarray     # (n_windows,)
    window_anchors: np.ndarray     # (n_windows, 4): t, x, y, yaw
    records: list[dict] = field(default_factory=list)
    patches: list[np.ndarray] | None = None
    skipped_images: int = 0


def harvest_records(drive: DriveResult, params: ExportParams | None = None,
                    keep_patches: bool = True,
                    patch_callback=None) -> HarvestedDataset:
    """Align image patches with the state windows traversing them.

    For every rendered view, the anchors of all not-yet-reached windows
    become candidate footprints; they are heading-filtered, truncated to
    the nearest `max_footprints`, projected, and cropped. With
    `bev_augment` the view is also homography-warped into a birds-eye
    image and the surviving footprints are cropped there too (sharing the
    source window's spectrum and class). Patches are accumulated in
    memory unless a `patch_callback(patch, record) -> value stored in
    record["patch"]` consumes them instead.
    """
    params = params or ExportParams()
    world = drive.world
    rig = drive.rig
    cam = rig.camera
    plane = rig.ground_plane()

    windows = window_states(drive.log, params.window, params.stride)
    if not windows:
        raise ValueError("drive log is shorter than one window")
    spectra = np.stack([amplitude_spectrum(w, params.taper).concatenated
                        for w in windows])
    anchors = np.array([[w.anchor.t, w.anchor.position[0], w.anchor.position[1],
                         w.anchor.yaw] for w in windows])
    window_classes = world.class_at(anchors[:, 1], anchors[:, 2])

    ds = HarvestedDataset(spectra=spectra, window_classes=np.asarray(window_classes),
                          window_anchors=anchors,
                          patches=[] if keep_patches else None)

    for img_idx, shot in enumerate(drive.images):
        ext = rig.extrinsics(shot.position, shot.yaw)
        future = np.where(anchors[:, 0] >= shot.t)[0]
        candidates = [Footprint(index=int(widx), yaw=wrap_angle(anchors[widx, 3]),
                                p_world=np.array([anchors[widx, 1], anchors[widx, 2], 0.0]))
                      for widx in future]
        kept = project_footprints(candidates, cam, ext,
                                  theta=params.heading_threshold,
                                  m=params.max_footprints)
        emitted = 0
        homography = None
        if kept and params.bev_augment:
            bev_ext = _bev_extrinsics(np.asarray(shot.position)[:2], shot.yaw,
                                      params.bev_ahead, params.bev_height)
            homography = bev_homography(relative_extrinsics(ext, bev_ext), plane)

        for fp in kept:
            patch = crop_patch(shot.image, fp.p_pixel, params.patch_width,
                               params.patch_height)
            if patch is not None:
                _emit(ds, patch, fp, img_idx, bev=False, callback=patch_callback)
                emitted += 1
            if homography is not None:
                bev_patch = _bev_patch(shot.image, fp.p_pixel, homography, cam,
                                       params.patch_width, params.patch_height)
                if bev_patch is not None:
                    _emit(ds, bev_patch, fp, img_idx, bev=True, callback=patch_callback)
                    emitted += 1
        if emitted == 0:
            ds.skipped_images += 1
    if ds.skipped_images:
        logger.info("%d images yielded no valid footprints", ds.skipped_images)
    return ds


def _bev_patch(image: np.ndarray, p_pixel: np.ndarray, homography: np.ndarray,
               cam: CameraModel, w: int, h: int) -> np.ndarray | None:
    """Birds-eye patch around a projected footprint, or None.

    The crop box must sit inside the nominal BEV image bounds and its
    whole preimage must be real source pixels, otherwise fill values from
    outside the camera's field would leak into the texture. Corners
    suffice for the visibility check: the box's preimage is a quad
    (homographies map lines to lines) and the source rectangle is convex.
    Only the needed window of the warp is computed.
    """
    p_bev = warp_point(p_pixel, homography, cam)
    u0 = round(float(p_bev[0])) - w // 2
    v0 = round(float(p_bev[1])) - h // 2
    if u0 < 0 or v0 < 0 or u0 + w > cam.width or v0 + h > cam.height:
        return None
    m = cam.matrix() @ np.linalg.inv(homography) @ cam.inverse_matrix()
    for cu, cv in ((u0, v0), (u0 + w - 1, v0), (u0, v0 + h - 1), (u0 + w - 1, v0 + h - 1)):
        q = m @ np.array([cu, cv, 1.0])
        if q[2] <= 1e-12:
            return None
        x, y = q[0] / q[2], q[1] / q[2]
        if not (0.0 <= x <= cam.width - 1 and 0.0 <= y <= cam.height - 1):
            return None
    return warp_region(image, homography, cam, u0, v0, w, h)


def _emit(ds: HarvestedDataset, patch: np.ndarray, fp: Footprint, img_idx: int,
          bev: bool, callback) -> None:
    record = {"window": fp.index,
              "class_id": int(ds.window_classes[fp.index]),
              "image": img_idx, "bev": bev,
              "footprint": [float(fp.p_world[0]), float(fp.p_world[1]), 0.0]}
    if callback is not None:
        record["patch"] = callback(patch, record)
    elif ds.patches is not None:
        record["patch"] = len(ds.patches)
        ds.patches.append(patch)
    ds.records.append(record)


def export_dataset(drive: DriveResult, out_dir, params: ExportParams | None = None) -> dict:
    """Write a drive and its harvested records under `out_dir`.

    Layout: log.csv, world.json, calibration.json (camera + vehicle-frame
    extrinsics + ground plane), images/*.ppm, patches/*.ppm, spectra.npy,
    and manifest.json tying records to windows. All paths inside the
    manifest are relative so re-runs in different directories compare
    byte-for-byte. Returns the manifest dict.
    """
    from pathlib import Path

    params = params or ExportParams()
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "patches").mkdir(parents=True, exist_ok=True)

    counter = {"n": 0}

    def _write_patch(patch: np.ndarray, record: dict) -> str:
        kind = "bev" if record["bev"] else "fp"
        rel = f"patches/{kind}_{counter['n']:06d}.ppm"
        write_ppm(out / rel, patch)
        counter["n"] += 1
        return rel

    ds = harvest_records(drive, params, keep_patches=False, patch_callback=_write_patch)

    write_state_log(drive.log, out / "log.csv")
    drive.world.save(out / "world.json")
    origin_ext = drive.rig.extrinsics(np.zeros(3), 0.0)
    save_calibration(out / "calibration.json", drive.rig.camera, origin_ext,
                     drive.rig.ground_plane())
    np.save(out / "spectra.npy", ds.spectra)

    images_meta = []
    for idx, shot in enumerate(drive.images):
        rel = f"images/img_{idx:05d}.ppm"
        write_ppm(out / rel, shot.image)
        images_meta.append({"file": rel, "t": shot.t,
                            "position": [float(shot.position[0]), float(shot.position[1])],
                            "yaw": shot.yaw})

    manifest = {
        "seed": drive.seed,
        "speed": drive.speed,
        "state_rate": drive.state_rate,
        "image_rate": drive.image_rate,
        "rig": {"height": drive.rig.height, "pitch": drive.rig.pitch},
        "params": {k: getattr(params, k) for k in ExportParams.__dataclass_fields__},
        "log": "log.csv",
        "world": "world.json",
        "calibration": "calibration.json",
        "spectra": "spectra.npy",
        "n_windows": int(ds.spectra.shape[0]),
        "window_classes": [int(c) for c in ds.window_classes],
        "window_anchors": ds.window_anchors.tolist(),
        "images": images_meta,
        "records": ds.records,
        "skipped_images": ds.skipped_images,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True)
        fh.write("\n")
    return manifest
