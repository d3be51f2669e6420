"""Pinhole camera geometry: footprint projection, patch cropping, and
plane-induced homography warping between camera views.

Conventions
-----------
* Pixel coordinates are (u, v): u grows to the right, v grows downward.
* `Extrinsics` holds the rigid transform *into* the camera frame:
  x_cam = R @ x_src + t, where the source frame is whatever frame the
  caller projects from (world, vehicle, or another camera).
* `GroundPlane` describes the ground in a camera's frame. Points x on the
  plane satisfy ``normal . x + dist = 0`` with ``dist > 0``; the normal
  points from the plane toward the camera. Under this convention the
  plane-induced homography between two views is exactly
  ``H = R - (t @ normal^T) / dist`` for the camera-to-camera transform
  (R, t).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = (a + np.pi) % (2.0 * np.pi) - np.pi
    if w == -np.pi:
        w = np.pi
    return float(w)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus image size (pixels)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def inverse_matrix(self) -> np.ndarray:
        return np.array([[1.0 / self.fx, 0.0, -self.cx / self.fx],
                         [0.0, 1.0 / self.fy, -self.cy / self.fy],
                         [0.0, 0.0, 1.0]])

    def contains(self, uv: np.ndarray) -> bool:
        return bool(0.0 <= uv[0] < self.width and 0.0 <= uv[1] < self.height)


@dataclass(frozen=True)
class Extrinsics:
    """Rigid transform into a camera frame: x_cam = rotation @ x + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        if R.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be (3,3) and translation (3,)")
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9:
            raise ValueError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("rotation determinant must be 1 within 1e-9")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one (3,) point or an (N, 3) batch into the camera frame."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def camera_position(self) -> np.ndarray:
        """Origin of the camera, expressed in the source frame."""
        return -self.rotation.T @ self.translation


def relative_extrinsics(src: Extrinsics, dst: Extrinsics) -> Extrinsics:
    """Transform from the `src` camera frame into the `dst` camera frame,
    given both cameras' extrinsics w.r.t. a common frame."""
    R = dst.rotation @ src.rotation.T
    t = dst.translation - R @ src.translation
    return Extrinsics(R, t)


@dataclass(frozen=True)
class GroundPlane:
    """Ground plane in a camera frame; see module docstring for the sign
    convention (normal . x + dist = 0 on the plane, dist > 0)."""

    normal: np.ndarray
    dist: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if n.shape != (3,):
            raise ValueError("normal must be a 3-vector")
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("normal must be unit length within 1e-9")
        if self.dist <= 0:
            raise ValueError("dist must be positive")
        object.__setattr__(self, "normal", n)

    def intersect_ray(self, direction: np.ndarray):
        """Range s > 0 such that s*direction lies on the plane, or None when
        the ray is parallel to or points away from it."""
        denom = float(self.normal @ np.asarray(direction, dtype=float))
        if abs(denom) < 1e-12:
            return None
        s = -self.dist / denom
        return s if s > 0 else None


@dataclass(frozen=True)
class Footprint:
    """A ground position the vehicle traverses, with heading, optionally
    paired with its projection into an image."""

    index: int
    yaw: float
    p_world: np.ndarray
    p_pixel: np.ndarray | None = None

    def __post_init__(self):
        if not (-np.pi < self.yaw <= np.pi):
            raise ValueError("yaw must lie in (-pi, pi]")
        p = np.asarray(self.p_world, dtype=float)
        if p.shape != (3,):
            raise ValueError("p_world must be a 3-vector")
        object.__setattr__(self, "p_world", p)


def project_point(p: np.ndarray, cam: CameraModel, ext: Extrinsics) -> np.ndarray | None:
    """Perspective-project a world point; None when behind the camera or
    outside the image."""
    x = ext.apply(p)
    if x[2] <= 0:
        return None
    uv = np.array([cam.fx * x[0] / x[2] + cam.cx, cam.fy * x[1] / x[2] + cam.cy])
    if not cam.contains(uv):
        return None
    return uv


def project_footprints(footprints: list[Footprint], cam: CameraModel, ext: Extrinsics,
                       theta: float = 0.26, m: int = 10) -> list[Footprint]:
    """Select and project vehicle footprints into an image.

    Keeps footprints whose yaw is within `theta` of the first footprint's
    yaw (differences wrapped to (-pi, pi]), then the `m` nearest to the
    camera by Euclidean distance. Each survivor is projected; footprints
    behind the camera or falling outside the image are dropped. The result
    is ordered by increasing distance from the camera.
    """
    if not footprints:
        return []
    if theta < 0 or m < 1:
        raise ValueError("theta must be >= 0 and m >= 1")
    ref_yaw = footprints[0].yaw
    aligned = [fp for fp in footprints
               if abs(wrap_angle(fp.yaw - ref_yaw)) <= theta]
    cam_pos = ext.camera_position()
    aligned.sort(key=lambda fp: float(np.linalg.norm(fp.p_world - cam_pos)))
    out = []
    for fp in aligned[:m]:
        uv = project_point(fp.p_world, cam, ext)
        if uv is not None:
            out.append(replace(fp, p_pixel=uv))
    return out


def crop_patch(image: np.ndarray, center, w: int, h: int) -> np.ndarray | None:
    """Crop an axis-aligned w x h box centered on a pixel.

    The center is rounded to the nearest integer pixel; the box spans
    columns [cu - w//2, cu - w//2 + w) and the analogous rows. Boxes that
    cross any image border are rejected (returns None) rather than padded,
    so every returned patch contains only real pixels.
    """
    if w < 1 or h < 1:
        raise ValueError("patch size must be >= 1")
    image = np.asarray(image)
    u0 = int(round(float(center[0]))) - w // 2
    v0 = int(round(float(center[1]))) - h // 2
    H, W = image.shape[:2]
    if u0 < 0 or v0 < 0 or u0 + w > W or v0 + h > H:
        return None
    return image[v0:v0 + h, u0:u0 + w].copy()


def bev_homography(ext_fp_to_bev: Extrinsics, plane: GroundPlane) -> np.ndarray:
    """Euclidean homography carrying normalized first-person-view rays of
    ground-plane points into the birds-eye camera frame.

    `ext_fp_to_bev` is the FP-camera-to-BEV-camera transform; `plane` is
    the ground plane in the FP camera frame.
    """
    if plane.dist <= 0:
        raise ValueError("plane distance must be positive")
    return ext_fp_to_bev.rotation - np.outer(ext_fp_to_bev.translation, plane.normal) / plane.dist


def warp_point(p_fp, H: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Transfer a first-person-view pixel through a plane-induced homography.

    Accepts a (u, v) pixel or a homogeneous 3-vector; computes
    K @ H @ K^-1 @ p and divides by the third coordinate. Raises when the
    point maps to infinity.
    """
    p = np.asarray(p_fp, dtype=float)
    if p.shape == (2,):
        p = np.array([p[0], p[1], 1.0])
    if p.shape != (3,):
        raise ValueError("p_fp must be a pixel (2,) or homogeneous (3,) vector")
    q = cam.matrix() @ H @ cam.inverse_matrix() @ p
    if abs(q[2]) < 1e-12:
        raise ValueError("point maps to infinity under this homography")
    return q[:2] / q[2]


def warp_image_to_bev(image: np.ndarray, H: np.ndarray, cam: CameraModel,
                      out_size: tuple[int, int] | None = None,
                      fill: int = 0) -> np.ndarray:
    """Warp an image into the birds-eye view induced by homography `H`.

    Inverse mapping: every output pixel is transferred back through H^-1
    and sampled from the source with bilinear interpolation. Output pixels
    whose preimage is outside the source (or on the wrong side of the
    camera, where the homogeneous coordinate flips sign) get `fill`.
    `out_size` is (width, height), defaulting to the source size.
    """
    image = np.asarray(image)
    if out_size is None:
        out_h, out_w = image.shape[0], image.shape[1]
    else:
        out_w, out_h = out_size
    return warp_region(image, H, cam, 0, 0, out_w, out_h, fill)


def warp_region(image: np.ndarray, H: np.ndarray, cam: CameraModel,
                u0: int, v0: int, out_w: int, out_h: int,
                fill: int = 0) -> np.ndarray:
    """Warp just the output window [u0, u0+out_w) x [v0, v0+out_h) of the
    birds-eye view; pixel (i, j) of the result equals pixel
    (u0+i, v0+j) of the full warp."""
    image = np.asarray(image)
    try:
        H_inv = np.linalg.inv(np.asarray(H, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise ValueError("homography is singular") from exc
    M = cam.matrix() @ H_inv @ cam.inverse_matrix()

    us, vs = np.meshgrid(np.arange(u0, u0 + out_w, dtype=float),
                         np.arange(v0, v0 + out_h, dtype=float))
    src_x = M[0, 0] * us + M[0, 1] * vs + M[0, 2]
    src_y = M[1, 0] * us + M[1, 1] * vs + M[1, 2]
    wcoord = M[2, 0] * us + M[2, 1] * vs + M[2, 2]
    valid = wcoord > 1e-12
    safe_w = np.where(valid, wcoord, 1.0)
    x = src_x / safe_w
    y = src_y / safe_w

    h, w = image.shape[:2]
    valid &= (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)
    x = np.where(valid, x, 0.0)
    y = np.where(valid, y, 0.0)

    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    if image.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]

    flat = image.reshape(h * w, -1).astype(np.float64)
    base0 = y0 * w
    base1 = y1 * w
    shape = x.shape + (flat.shape[1],)
    p00 = flat.take((base0 + x0).ravel(), axis=0).reshape(shape)
    p01 = flat.take((base0 + x1).ravel(), axis=0).reshape(shape)
    p10 = flat.take((base1 + x0).ravel(), axis=0).reshape(shape)
    p11 = flat.take((base1 + x1).ravel(), axis=0).reshape(shape)
    if image.ndim == 2:
        p00, p01, p10, p11 = p00[..., 0], p01[..., 0], p10[..., 0], p11[..., 0]

    top = p00 + (p01 - p00) * fx
    bot = p10 + (p11 - p10) * fx
    out = top + (bot - top) * fy

    mask = valid if image.ndim == 2 else valid[..., None]
    out = np.where(mask, out, float(fill))
    if image.dtype == np.uint8:
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return out


def save_calibration(path, cam: CameraModel, ext: Extrinsics, plane: GroundPlane) -> None:
    doc = {
        "camera": {"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
                   "width": cam.width, "height": cam.height},
        "extrinsics": {"rotation": ext.rotation.tolist(),
                       "translation": ext.translation.tolist()},
        "ground_plane": {"normal": plane.normal.tolist(), "dist": plane.dist},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_calibration(path) -> tuple[CameraModel, Extrinsics, GroundPlane]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    unknown = set(doc) - {"camera", "extrinsics", "ground_plane"}
    if unknown:
        raise ValueError(f"unknown calibration keys: {sorted(unknown)}")
    c = doc["camera"]
    cam = CameraModel(fx=float(c["fx"]), fy=float(c["fy"]), cx=float(c["cx"]),
                      cy=float(c["cy"]), width=int(c["width"]), height=int(c["height"]))
    e = doc["extrinsics"]
    ext = Extrinsics(np.array(e["rotation"], dtype=float),
                     np.array(e["translation"], dtype=float))
    g = doc["ground_plane"]
    plane = GroundPlane(np.array(g["normal"], dtype=float), float(g["dist"]))
    return cam, ext, plane
