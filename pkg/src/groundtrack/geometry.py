"""Pinhole cameras, the ground-plane grid, and world/image/ground projections.

Conventions (fixed for the whole package):

* World frame is right-handed with z up; the ground plane is z = 0.
* A camera maps a world point X to pixels via  p ~ K (R X + t); depth is
  the z component of R X + t and must be positive for a visible point.
* The ground grid is stored row-major with its origin at the minimum
  corner; rows run along world y, columns along world x.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Homogeneous coordinates with |w| below this are treated as invalid
# (points at or beyond the horizon blow up numerically).
W_CUTOFF = 1e-10


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CameraCalibration:
    """Intrinsics and extrinsics of one pinhole camera.

    Parameters
    ----------
    intrinsic_matrix : (3, 3) upper-triangular, positive focal entries.
    rotation : (3, 3) orthonormal world-to-camera rotation.
    translation : (3,) world-to-camera translation, meters.
    image_size : (width, height) in pixels.
    """

    intrinsic_matrix: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    image_size: tuple[int, int]

    def __post_init__(self):
        K = _readonly(self.intrinsic_matrix)
        R = _readonly(self.rotation)
        t = _readonly(self.translation)
        if K.shape != (3, 3) or R.shape != (3, 3) or t.shape != (3,):
            raise ValueError("calibration arrays must be 3x3, 3x3 and 3")
        lower = np.abs(K[np.tril_indices(3, -1)])
        if lower.max() > 1e-9:
            raise ValueError("intrinsic matrix must be upper-triangular")
        if K[0, 0] <= 0 or K[1, 1] <= 0 or K[2, 2] <= 0:
            raise ValueError("intrinsic matrix needs positive diagonal")
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-9:
            raise ValueError("rotation is not orthonormal within 1e-9")
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise ValueError("image_size must be positive")
        object.__setattr__(self, "intrinsic_matrix", K)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "image_size", (int(w), int(h)))

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def project_points(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Full 3x4 perspective projection of (N, 3) world points.

        Returns (pixels (N, 2), depths (N,)).  Pixels are meaningless
        where depth <= 0; callers must check.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        cam = pts @ self.rotation.T + self.translation
        depths = cam[:, 2]
        img = cam @ self.intrinsic_matrix.T
        with np.errstate(divide="ignore", invalid="ignore"):
            pixels = img[:, :2] / img[:, 2:3]
        return pixels, depths


@dataclass(frozen=True)
class GroundGrid:
    """Dense grid over the ground plane.

    ``origin`` is the world (x, y) of the grid's minimum corner; cell
    (i, j) covers [origin + (j, i) * cell, origin + (j+1, i+1) * cell).
    """

    origin: np.ndarray
    cell_size: float = 0.025
    rows: int = 400
    cols: int = 400

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError("rows and cols must be positive")
        object.__setattr__(self, "origin", _readonly(self.origin))
        if self.origin.shape != (2,):
            raise ValueError("origin must be a 2-vector")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def extent(self) -> np.ndarray:
        """World (x, y) of the maximum corner."""
        return self.origin + np.array([self.cols, self.rows]) * self.cell_size

    def cell_center(self, row: int, col: int) -> np.ndarray:
        return self.origin + (np.array([col, row]) + 0.5) * self.cell_size

    def cell_centers(self) -> np.ndarray:
        """(rows, cols, 2) array of world coordinates of all cell centers."""
        xs = self.origin[0] + (np.arange(self.cols) + 0.5) * self.cell_size
        ys = self.origin[1] + (np.arange(self.rows) + 0.5) * self.cell_size
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx, gy], axis=-1)

    def point_to_cell(self, point) -> tuple[int, int]:
        """(row, col) of the cell containing a ground point (may be out of range)."""
        p = np.asarray(point, dtype=np.float64)
        col = int(np.floor((p[0] - self.origin[0]) / self.cell_size))
        row = int(np.floor((p[1] - self.origin[1]) / self.cell_size))
        return row, col

    def contains(self, point) -> bool:
        row, col = self.point_to_cell(point)
        return 0 <= row < self.rows and 0 <= col < self.cols


@dataclass(frozen=True)
class Homography:
    """3x3 projective map from ground-plane (x, y, 1) to image (u, v, w).

    The inverse is cached at construction; both directions are validated
    to round-trip to identity within 1e-9.
    """

    matrix: np.ndarray
    inverse: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        M = _readonly(self.matrix)
        if M.shape != (3, 3):
            raise ValueError("homography must be 3x3")
        det = np.linalg.det(M)
        if abs(det) <= 1e-12:
            raise ValueError(f"homography is singular (det={det:.3e})")
        inv = np.linalg.inv(M)
        if np.abs(M @ inv - np.eye(3)).max() > 1e-9:
            raise ValueError("homography inverse fails round-trip check")
        object.__setattr__(self, "matrix", M)
        object.__setattr__(self, "inverse", _readonly(inv))


def homography_from_calibration(calib: CameraCalibration) -> Homography:
    """Ground-plane-to-image homography K [r1 r2 t] of a calibrated camera.

    Raises ValueError when the pose is degenerate (camera center on the
    ground plane makes the matrix singular).
    """
    K, R, t = calib.intrinsic_matrix, calib.rotation, calib.translation
    M = K @ np.column_stack([R[:, 0], R[:, 1], t])
    return Homography(M)


def ground_to_image(h: Homography, point, image_size: tuple[int, int] | None = None):
    """Project a ground point (x, y) in meters to pixel coordinates.

    Returns an (2,) array, or None when the point is behind the camera
    (non-positive homogeneous depth) or, if ``image_size`` is given,
    outside [0, W-1] x [0, H-1].
    """
    p = np.asarray(point, dtype=np.float64)
    q = h.matrix @ np.array([p[0], p[1], 1.0])
    if q[2] < W_CUTOFF:
        return None
    pix = q[:2] / q[2]
    if image_size is not None:
        w, hgt = image_size
        if not (0.0 <= pix[0] <= w - 1 and 0.0 <= pix[1] <= hgt - 1):
            return None
    return pix


def image_to_ground(h: Homography, pixel):
    """Back-project a pixel (u, v) to the ground plane.

    Returns an (2,) array in meters, or None when the pixel maps behind
    the camera or sits on the horizon (degenerate w).
    """
    q = np.asarray(pixel, dtype=np.float64)
    r = h.inverse @ np.array([q[0], q[1], 1.0])
    if r[2] < W_CUTOFF:
        return None
    return r[:2] / r[2]


def project_ground_points(
    h: Homography,
    points: np.ndarray,
    image_size: tuple[int, int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ground_to_image over (N, 2) points.

    Returns (pixels (N, 2), valid (N,) bool).  Pixel values are undefined
    where valid is False.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    hom = np.column_stack([pts, np.ones(len(pts))]) @ h.matrix.T
    w = hom[:, 2]
    valid = w >= W_CUTOFF
    pixels = np.empty_like(hom[:, :2])
    np.divide(hom[:, :2], w[:, None], out=pixels, where=valid[:, None])
    if image_size is not None:
        wid, hgt = image_size
        inb = (
            (pixels[:, 0] >= 0.0)
            & (pixels[:, 0] <= wid - 1)
            & (pixels[:, 1] >= 0.0)
            & (pixels[:, 1] <= hgt - 1)
        )
        valid = valid & inb
    return pixels, valid


def look_at_calibration(
    position,
    target,
    image_size: tuple[int, int] = (640, 480),
    focal: float = 550.0,
    principal: tuple[float, float] | None = None,
) -> CameraCalibration:
    """Build a calibration for a camera at ``position`` looking at ``target``.

    The camera z axis points at the target; the image x axis is chosen
    horizontal (world z up) with a fallback for straight-down cameras.
    """
    pos = np.asarray(position, dtype=np.float64)
    tgt = np.asarray(target, dtype=np.float64)
    forward = tgt - pos
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ValueError("camera position and target coincide")
    z_c = forward / norm
    x_c = np.cross(z_c, np.array([0.0, 0.0, 1.0]))
    if np.linalg.norm(x_c) < 1e-8:  # straight up/down
        x_c = np.cross(z_c, np.array([0.0, 1.0, 0.0]))
    x_c /= np.linalg.norm(x_c)
    y_c = np.cross(z_c, x_c)
    R = np.stack([x_c, y_c, z_c])
    t = -R @ pos
    w, h = image_size
    cx, cy = principal if principal is not None else ((w - 1) / 2.0, (h - 1) / 2.0)
    K = np.array([[focal, 0.0, cx], [0.0, focal, cy], [0.0, 0.0, 1.0]])
    return CameraCalibration(K, R, t, (w, h))


# ---------------------------------------------------------------------------
# Calibration / rig files


def calibration_to_dict(calib: CameraCalibration) -> dict:
    return {
        "K": [float(v) for v in calib.intrinsic_matrix.ravel()],
        "R": [float(v) for v in calib.rotation.ravel()],
        "t": [float(v) for v in calib.translation],
        "width": calib.image_size[0],
        "height": calib.image_size[1],
    }


def calibration_from_dict(d: dict) -> CameraCalibration:
    try:
        K = np.array(d["K"], dtype=np.float64).reshape(3, 3)
        R = np.array(d["R"], dtype=np.float64).reshape(3, 3)
        t = np.array(d["t"], dtype=np.float64)
        size = (int(d["width"]), int(d["height"]))
    except (KeyError, ValueError) as e:
        raise ValueError(f"malformed calibration entry: {e}") from e
    return CameraCalibration(K, R, t, size)


def load_calibration(path) -> CameraCalibration:
    with open(path) as f:
        return calibration_from_dict(json.load(f))


def save_calibration(path, calib: CameraCalibration) -> None:
    with open(path, "w") as f:
        json.dump(calibration_to_dict(calib), f, indent=2)


def load_rig(path) -> list[tuple[str, CameraCalibration]]:
    """Load a rig file: {"cameras": [{"id": ..., "path": ...} | inline]}.

    Camera entries either reference a per-camera calibration JSON via
    ``path`` (relative to the rig file) or carry K/R/t/width/height
    inline.  Camera order in the file is the channel order used for
    heatmap stacking.
    """
    rig_path = Path(path)
    with open(rig_path) as f:
        doc = json.load(f)
    cameras = []
    for entry in doc["cameras"]:
        cam_id = str(entry["id"])
        if "path" in entry:
            calib = load_calibration(rig_path.parent / entry["path"])
        else:
            calib = calibration_from_dict(entry)
        cameras.append((cam_id, calib))
    if not cameras:
        raise ValueError("rig file lists no cameras")
    return cameras
