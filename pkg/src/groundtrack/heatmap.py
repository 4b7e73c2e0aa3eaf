"""Ground-truth heatmap construction and the focal learning objective.

Two label styles are supported: the perspective-corrected one (equal-radius
disks stamped on the ground grid and back-projected into each view, so the
view-space blob is pre-distorted) and the classic truncated-Gaussian
keypoint heatmap used as a baseline.  The focal loss is a pure function
with an exact analytic gradient so it can be checked against finite
differences.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .geometry import GroundGrid, Homography, project_ground_points

CLAMP_EPS = 1e-7  # log() guard; predictions are clipped to [eps, 1-eps]

OMAP_MAGIC = b"OMAP"
_OMAP_HEADER = struct.Struct("<4sIIf")  # magic, rows, cols, cell_size


@dataclass
class OccupancyMap:
    """Dense scalar field over a ground grid or an image-pixel lattice.

    ``grid`` is None for image-plane maps; then rows/cols are pixel
    coordinates (row = v, col = u).
    """

    values: np.ndarray
    grid: GroundGrid | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ValueError("occupancy map values must be 2-D")
        if self.grid is not None and self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def clamped(self) -> "OccupancyMap":
        return OccupancyMap(np.clip(self.values, 0.0, 1.0), self.grid)


@dataclass(frozen=True)
class FocalLossParams:
    """Exponents of the focal objective; both must be positive."""

    alpha: float = 2.0
    beta: float = 4.0

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")


@dataclass
class GroundTruthLabel:
    """Target heatmap plus the binary mask of supervised pixels."""

    heatmap: OccupancyMap
    mask: OccupancyMap

    def __post_init__(self):
        m = self.mask.values
        if self.heatmap.shape != self.mask.shape:
            raise ValueError("heatmap and mask shapes differ")
        if not np.isin(m, (0.0, 1.0)).all():
            raise ValueError("mask must be binary")
        if np.any(self.heatmap.values[m == 0] != 0):
            raise ValueError("heatmap must be zero outside the mask")


def disk_occupancy(grid: GroundGrid, centers, radius: float = 0.2) -> OccupancyMap:
    """Binary union of equal-radius disks on the ground grid.

    A cell counts as inside when its center lies within ``radius`` of any
    disk center; overlaps take the max, i.e. the union stays binary.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    values = np.zeros(grid.shape, dtype=np.float64)
    pad = radius / grid.cell_size + 1.0
    for center in centers:
        c = np.asarray(center, dtype=np.float64)
        # local window around the disk; out-of-grid portions are clipped
        row_c = (c[1] - grid.origin[1]) / grid.cell_size - 0.5
        col_c = (c[0] - grid.origin[0]) / grid.cell_size - 0.5
        r0 = max(0, int(np.floor(row_c - pad)))
        r1 = min(grid.rows, int(np.ceil(row_c + pad)) + 1)
        c0 = max(0, int(np.floor(col_c - pad)))
        c1 = min(grid.cols, int(np.ceil(col_c + pad)) + 1)
        if r0 >= r1 or c0 >= c1:
            continue
        # distances in meters, with the same cell-center arithmetic as
        # GroundGrid.cell_center so boundary cells resolve consistently
        ys = grid.origin[1] + (np.arange(r0, r1) + 0.5) * grid.cell_size
        xs = grid.origin[0] + (np.arange(c0, c1) + 0.5) * grid.cell_size
        dy = (ys - c[1])[:, None]
        dx = (xs - c[0])[None, :]
        inside = dx * dx + dy * dy <= radius * radius
        values[r0:r1, c0:c1][inside] = 1.0
    return OccupancyMap(values, grid)


def backproject_label(
    disk_map: OccupancyMap,
    h: Homography,
    image_size: tuple[int, int],
) -> GroundTruthLabel:
    """Splat a ground-grid occupancy map into a camera view.

    Every grid cell is projected into the image; its value lands on the
    nearest pixel (max on collisions).  The mask marks exactly the pixels
    hit by some grid cell, i.e. the image footprint of the grid.
    """
    if disk_map.grid is None:
        raise ValueError("disk_map must live on a ground grid")
    grid = disk_map.grid
    centers = grid.cell_centers().reshape(-1, 2)
    pixels, valid = project_ground_points(h, centers, image_size)
    w, hgt = image_size
    heat = np.zeros((hgt, w), dtype=np.float64)
    mask = np.zeros((hgt, w), dtype=np.float64)
    if valid.any():
        pix = np.rint(pixels[valid]).astype(np.int64)
        u = np.clip(pix[:, 0], 0, w - 1)
        v = np.clip(pix[:, 1], 0, hgt - 1)
        mask[v, u] = 1.0
        np.maximum.at(heat, (v, u), disk_map.values.reshape(-1)[valid])
    return GroundTruthLabel(OccupancyMap(heat), OccupancyMap(mask))


def gaussian_heatmap(centers, radii, image_size: tuple[int, int]) -> OccupancyMap:
    """Classic truncated-Gaussian keypoint heatmap (baseline label).

    Each center contributes exp(-d^2 / (2 sigma^2)) with sigma = r/3,
    evaluated only inside its radius-r circle; overlapping centers take
    the per-pixel maximum.
    """
    w, hgt = image_size
    values = np.zeros((hgt, w), dtype=np.float64)
    radii = np.broadcast_to(np.asarray(radii, dtype=np.float64), (len(centers),))
    if (radii <= 0).any():
        raise ValueError("radii must be positive")
    for center, r in zip(centers, radii):
        cx, cy = float(center[0]), float(center[1])
        sigma = r / 3.0
        u0 = max(0, int(np.floor(cx - r)))
        u1 = min(w, int(np.ceil(cx + r)) + 1)
        v0 = max(0, int(np.floor(cy - r)))
        v1 = min(hgt, int(np.ceil(cy + r)) + 1)
        if u0 >= u1 or v0 >= v1:
            continue
        us = np.arange(u0, u1)
        vs = np.arange(v0, v1)
        d2 = (us - cx)[None, :] ** 2 + (vs - cy)[:, None] ** 2
        g = np.exp(-d2 / (2.0 * sigma * sigma))
        g[d2 > r * r] = 0.0
        np.maximum(values[v0:v1, u0:u1], g, out=values[v0:v1, u0:u1])
    return OccupancyMap(values)


def focal_loss(
    pred: OccupancyMap | np.ndarray,
    label: GroundTruthLabel,
    params: FocalLossParams = FocalLossParams(),
) -> tuple[float, np.ndarray]:
    """Masked focal objective and its exact gradient w.r.t. the prediction.

    Pixels where the target equals one use the positive branch
    -(1-P)^alpha log P; all other masked pixels use the negative branch
    -(1-H)^beta P^alpha log(1-P).  The sum is normalized by the number of
    nonzero mask entries.  Predictions are clamped to [eps, 1-eps] before
    the logs; the gradient is zero where the clamp is active and at every
    unmasked pixel.

    Returns (loss, gradient) with gradient shaped like the prediction.
    """
    P = pred.values if isinstance(pred, OccupancyMap) else np.asarray(pred)
    H = label.heatmap.values
    M = label.mask.values
    if P.shape != H.shape:
        raise ValueError(f"prediction shape {P.shape} does not match label {H.shape}")
    n = int(np.count_nonzero(M))
    if n == 0:
        raise ValueError("label mask is empty")
    a, b = params.alpha, params.beta

    unclamped = (P > CLAMP_EPS) & (P < 1.0 - CLAMP_EPS)
    Pc = np.clip(P, CLAMP_EPS, 1.0 - CLAMP_EPS)
    pos = H == 1.0

    log_p = np.log(Pc)
    log_q = np.log1p(-Pc)
    one_m_p = 1.0 - Pc
    neg_w = (1.0 - H) ** b

    term = np.where(pos, one_m_p**a * log_p, neg_w * Pc**a * log_q)
    loss = -float(np.sum(M * term)) / n

    d_pos = -a * one_m_p ** (a - 1.0) * log_p + one_m_p**a / Pc
    d_neg = neg_w * (a * Pc ** (a - 1.0) * log_q - Pc**a / one_m_p)
    grad = np.where(pos, d_pos, d_neg)
    grad *= -M / n
    grad[~unclamped] = 0.0
    return loss, grad


# ---------------------------------------------------------------------------
# Serialization


def write_omap(path, omap: OccupancyMap) -> None:
    """Flat binary dump: 16-byte header (magic, rows, cols, cell_size as
    f32; 0 for image-plane maps) followed by row-major little-endian f32
    values."""
    rows, cols = omap.shape
    cell = omap.grid.cell_size if omap.grid is not None else 0.0
    with open(path, "wb") as f:
        f.write(_OMAP_HEADER.pack(OMAP_MAGIC, rows, cols, cell))
        f.write(np.ascontiguousarray(omap.values, dtype="<f4").tobytes())


def read_omap(path, origin=(0.0, 0.0)) -> OccupancyMap:
    """Inverse of write_omap.  The header does not store the grid origin;
    pass it explicitly when it matters (defaults to (0, 0))."""
    with open(path, "rb") as f:
        header = f.read(_OMAP_HEADER.size)
        magic, rows, cols, cell = _OMAP_HEADER.unpack(header)
        if magic != OMAP_MAGIC:
            raise ValueError(f"not an occupancy map file (magic {magic!r})")
        data = np.frombuffer(f.read(rows * cols * 4), dtype="<f4")
    if data.size != rows * cols:
        raise ValueError("occupancy map file truncated")
    values = data.reshape(rows, cols).astype(np.float64)
    grid = None
    if cell > 0:
        grid = GroundGrid(origin=np.asarray(origin), cell_size=float(cell),
                          rows=rows, cols=cols)
    return OccupancyMap(values, grid)


def write_pgm(path, omap: OccupancyMap) -> None:
    """16-bit binary PGM export for visual inspection (values scaled from
    [0, 1] to [0, 65535], clipped)."""
    rows, cols = omap.shape
    scaled = np.clip(omap.values, 0.0, 1.0) * 65535.0
    data = np.rint(scaled).astype(">u2")
    with open(path, "wb") as f:
        f.write(f"P5\n{cols} {rows}\n65535\n".encode("ascii"))
        f.write(data.tobytes())
