"""Fusing per-view heatmaps onto the shared ground grid.

Every ground cell center is projected into each view; cells that land
in-view sample that view's heatmap bilinearly.  The per-cell camera count
is the coverage map, the per-cell mean over covering views is the fused
occupancy, and the per-view resampled planes can optionally be kept as a
stacked multi-channel array.

Projection geometry is fixed per (grid, rig), so the sample indices and
bilinear weights are precomputed once in GroundProjector and reused every
frame; this is what keeps fusion inside the real-time budget.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .geometry import GroundGrid, Homography, project_ground_points
from .heatmap import OccupancyMap

OMPS_MAGIC = b"OMPS"
_OMPS_HEADER = struct.Struct("<4sIIfI")  # magic, rows, cols, cell_size, channels


@dataclass
class ViewHeatmapSet:
    """Per-camera predicted heatmaps plus their ground-plane homographies."""

    heatmaps: list[OccupancyMap]
    homographies: list[Homography]

    def __post_init__(self):
        if len(self.heatmaps) == 0:
            raise ValueError("view set is empty")
        if len(self.heatmaps) != len(self.homographies):
            raise ValueError("need one homography per heatmap")

    def __len__(self) -> int:
        return len(self.heatmaps)

    @property
    def image_sizes(self) -> list[tuple[int, int]]:
        return [(m.shape[1], m.shape[0]) for m in self.heatmaps]


@dataclass
class FusedMap:
    """Ground-plane fusion result.

    ``mean`` is zero wherever ``coverage`` is zero; ``stacked`` (C, rows,
    cols) is populated only by fuse_stack.
    """

    mean: OccupancyMap
    coverage: np.ndarray
    stacked: np.ndarray | None = None

    @property
    def grid(self) -> GroundGrid:
        return self.mean.grid


class GroundProjector:
    """Precomputed grid-to-view sampling for one camera.

    Stores, for every grid cell, whether its center projects in-view and
    the four bilinear taps (flat indices + weights) into the view image.
    Nearest-neighbor tap is kept as well for mask-like resampling.
    """

    def __init__(self, grid: GroundGrid, h: Homography, image_size: tuple[int, int]):
        self.grid = grid
        self.image_size = image_size
        w, hgt = image_size
        centers = grid.cell_centers().reshape(-1, 2)
        pixels, valid = project_ground_points(h, centers, image_size)
        self.valid = valid.reshape(grid.shape)
        x = np.where(valid, pixels[:, 0], 0.0)
        y = np.where(valid, pixels[:, 1], 0.0)
        x0 = np.floor(x).astype(np.int64)
        y0 = np.floor(y).astype(np.int64)
        fx = x - x0
        fy = y - y0
        x1 = np.minimum(x0 + 1, w - 1)
        y1 = np.minimum(y0 + 1, hgt - 1)
        x0 = np.clip(x0, 0, w - 1)
        y0 = np.clip(y0, 0, hgt - 1)
        self._flat = (
            y0 * w + x0,
            y0 * w + x1,
            y1 * w + x0,
            y1 * w + x1,
        )
        self._weights = (
            (1 - fx) * (1 - fy),
            fx * (1 - fy),
            (1 - fx) * fy,
            fx * fy,
        )
        self._nearest = np.clip(np.rint(y), 0, hgt - 1).astype(np.int64) * w + np.clip(
            np.rint(x), 0, w - 1
        ).astype(np.int64)

    def sample(self, view_values: np.ndarray, method: str = "bilinear") -> np.ndarray:
        """Resample a view image onto the grid; out-of-view cells read 0."""
        if view_values.shape != (self.image_size[1], self.image_size[0]):
            raise ValueError("view shape does not match projector")
        flat = np.ascontiguousarray(view_values, dtype=np.float64).ravel()
        if method == "bilinear":
            i00, i10, i01, i11 = self._flat
            w00, w10, w01, w11 = self._weights
            out = flat[i00] * w00 + flat[i10] * w10 + flat[i01] * w01 + flat[i11] * w11
        elif method == "nearest":
            out = flat[self._nearest]
        else:
            raise ValueError(f"unknown resampling method {method!r}")
        out = out.reshape(self.grid.shape)
        return np.where(self.valid, out, 0.0)


class HeatmapFuser:
    """Amortized fusion over a fixed (grid, homographies, image sizes)."""

    def __init__(self, grid: GroundGrid, homographies, image_sizes):
        self.grid = grid
        self.projectors = [
            GroundProjector(grid, h, size) for h, size in zip(homographies, image_sizes)
        ]
        self.coverage = np.zeros(grid.shape, dtype=np.int64)
        for p in self.projectors:
            self.coverage += p.valid
        self._cov_safe = np.maximum(self.coverage, 1)

    def average(self, heatmaps) -> FusedMap:
        total = np.zeros(self.grid.shape, dtype=np.float64)
        for proj, hm in zip(self.projectors, heatmaps):
            values = hm.values if isinstance(hm, OccupancyMap) else hm
            total += proj.sample(values)
        mean = total / self._cov_safe
        return FusedMap(OccupancyMap(mean, self.grid), self.coverage.copy())

    def stack(self, heatmaps) -> FusedMap:
        planes = np.zeros((len(self.projectors),) + self.grid.shape, dtype=np.float64)
        for c, (proj, hm) in enumerate(zip(self.projectors, heatmaps)):
            values = hm.values if isinstance(hm, OccupancyMap) else hm
            planes[c] = proj.sample(values)
        mean = planes.sum(axis=0) / self._cov_safe
        return FusedMap(OccupancyMap(mean, self.grid), self.coverage.copy(), planes)


def _fuser_for(views: ViewHeatmapSet, grid: GroundGrid) -> HeatmapFuser:
    return HeatmapFuser(grid, views.homographies, views.image_sizes)


def fuse_average(views: ViewHeatmapSet, grid: GroundGrid) -> FusedMap:
    """Per-cell mean of the in-view cameras' heatmap samples."""
    return _fuser_for(views, grid).average(views.heatmaps)


def fuse_stack(views: ViewHeatmapSet, grid: GroundGrid) -> FusedMap:
    """Per-view resampled planes plus the mean/coverage of fuse_average."""
    return _fuser_for(views, grid).stack(views.heatmaps)


def resample_view_to_grid(
    values: np.ndarray,
    h: Homography,
    grid: GroundGrid,
    image_size: tuple[int, int],
    method: str = "bilinear",
) -> np.ndarray:
    """One-off view-to-grid resampling (forward projection of a view map)."""
    return GroundProjector(grid, h, image_size).sample(np.asarray(values), method)


def write_stack(path, fused: FusedMap) -> None:
    """Stacked-plane binary: OMPS header (rows, cols, cell_size, channel
    count) followed by C row-major f32 planes."""
    if fused.stacked is None:
        raise ValueError("fused map has no stacked channels")
    rows, cols = fused.mean.shape
    cell = fused.grid.cell_size if fused.grid is not None else 0.0
    with open(path, "wb") as f:
        f.write(_OMPS_HEADER.pack(OMPS_MAGIC, rows, cols, cell, len(fused.stacked)))
        f.write(np.ascontiguousarray(fused.stacked, dtype="<f4").tobytes())


def read_stack(path, origin=(0.0, 0.0)) -> tuple[np.ndarray, GroundGrid | None]:
    """Inverse of write_stack; returns (planes (C, rows, cols), grid)."""
    with open(path, "rb") as f:
        magic, rows, cols, cell, channels = _OMPS_HEADER.unpack(f.read(_OMPS_HEADER.size))
        if magic != OMPS_MAGIC:
            raise ValueError(f"not a stacked map file (magic {magic!r})")
        data = np.frombuffer(f.read(channels * rows * cols * 4), dtype="<f4")
    if data.size != channels * rows * cols:
        raise ValueError("stacked map file truncated")
    planes = data.reshape(channels, rows, cols).astype(np.float64)
    grid = None
    if cell > 0:
        grid = GroundGrid(origin=np.asarray(origin), cell_size=float(cell),
                          rows=rows, cols=cols)
    return planes, grid
