"""Transducer array geometry, pixel grids, travel times, and beam apodization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ScanGeometry",
    "ImageGrid",
    "pair_index",
    "travel_time",
    "pair_travel_times",
    "apodization",
    "apodization_weight",
    "make_grid",
]


@dataclass(frozen=True)
class ScanGeometry:
    """Positions of the transducers and the enumeration of distinct pairs.

    ``positions`` is an (n, 3) array of transducer centers in meters, with the
    array lying in the z = const plane and the imaged medium at larger z.
    Distinct unordered pairs {i, j}, i < j, are enumerated lexicographically
    and indexed 0 .. K-1; pulse-echo records are ordered by that pair index.
    """

    positions: np.ndarray

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError("positions must be an (n, 3) array")
        if pos.shape[0] < 2:
            raise ValueError("need at least two transducers")
        object.__setattr__(self, "positions", pos)

    @property
    def n_transducers(self) -> int:
        return self.positions.shape[0]

    @property
    def n_pairs(self) -> int:
        n = self.n_transducers
        return n * (n - 1) // 2

    @property
    def pairs(self) -> np.ndarray:
        """(K, 2) array of transducer index pairs (i < j), ordered by pair id."""
        n = self.n_transducers
        return np.array([(i, j) for i in range(n) for j in range(i + 1, n)])

    def pair_transducers(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Positions (r_i, r_j) of pair k."""
        i, j = self.pairs[k]
        return self.positions[i], self.positions[j]

    @classmethod
    def line_array(cls, n: int, pitch: float, center_x: float = 0.0) -> "ScanGeometry":
        """n transducers in a line along x at the given pitch, on the z=0 surface."""
        x = (np.arange(n) - (n - 1) / 2.0) * pitch + center_x
        pos = np.zeros((n, 3))
        pos[:, 0] = x
        return cls(pos)


def pair_index(geom: ScanGeometry, i: int, j: int) -> int:
    """Pair id k of the unordered transducer pair {i, j}.

    Symmetric in (i, j); ids exhaust 0 .. K-1 over all distinct pairs.
    """
    n = geom.n_transducers
    if i == j:
        raise ValueError("transmit and receive ids must differ")
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"transducer id out of range 0..{n - 1}")
    a, b = (i, j) if i < j else (j, i)
    # lexicographic rank of (a, b) with a < b
    return a * n - a * (a + 1) // 2 + (b - a - 1)


def travel_time(geom: ScanGeometry, k: int, nu, speed: float) -> float:
    """Round-trip delay from pair k's transmitter to point nu and back to its receiver."""
    if speed <= 0:
        raise ValueError("speed must be positive")
    ri, rj = geom.pair_transducers(k)
    nu = np.asarray(nu, dtype=float)
    return (np.linalg.norm(nu - ri) + np.linalg.norm(nu - rj)) / speed


def pair_travel_times(geom: ScanGeometry, k: int, points: np.ndarray, speed: float) -> np.ndarray:
    """Vectorized travel_time over an (N, 3) array of points."""
    if speed <= 0:
        raise ValueError("speed must be positive")
    ri, rj = geom.pair_transducers(k)
    di = np.linalg.norm(points - ri, axis=1)
    dj = np.linalg.norm(points - rj, axis=1)
    return (di + dj) / speed


def apodization_weight(nu, r_i, r_j) -> float:
    """cos^2(theta_t) * cos^2(theta_r) beam weight for a point seen by two transducers.

    Angles are measured from each transducer's downward (+z) normal. Points in
    or above the transducer plane get weight 0 (continuous limit of cos^2).
    """
    nu = np.asarray(nu, dtype=float)
    w = 1.0
    for r in (np.asarray(r_i, dtype=float), np.asarray(r_j, dtype=float)):
        d = nu - r
        dist = np.linalg.norm(d)
        if dist == 0.0:
            return 0.0
        c = max(d[2] / dist, 0.0)
        w *= c * c
    return w


def apodization(geom: ScanGeometry, k: int, points: np.ndarray) -> np.ndarray:
    """Vectorized apodization weights of pair k over an (N, 3) array of points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    ri, rj = geom.pair_transducers(k)
    w = np.ones(points.shape[0])
    for r in (ri, rj):
        d = points - r
        dist = np.linalg.norm(d, axis=1)
        c = np.zeros_like(dist)
        ok = dist > 0
        c[ok] = np.maximum(d[ok, 2] / dist[ok], 0.0)
        w *= c * c
    return w


@dataclass(frozen=True)
class ImageGrid:
    """Rectangular pixel (or voxel) grid for reconstruction.

    Pixels are ordered column-major: top to bottom within each column, columns
    left to right; a voxel index adds a slice-major offset. ``origin`` is the
    physical position of pixel (row 0, col 0); x grows with columns (lateral),
    z with rows (depth), and slices are parallel cross-sections.
    """

    n_rows: int
    n_cols: int
    pixel_pitch: float
    origin: tuple = (0.0, 0.0, 0.0)
    n_slices: int = 1

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1 or self.n_slices < 1:
            raise ValueError("grid dimensions must be >= 1")
        if self.pixel_pitch <= 0:
            raise ValueError("pixel_pitch must be positive")

    @property
    def n_pixels(self) -> int:
        """Pixels per slice."""
        return self.n_rows * self.n_cols

    @property
    def n_voxels(self) -> int:
        return self.n_pixels * self.n_slices

    @property
    def max_depth(self) -> float:
        """Depth of the bottom pixel row (row index * pitch)."""
        return (self.n_rows - 1) * self.pixel_pitch

    def flat_index(self, row, col):
        return np.asarray(col) * self.n_rows + np.asarray(row)

    def pixel_positions(self) -> np.ndarray:
        """(n_pixels, 3) physical pixel centers of one slice, in flat order."""
        cols, rows = np.meshgrid(np.arange(self.n_cols), np.arange(self.n_rows), indexing="ij")
        ox, oy, oz = self.origin
        pts = np.empty((self.n_pixels, 3))
        pts[:, 0] = ox + cols.ravel() * self.pixel_pitch
        pts[:, 1] = oy
        pts[:, 2] = oz + rows.ravel() * self.pixel_pitch
        return pts

    def depth_map(self) -> np.ndarray:
        """Per-pixel depth used by depth-dependent regularization: row index * pitch."""
        rows = np.tile(np.arange(self.n_rows), self.n_cols)
        return rows * self.pixel_pitch

    def to_image(self, flat: np.ndarray) -> np.ndarray:
        """Flat pixel vector -> (n_rows, n_cols) image (or (n_slices, rows, cols))."""
        flat = np.asarray(flat)
        if flat.size == self.n_pixels:
            return flat.reshape(self.n_cols, self.n_rows).T
        if flat.size == self.n_voxels:
            vol = flat.reshape(self.n_slices, self.n_cols, self.n_rows)
            return vol.transpose(0, 2, 1)
        raise ValueError("flat vector length does not match grid")

    def from_image(self, img: np.ndarray) -> np.ndarray:
        """Inverse of to_image."""
        img = np.asarray(img)
        if img.shape == (self.n_rows, self.n_cols):
            return img.T.ravel()
        if img.shape == (self.n_slices, self.n_rows, self.n_cols):
            return img.transpose(0, 2, 1).ravel()
        raise ValueError("image shape does not match grid")

    def with_cols(self, n_cols: int) -> "ImageGrid":
        return ImageGrid(self.n_rows, n_cols, self.pixel_pitch, self.origin, self.n_slices)

    def with_slices(self, n_slices: int) -> "ImageGrid":
        return ImageGrid(self.n_rows, self.n_cols, self.pixel_pitch, self.origin, n_slices)


def make_grid(n_rows: int, n_cols: int, pitch: float, n_slices: int = 1) -> ImageGrid:
    """Grid whose pixel centers sit half a pitch inside the physical extent.

    The top row is half a pitch below the transducer surface, so no pixel is
    degenerate for the apodization weighting.
    """
    return ImageGrid(n_rows, n_cols, pitch, origin=(0.5 * pitch, 0.0, 0.5 * pitch),
                     n_slices=n_slices)
