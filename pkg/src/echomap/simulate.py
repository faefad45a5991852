"""Phantoms and synthetic pulse-echo data generated through the linear model.

Data produced here are deliberately an inverse crime: the same linear forward
model used for reconstruction generates them. That makes the toolkit's
quantitative self-checks exact, but full-wave propagation effects
(reverberation, shadowing, mode conversion) are out of scope by design.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import ImageGrid
from .stitching import ScanLayout

__all__ = [
    "Target",
    "Phantom",
    "make_phantom",
    "synthesize",
    "multi_position_synthesize",
]

PHANTOM_KINDS = ("plates", "triangle_up", "triangle_down", "grid", "hollow_square",
                 "points")


@dataclass(frozen=True)
class Target:
    """One ground-truth feature: intensity-weighted centroid (depth, lateral) in
    meters, a bounding extent in pixels, and a label."""

    centroid: tuple
    extent: tuple
    label: str


@dataclass(frozen=True)
class Phantom:
    """Binary reflectivity map plus the target list used by the detection tests."""

    values: np.ndarray
    grid: ImageGrid
    targets: tuple

    def flat(self) -> np.ndarray:
        return self.grid.from_image(self.values)

    def mask(self) -> np.ndarray:
        return self.values > 0


def _target_from_mask(mask: np.ndarray, pitch: float, label: str) -> Target:
    rows, cols = np.nonzero(mask)
    return Target(centroid=(float(rows.mean() * pitch), float(cols.mean() * pitch)),
                  extent=(int(rows.min()), int(rows.max()), int(cols.min()), int(cols.max())),
                  label=label)


def make_phantom(kind: str, grid: ImageGrid, params: dict | None = None) -> Phantom:
    """Binary phantom of a named kind with recorded target geometry.

    Kinds: two shallow ``plates`` at 2 cm depth, ``triangle_up`` /
    ``triangle_down`` filled triangles, a ``grid`` of small blocks, a
    ``hollow_square`` ring, and explicit ``points``. Parameters (depths in
    meters, sizes in pixels, point positions) override sensible defaults that
    scale with the grid.
    """
    if kind not in PHANTOM_KINDS:
        raise ValueError(f"unknown phantom kind {kind!r}")
    params = dict(params or {})
    nr, nc, pitch = grid.n_rows, grid.n_cols, grid.pixel_pitch
    img = np.zeros((nr, nc))
    masks: list[tuple[np.ndarray, str]] = []

    def add(mask, label):
        if not mask.any():
            raise ValueError(f"{label}: shape out of grid bounds")
        img[mask] = 1.0
        masks.append((mask, label))

    if kind == "plates":
        depth = params.get("depth", 0.02)
        row = int(round(depth / pitch))
        thickness = int(params.get("thickness", 1))
        width = int(params.get("width", max(nc // 5, 2)))
        gap = int(params.get("gap", max(nc // 5, 2)))
        if not (0 <= row < nr):
            raise ValueError("plate depth outside the grid")
        start = (nc - (2 * width + gap)) // 2
        if start < 0:
            raise ValueError("plates do not fit laterally")
        for idx, c0 in enumerate((start, start + width + gap)):
            m = np.zeros((nr, nc), dtype=bool)
            m[row:row + thickness, c0:c0 + width] = True
            add(m, f"plate{idx}")
    elif kind in ("triangle_up", "triangle_down"):
        size = int(params.get("size", min(nr, nc) // 2))
        top = int(params.get("row", nr // 4))
        c_mid = int(params.get("col", nc // 2))
        m = np.zeros((nr, nc), dtype=bool)
        for i in range(size):
            half = (i if kind == "triangle_up" else size - 1 - i) // 2
            r = top + i
            if 0 <= r < nr:
                m[r, max(c_mid - half, 0):min(c_mid + half + 1, nc)] = True
        add(m, kind)
    elif kind == "grid":
        block = int(params.get("block", 2))
        step = int(params.get("step", max(4 * block, 4)))
        r0 = int(params.get("row", nr // 4))
        c0 = int(params.get("col", nc // 6))
        n_r = int(params.get("n_rows", 2))
        n_c = int(params.get("n_cols", 3))
        for ir in range(n_r):
            for ic in range(n_c):
                m = np.zeros((nr, nc), dtype=bool)
                rr, cc = r0 + ir * step, c0 + ic * step
                if rr + block > nr or cc + block > nc:
                    raise ValueError("grid block outside the image")
                m[rr:rr + block, cc:cc + block] = True
                add(m, f"block{ir}{ic}")
    elif kind == "hollow_square":
        size = int(params.get("size", min(nr, nc) // 3))
        thickness = int(params.get("thickness", 1))
        r0 = int(params.get("row", nr // 3))
        c0 = int(params.get("col", (nc - size) // 2))
        if r0 + size > nr or c0 + size > nc or r0 < 0 or c0 < 0:
            raise ValueError("square outside the image")
        m = np.zeros((nr, nc), dtype=bool)
        m[r0:r0 + size, c0:c0 + size] = True
        m[r0 + thickness:r0 + size - thickness, c0 + thickness:c0 + size - thickness] = False
        add(m, "hollow_square")
    elif kind == "points":
        pts = params.get("points", [(nr // 2, nc // 2)])
        for idx, (r, c) in enumerate(pts):
            if not (0 <= r < nr and 0 <= c < nc):
                raise ValueError("point outside the image")
            m = np.zeros((nr, nc), dtype=bool)
            m[r, c] = True
            add(m, f"point{idx}")

    targets = tuple(_target_from_mask(m, pitch, label) for m, label in masks)
    return Phantom(values=img, grid=grid, targets=targets)


def synthesize(phantom: Phantom, A: sp.spmatrix, D: sp.spmatrix | None,
               g_true=None, snr: float = np.inf, seed: int = 0,
               x_flat: np.ndarray | None = None) -> np.ndarray:
    """Measurements y = A x + D g + w with noise scaled to an exact energy SNR.

    ``snr`` is ||y_clean||^2 / ||w||^2; pass ``np.inf`` for noiseless data.
    ``g_true`` defaults to all ones when D is given. ``x_flat`` overrides the
    phantom's reflectivity (used by the multi-position generator).
    """
    x = phantom.flat() if x_flat is None else np.asarray(x_flat, dtype=float).ravel()
    y = A @ x
    if D is not None:
        g = np.ones(D.shape[1]) if g_true is None else np.asarray(g_true, dtype=float)
        y = y + D @ g
    if not np.isfinite(snr):
        return y
    if snr <= 0:
        raise ValueError("snr must be positive")
    energy = float(y @ y)
    if energy == 0.0:
        raise ValueError("clean signal is zero; finite snr is undefined")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(y.size)
    w *= np.sqrt(energy / snr) / np.linalg.norm(w)
    return y + w


def multi_position_synthesize(phantom: Phantom, layout: ScanLayout, A: sp.spmatrix,
                              D: sp.spmatrix | None, g_true=None, snr: float = np.inf,
                              seed: int = 0) -> list[np.ndarray]:
    """Per-position records from a wide phantom restricted to each footprint."""
    wide = phantom.values
    n_rows = wide.shape[0]
    if wide.shape[1] != layout.joint_width:
        raise ValueError("phantom width does not match the layout")
    if A.shape[1] != layout.width * n_rows:
        raise ValueError("system matrix does not match the footprint")
    ys = []
    for l, off in enumerate(layout.offsets):
        local = wide[:, off:off + layout.width]
        x_local = local.T.ravel()
        ys.append(synthesize(phantom, A, D, g_true=g_true, snr=snr,
                             seed=seed + 7919 * l, x_flat=x_local))
    return ys
