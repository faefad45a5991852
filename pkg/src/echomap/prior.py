"""Image prior: edge-preserving Gibbs potential, neighbor stencil, depth scaling.

The Gibbs potential rho is quadratic near zero and |.|^p in the tails
(convex for 1 <= p < q = 2); the exponential term x / sigma_e enforces
sparsity together with the positivity constraint. Regularization strength is
relaxed with depth through a per-pixel scale c(depth).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ImageGrid

__all__ = [
    "PriorParams",
    "NeighborStencil",
    "qggmrf_rho",
    "qggmrf_surrogate_coeff",
    "build_stencil",
    "spatial_scale",
    "prior_cost",
]


@dataclass(frozen=True)
class PriorParams:
    """Potential shape (p, q, T), scales (sigma_g, sigma_e), depth relaxation
    (c_min, c_max, a), and inter-slice coupling gamma."""

    p: float = 1.1
    q: float = 2.0
    T: float = 1.0
    sigma_g: float = 1.3
    sigma_e: float = 15.0
    c_min: float = 1.0
    c_max: float = 10.0
    a: float = 3.0
    gamma: float = 0.0

    def __post_init__(self):
        if not (1.0 <= self.p < self.q):
            raise ValueError("need 1 <= p < q for convexity")
        if self.q != 2.0:
            raise ValueError("q must be 2")
        if self.T <= 0 or self.sigma_g <= 0 or self.sigma_e <= 0:
            raise ValueError("T, sigma_g, sigma_e must be positive")
        if not (0 < self.c_min <= self.c_max):
            raise ValueError("need c_max >= c_min > 0")
        if self.a <= 0:
            raise ValueError("a must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")


def qggmrf_rho(delta, sigma, params: PriorParams):
    """Potential rho(delta) = |delta|^p / (p sigma^p) * u / (1 + u),
    u = |delta / (T sigma)|^(q-p)."""
    delta = np.asarray(delta, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    p, q, T = params.p, params.q, params.T
    a = np.abs(delta)
    u = (a / (T * sigma)) ** (q - p)
    return a**p / (p * sigma**p) * u / (1.0 + u)


def qggmrf_surrogate_coeff(delta, sigma, params: PriorParams):
    """Quadratic-majorizer coefficient rho'(delta) / (2 delta).

    With q = 2 this is (q + p u) / (2 p sigma^p (T sigma)^(2-p) (1 + u)^2),
    u = |delta / (T sigma)|^(2-p), which is smooth at delta = 0 and attains the
    series limit 1 / (p sigma^p (T sigma)^(2-p)) there. The coefficient is
    non-increasing in |delta|, so the induced quadratic dominates rho.
    """
    delta = np.asarray(delta, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    p, q, T = params.p, params.q, params.T
    u = (np.abs(delta) / (T * sigma)) ** (q - p)
    return (q + p * u) / (2.0 * p * sigma**p * (T * sigma) ** (q - p) * (1.0 + u) ** 2)


def spatial_scale(depth, max_depth: float, params: PriorParams):
    """Depth relaxation c = c_min + (c_max - c_min) (depth / max_depth)^a."""
    if max_depth <= 0:
        raise ValueError("max_depth must be positive")
    depth = np.asarray(depth, dtype=float)
    return params.c_min + (params.c_max - params.c_min) * (depth / max_depth) ** params.a


@dataclass(frozen=True)
class NeighborStencil:
    """Neighbor lists and weights over a pixel grid or voxel volume.

    ``neighbors``/``weights`` are padded (N, max_deg) arrays; padding repeats
    the pixel's own index with weight 0. ``edges`` lists each unordered clique
    once as (s, r, b) with s < r. Weights are symmetric; interior sums are 1;
    boundary pixels simply drop missing neighbors (free boundary).
    """

    neighbors: np.ndarray
    weights: np.ndarray
    degree: np.ndarray
    edges_s: np.ndarray
    edges_r: np.ndarray
    edges_b: np.ndarray
    gamma: float

    @property
    def n_sites(self) -> int:
        return self.neighbors.shape[0]


def build_stencil(grid: ImageGrid, gamma: float = 0.0) -> NeighborStencil:
    """In-plane 8-neighborhood plus the two axially adjacent out-of-plane sites.

    In-plane weights are 2/(4 gamma + 12) for axial and 1/(4 gamma + 12) for
    diagonal neighbors; the out-of-plane weight is 2 gamma / (4 gamma + 12).
    gamma = 0 reduces to a pure 2-D stencil.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    nr, nc, ns = grid.n_rows, grid.n_cols, grid.n_slices
    denom = 4.0 * gamma + 12.0
    w_ax = 2.0 / denom
    w_di = 1.0 / denom
    w_sl = 2.0 * gamma / denom

    offsets = [(-1, 0, w_ax), (1, 0, w_ax), (0, -1, w_ax), (0, 1, w_ax),
               (-1, -1, w_di), (-1, 1, w_di), (1, -1, w_di), (1, 1, w_di)]

    n_sites = nr * nc * ns
    max_deg = 8 + (2 if ns > 1 else 0)
    neighbors = np.tile(np.arange(n_sites)[:, None], (1, max_deg))
    weights = np.zeros((n_sites, max_deg))
    degree = np.zeros(n_sites, dtype=np.intp)

    cols, rows = np.meshgrid(np.arange(nc), np.arange(nr), indexing="ij")
    cols = cols.ravel()
    rows = rows.ravel()
    npix = nr * nc

    for z in range(ns):
        base = z * npix
        for s_local in range(npix):
            s = base + s_local
            r0, c0 = rows[s_local], cols[s_local]
            deg = 0
            for dr, dc, w in offsets:
                r1, c1 = r0 + dr, c0 + dc
                if 0 <= r1 < nr and 0 <= c1 < nc:
                    neighbors[s, deg] = base + c1 * nr + r1
                    weights[s, deg] = w
                    deg += 1
            if ns > 1 and w_sl > 0.0:
                for dz in (-1, 1):
                    z1 = z + dz
                    if 0 <= z1 < ns:
                        neighbors[s, deg] = z1 * npix + s_local
                        weights[s, deg] = w_sl
                        deg += 1
            degree[s] = deg

    # each unordered clique once (s < r)
    s_idx = np.repeat(np.arange(n_sites), max_deg)
    r_idx = neighbors.ravel()
    b = weights.ravel()
    keep = (b > 0.0) & (s_idx < r_idx)
    return NeighborStencil(neighbors=neighbors, weights=weights, degree=degree,
                           edges_s=s_idx[keep], edges_r=r_idx[keep], edges_b=b[keep],
                           gamma=float(gamma))


def _scale_map(grid: ImageGrid, params: PriorParams) -> np.ndarray:
    """Per-site depth relaxation c over all slices (c_min when the grid is flat)."""
    depth = grid.depth_map()
    if grid.max_depth > 0:
        c = spatial_scale(depth, grid.max_depth, params)
    else:
        c = np.full(grid.n_pixels, params.c_min)
    return np.tile(c, grid.n_slices)


def prior_cost(x, stencil: NeighborStencil, params: PriorParams, depth_map) -> float:
    """Negative log prior up to a constant: clique potentials plus x / sigma_e.

    Each unordered clique is counted once. ``depth_map`` gives per-site depth
    in meters; sigma_g scales per edge as sigma_g * sqrt(c_s c_r) and sigma_e
    per site as sigma_e * c_s.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size != stencil.n_sites:
        raise ValueError("image size does not match the stencil")
    if np.any(x < 0):
        raise ValueError("pixels must be nonnegative")
    depth_map = np.asarray(depth_map, dtype=float).ravel()
    max_depth = depth_map.max()
    if max_depth > 0:
        c = spatial_scale(depth_map, max_depth, params)
    else:
        c = np.full(x.size, params.c_min)
    sqc = np.sqrt(c)

    s, r, b = stencil.edges_s, stencil.edges_r, stencil.edges_b
    sg = params.sigma_g * sqc[s] * sqc[r]
    gibbs = float(np.sum(b * qggmrf_rho(x[s] - x[r], sg, params)))
    expo = float(np.sum(x / (params.sigma_e * c)))
    return gibbs + expo
