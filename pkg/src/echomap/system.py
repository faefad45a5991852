"""Sparse pulse-echo system matrix and the direct-arrival matrix.

Records are stacked pair-major: row (k, m) = k * M + m holds sample m of pair
k. A column of A is the windowed, apodized echo of one pixel across all pairs;
a column of D is the surface-coupled arrival of one pair, confined to that
pair's row block.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import ImageGrid, ScanGeometry, apodization, pair_travel_times
from .pulse import ImpulseTable, PulseModel, build_impulse_table, tau_grid_for

__all__ = ["SystemMatrix", "assemble_model", "build_system_matrix",
           "build_direct_arrival", "dump_triplets", "suggest_record_length"]


@dataclass(frozen=True)
class SystemMatrix:
    """Forward operator bundle: A (MK x N), D (MK x K), and cached column norms."""

    A: sp.csc_matrix
    D: sp.csc_matrix
    n_samples: int
    n_pairs: int
    n_pixels: int
    a_col_sq: np.ndarray
    d_col_sq: np.ndarray

    @property
    def shape(self):
        return self.A.shape


def _pixel_block(geom, grid, table, pixel_ids, points, apodize):
    """COO triplets of all pair contributions for one chunk of pixel columns."""
    pulse = table.pulse
    fs = pulse.sampling_freq
    M = pulse.n_samples
    n_win = pulse.window_samples + 1
    offs = np.arange(n_win)

    rows, cols, vals = [], [], []
    for k in range(geom.n_pairs):
        tau = pair_travel_times(geom, k, points, pulse.speed)
        phi = apodization(geom, k, points) if apodize else np.ones(points.shape[0])
        m0 = np.ceil(tau * fs - 1e-12).astype(np.intp)
        m = m0[:, None] + offs[None, :]
        t_rel = m / fs - tau[:, None]
        keep = (t_rel >= 0.0) & (t_rel < pulse.t0) & (m >= 0) & (m < M)
        if not np.any(keep):
            continue
        h = table.sample(np.broadcast_to(tau[:, None], m.shape)[keep], t_rel[keep])
        pix = np.broadcast_to(pixel_ids[:, None], m.shape)[keep]
        phiv = np.broadcast_to(phi[:, None], m.shape)[keep]
        rows.append(k * M + m[keep])
        cols.append(pix)
        vals.append(h * phiv)
    if not rows:
        empty = np.empty(0)
        return empty.astype(np.intp), empty.astype(np.intp), empty
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def build_system_matrix(geom: ScanGeometry, grid: ImageGrid, table: ImpulseTable,
                        apodize: bool = True, workers: int = 1) -> SystemMatrix:
    """Assemble the sparse forward operator for one scan position.

    A[(k, m), n] = h(tau_k(nu_n), t_m - tau_k(nu_n)) * phi_k(nu_n), zero outside
    the truncation window; ``apodize=False`` gives the isotropic variant
    (phi = 1). Column assembly is independent per pixel chunk and merged once,
    so ``workers > 1`` may assemble chunks concurrently; the result is
    identical and immutable either way.
    """
    pulse = table.pulse
    points = grid.pixel_positions()
    # confirm coverage early with a clear error
    for k in range(geom.n_pairs):
        tau = pair_travel_times(geom, k, points, pulse.speed)
        if not table.covers(tau):
            raise ValueError("impulse table does not cover the grid's travel times")

    n_chunks = max(workers, 1)
    chunks = np.array_split(np.arange(grid.n_pixels), n_chunks)
    args = [(geom, grid, table, ids, points[ids], apodize) for ids in chunks if ids.size]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _pixel_block(*a), args))
    else:
        parts = [_pixel_block(*a) for a in args]

    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([p[2] for p in parts])

    M, K, N = pulse.n_samples, geom.n_pairs, grid.n_pixels
    A = sp.coo_matrix((vals, (rows, cols)), shape=(M * K, N)).tocsc()
    D = build_direct_arrival(geom, table)
    a_sq = np.asarray(A.multiply(A).sum(axis=0)).ravel()
    d_sq = np.asarray(D.multiply(D).sum(axis=0)).ravel()
    return SystemMatrix(A=A, D=D, n_samples=M, n_pairs=K, n_pixels=N,
                        a_col_sq=a_sq, d_col_sq=d_sq)


def build_direct_arrival(geom: ScanGeometry, table: ImpulseTable) -> sp.csc_matrix:
    """Direct-arrival matrix D: column k holds -h(tau_k, t - tau_k) in pair k's rows.

    tau_k is the surface distance delay |r_i - r_j| / c; no apodization factor
    is applied (any constant is absorbed by the per-pair gain).
    """
    pulse = table.pulse
    fs = pulse.sampling_freq
    M = pulse.n_samples
    n_win = pulse.window_samples + 1
    offs = np.arange(n_win)

    rows, cols, vals = [], [], []
    for k in range(geom.n_pairs):
        ri, rj = geom.pair_transducers(k)
        tau = float(np.linalg.norm(ri - rj) / pulse.speed)
        if not table.covers(tau):
            raise ValueError("impulse table does not cover surface pair delays")
        m0 = int(np.ceil(tau * fs - 1e-12))
        m = m0 + offs
        t_rel = m / fs - tau
        keep = (t_rel >= 0.0) & (t_rel < pulse.t0) & (m >= 0) & (m < M)
        if not np.any(keep):
            continue
        h = table.sample(np.full(keep.sum(), tau), t_rel[keep])
        rows.append(k * M + m[keep])
        cols.append(np.full(keep.sum(), k, dtype=np.intp))
        vals.append(-h)
    if rows:
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
    else:
        rows = cols = np.empty(0, dtype=np.intp)
        vals = np.empty(0)
    K = geom.n_pairs
    return sp.coo_matrix((vals, (rows, cols)), shape=(M * K, K)).tocsc()


def suggest_record_length(geom: ScanGeometry, grid: ImageGrid, pulse: PulseModel,
                          slack: int = 8) -> int:
    """Samples needed so every pixel's echo fits in the record, plus slack."""
    pts = grid.pixel_positions()
    tau_max = max(float(pair_travel_times(geom, k, pts, pulse.speed).max())
                  for k in range(geom.n_pairs))
    return int(np.ceil((tau_max + pulse.t0) * pulse.sampling_freq)) + slack


def assemble_model(geom: ScanGeometry, grid: ImageGrid, pulse: PulseModel,
                   apodize: bool = True, workers: int = 1):
    """Tabulate the impulse response over the grid's delay range and build the
    operators. Returns (ImpulseTable, SystemMatrix)."""
    pts = grid.pixel_positions()
    tau_max = max(float(pair_travel_times(geom, k, pts, pulse.speed).max())
                  for k in range(geom.n_pairs))
    table = build_impulse_table(pulse, tau_grid_for(pulse, tau_max))
    return table, build_system_matrix(geom, grid, table, apodize=apodize,
                                      workers=workers)


def dump_triplets(matrix: sp.spmatrix, path) -> None:
    """Debug dump of a sparse matrix as '(row col value)' text lines."""
    coo = matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {float(v)!r}\n")
