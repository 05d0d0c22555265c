"""Neighborhood systems: 8-connected 2D grids, 26-connected (optionally
masked) 3D grids, and symmetrized kNN graphs for point clouds.

Graphs are immutable. Pairs are stored once with i < j in lexicographic
order; a CSR-style adjacency index gives each site its neighbors and the
pair ids they correspond to, which is what the inference sweep iterates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigurationError


@dataclass(frozen=True)
class NeighborGraph:
    """Undirected pair system over ``n_sites`` sites with per-pair weights.

    ``indptr``/``neighbor_sites``/``neighbor_pairs`` form a CSR adjacency:
    the neighbors of site i are ``neighbor_sites[indptr[i]:indptr[i+1]]``
    (ascending) and the corresponding pair ids sit at the same slots of
    ``neighbor_pairs``. ``row_sum_residual`` reports max_i |sum_j w_ij - 1|
    for point-cloud graphs (0 for grids, whose weights are all 1).
    """

    n_sites: int
    pairs: np.ndarray
    weights: np.ndarray
    indptr: np.ndarray = field(repr=False)
    neighbor_sites: np.ndarray = field(repr=False)
    neighbor_pairs: np.ndarray = field(repr=False)
    row_sum_residual: float = 0.0

    @property
    def n_pairs(self) -> int:
        return self.pairs.shape[0]

    def neighbors(self, i: int):
        """(neighbor site ids, pair ids) for site i, ascending by site id."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.neighbor_sites[lo:hi], self.neighbor_pairs[lo:hi]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def row_sums(self) -> np.ndarray:
        """Per-site sum of incident pair weights."""
        s = np.zeros(self.n_sites)
        np.add.at(s, self.pairs[:, 0], self.weights)
        np.add.at(s, self.pairs[:, 1], self.weights)
        return s


def _assemble(n: int, pairs: np.ndarray, weights: np.ndarray,
              row_sum_residual: float = 0.0) -> NeighborGraph:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if weights.shape[0] != pairs.shape[0]:
        raise ConfigurationError("one weight per pair required")
    if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
        raise ConfigurationError("pair endpoint out of range")
    if np.any(pairs[:, 0] >= pairs[:, 1]):
        raise ConfigurationError("pairs must satisfy i < j")
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    pairs, weights = pairs[order], weights[order]
    if pairs.shape[0] > 1:
        dup = np.all(pairs[1:] == pairs[:-1], axis=1)
        if np.any(dup):
            raise ConfigurationError("duplicate pairs")

    p = pairs.shape[0]
    src = np.concatenate([pairs[:, 0], pairs[:, 1]])
    dst = np.concatenate([pairs[:, 1], pairs[:, 0]])
    pid = np.concatenate([np.arange(p), np.arange(p)])
    order = np.lexsort((dst, src))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return NeighborGraph(
        n_sites=n,
        pairs=pairs,
        weights=weights,
        indptr=indptr,
        neighbor_sites=dst[order],
        neighbor_pairs=pid[order],
        row_sum_residual=float(row_sum_residual),
    )


def build_grid_2d(width: int, height: int) -> NeighborGraph:
    """8-connected pixel lattice; site id = y*width + x; all weights 1."""
    if width < 1 or height < 1:
        raise ConfigurationError("grid dimensions must be >= 1")
    x, y = np.meshgrid(np.arange(width), np.arange(height), indexing="xy")
    ids = (y * width + x).ravel()
    x, y = x.ravel(), y.ravel()
    chunks = []
    for dx, dy in ((1, 0), (0, 1), (1, 1), (-1, 1)):
        ok = (x + dx >= 0) & (x + dx < width) & (y + dy < height)
        chunks.append(
            np.stack([ids[ok], ids[ok] + dy * width + dx], axis=1)
        )
    pairs = np.concatenate(chunks, axis=0)
    return _assemble(width * height, pairs, np.ones(pairs.shape[0]))


_SHIFTS_26 = np.array(
    [
        (dx, dy, dz)
        for dx in (-1, 0, 1)
        for dy in (-1, 0, 1)
        for dz in (-1, 0, 1)
        if (dx, dy, dz) > (0, 0, 0)
    ],
    dtype=np.int64,
)


def build_grid_3d(nx: int, ny: int, nz: int, mask=None) -> NeighborGraph:
    """26-connected voxel lattice, optionally restricted to ``mask``.

    Full-grid site id is (x*ny + y)*nz + z; under a mask, retained voxels are
    re-indexed densely in that order (use ``np.flatnonzero(mask)`` to map
    dense ids back to voxel coordinates).
    """
    if nx < 1 or ny < 1 or nz < 1:
        raise ConfigurationError("grid dimensions must be >= 1")
    if mask is None:
        keep = np.ones(nx * ny * nz, dtype=bool)
    else:
        keep = np.asarray(mask, dtype=bool).reshape(-1)
        if keep.shape[0] != nx * ny * nz:
            raise ConfigurationError("mask size does not match dimensions")
        if not keep.any():
            raise ConfigurationError("empty mask")
    dense = np.cumsum(keep) - 1  # valid only where keep

    x, y, z = np.unravel_index(np.arange(nx * ny * nz), (nx, ny, nz))
    chunks = []
    for dx, dy, dz in _SHIFTS_26:
        ok = (
            (x + dx >= 0) & (x + dx < nx)
            & (y + dy >= 0) & (y + dy < ny)
            & (z + dz >= 0) & (z + dz < nz)
        )
        i = np.flatnonzero(ok)
        j = i + (dx * ny + dy) * nz + dz
        both = keep[i] & keep[j]
        chunks.append(np.stack([dense[i[both]], dense[j[both]]], axis=1))
    pairs = np.concatenate(chunks, axis=0)
    return _assemble(int(keep.sum()), pairs, np.ones(pairs.shape[0]))


def build_knn(points, k: int) -> NeighborGraph:
    """Symmetrized kNN graph over a point cloud.

    Each site selects its k nearest (ties broken by index); a pair is kept
    if either endpoint selected the other. Directed weights 1/|N_i| over the
    symmetrized neighborhoods are averaged into one weight per pair, then
    rescaled once (w_ij *= 2/(s_i+s_j), with s the row sums) to pull the row
    sums back toward 1. Exact row-stochasticity is impossible on a
    symmetric graph with irregular degrees; the leftover max deviation is
    reported as ``row_sum_residual``.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] not in (2, 3):
        raise ConfigurationError("points must be (n, 2) or (n, 3)")
    n = points.shape[0]
    if k < 1:
        raise ConfigurationError("k must be >= 1")
    if k >= n:
        raise ConfigurationError(f"k={k} must be < number of points n={n}")

    tree = cKDTree(points)
    dist, idx = tree.query(points, k=k + 1)
    sel = set()
    for i in range(n):
        # drop self, re-sort by (distance, index) so exact ties are stable
        cand = [(dist[i, m], int(idx[i, m])) for m in range(k + 1)
                if int(idx[i, m]) != i]
        if len(cand) < k:
            # self got dropped implicitly by a duplicate point; re-query wider
            d2, i2 = tree.query(points[i], k=min(n, k + 8))
            cand = sorted(
                {(float(d), int(j)) for d, j in zip(d2, i2) if int(j) != i}
            )
        cand.sort()
        for _, j in cand[:k]:
            sel.add((min(i, j), max(i, j)))
    pairs = np.array(sorted(sel), dtype=np.int64)

    deg = np.bincount(pairs.ravel(), minlength=n).astype(float)
    w = 0.5 * (1.0 / deg[pairs[:, 0]] + 1.0 / deg[pairs[:, 1]])
    s = np.zeros(n)
    np.add.at(s, pairs[:, 0], w)
    np.add.at(s, pairs[:, 1], w)
    w = w * 2.0 / (s[pairs[:, 0]] + s[pairs[:, 1]])
    s = np.zeros(n)
    np.add.at(s, pairs[:, 0], w)
    np.add.at(s, pairs[:, 1], w)
    return _assemble(n, pairs, w, row_sum_residual=float(np.abs(s - 1.0).max()))
