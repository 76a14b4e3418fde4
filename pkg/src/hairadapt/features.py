"""Cross-strand Laplacian features.

For every particle we keep its k nearest particles from *other* strands,
inverse-distance weights normalized to sum to 1, and the reference feature
L_i = sum_j w_j (p_i - p_j) evaluated on the source positions. Neighbor sets
and weights are computed once on the source and never rebuilt on deformed
positions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .hair import Hairstyle

_MIN_DIST = 1e-12


@dataclass
class LaplacianFeatureSet:
    """Fixed neighbor topology and reference features for one hairstyle.

    neighbors/weights are (N, k); rows may be right-padded with -1 / 0.0 when
    the pool cannot supply k cross-strand neighbors (`counts` flags them).
    """

    neighbors: np.ndarray  # (N, k) int64, -1 padding
    weights: np.ndarray  # (N, k) float64, zero padding
    counts: np.ndarray  # (N,) int64 valid neighbors per particle
    reference: np.ndarray  # (N, 3) feature on the source positions
    k: int

    def __len__(self) -> int:
        return len(self.counts)

    @property
    def short_rows(self) -> np.ndarray:
        """Particles that received fewer than k neighbors."""
        return np.flatnonzero(self.counts < self.k)

    def active_rows(self) -> np.ndarray:
        return np.flatnonzero(self.counts > 0)

    def feature_values(self, positions: np.ndarray) -> np.ndarray:
        """L_i at arbitrary positions with the stored topology."""
        safe = np.maximum(self.neighbors, 0)
        gathered = np.einsum("nk,nkc->nc", self.weights, positions[safe])
        total = self.weights.sum(axis=1)
        return total[:, None] * positions - gathered


def _assemble(points: np.ndarray, neighbor_points: np.ndarray,
              neighbors: np.ndarray, dists: np.ndarray, k: int):
    counts = (neighbors >= 0).sum(axis=1)
    inv = np.where(neighbors >= 0, 1.0 / np.maximum(dists, _MIN_DIST), 0.0)
    sums = inv.sum(axis=1)
    weights = np.divide(inv, sums[:, None], out=np.zeros_like(inv), where=sums[:, None] > 0)
    safe = np.maximum(neighbors, 0)
    reference = weights.sum(axis=1)[:, None] * points - np.einsum(
        "nk,nkc->nc", weights, neighbor_points[safe]
    )
    return counts, weights, reference


def _knn_excluding(tree: cKDTree, pool_strands: np.ndarray, query_points: np.ndarray,
                   query_strands: np.ndarray, k: int, pool_size: int):
    """k nearest pool entries per query whose strand differs from the query's."""
    n = len(query_points)
    out_idx = np.full((n, k), -1, dtype=np.int64)
    out_dist = np.zeros((n, k))
    pending = np.arange(n)
    request = min(pool_size, k + 8)
    while pending.size:
        kk = min(request, pool_size)
        d, idx = tree.query(query_points[pending], k=kk)
        if kk == 1:
            d, idx = d[:, None], idx[:, None]
        ok = pool_strands[idx] != query_strands[pending, None]
        order = np.cumsum(ok, axis=1)
        take = ok & (order <= k)
        found = take.sum(axis=1)
        for row in range(len(pending)):
            m = found[row]
            out_idx[pending[row], :m] = idx[row, take[row]]
            out_dist[pending[row], :m] = d[row, take[row]]
        done = (found >= k) | (kk >= pool_size)
        pending = pending[~done]
        request = min(pool_size, request * 4)
    return out_idx, out_dist


def build_knn_features(source: Hairstyle, k: int) -> LaplacianFeatureSet:
    """Neighbor sets over the whole hairstyle, excluding each particle's own
    strand. A single-strand hairstyle yields an empty feature set."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n = source.n_particles
    if source.n_strands < 2:
        warnings.warn(
            "hairstyle has a single strand: inter-strand energy disabled", stacklevel=2
        )
        return LaplacianFeatureSet(
            neighbors=np.full((n, k), -1, dtype=np.int64),
            weights=np.zeros((n, k)),
            counts=np.zeros(n, dtype=np.int64),
            reference=np.zeros((n, 3)),
            k=k,
        )
    strand_of = source.strand_of_particle()
    tree = cKDTree(source.positions)
    neighbors, dists = _knn_excluding(
        tree, strand_of, source.positions, strand_of, k, n
    )
    counts, weights, reference = _assemble(
        source.positions, source.positions, neighbors, dists, k
    )
    if np.any(counts < k):
        warnings.warn(
            f"{int((counts < k).sum())} particles received fewer than k={k} "
            "cross-strand neighbors",
            stacklevel=2,
        )
    return LaplacianFeatureSet(neighbors, weights, counts, reference, k)


def build_decoupled_features(source: Hairstyle, guide_strands: np.ndarray,
                             k: int) -> LaplacianFeatureSet:
    """Features for non-guide particles whose neighbor pool is restricted to
    guide-strand particles; rows for guide particles stay empty."""
    guide_strands = np.asarray(guide_strands, dtype=np.int64)
    strand_of = source.strand_of_particle()
    is_guide_strand = np.zeros(source.n_strands, dtype=bool)
    is_guide_strand[guide_strands] = True
    pool_mask = is_guide_strand[strand_of]
    pool_idx = np.flatnonzero(pool_mask)
    normal_idx = np.flatnonzero(~pool_mask)

    n = source.n_particles
    neighbors = np.full((n, k), -1, dtype=np.int64)
    dists = np.zeros((n, k))
    if pool_idx.size and normal_idx.size:
        tree = cKDTree(source.positions[pool_idx])
        local_nb, local_d = _knn_excluding(
            tree,
            strand_of[pool_idx],
            source.positions[normal_idx],
            strand_of[normal_idx],
            k,
            len(pool_idx),
        )
        valid = local_nb >= 0
        remapped = np.where(valid, pool_idx[np.maximum(local_nb, 0)], -1)
        neighbors[normal_idx] = remapped
        dists[normal_idx] = local_d
    counts, weights, reference = _assemble(
        source.positions, source.positions, neighbors, dists, k
    )
    return LaplacianFeatureSet(neighbors, weights, counts, reference, k)
