"""Quadratic energy terms and linear constraints of the shape-adaptation QP.

All three energies are sums of squared linear forms that act identically on
the x/y/z coordinates, so each is stored as one scalar structure matrix S
over particles plus per-coordinate targets: E(p) = sum_c ||S p_c - t_c||^2.
Nonlinear quantities (segment lengths, closest points, surface normals) are
frozen at the current iterate by the caller before assembly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .body import BodyModel
from .config import AdaptationConfig
from .features import LaplacianFeatureSet
from .hair import Hairstyle

_MIN_SEGMENT = 1e-9


@dataclass
class QuadraticTerm:
    """E(p) = sum over coordinates of || S p_c - targets_c ||^2."""

    name: str
    S: sparse.csr_matrix  # (rows, n_particles)
    targets: np.ndarray  # (rows, 3)
    frozen_segments: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    row_particles: np.ndarray | None = None  # owning particle per row (None: segment rows)

    def value(self, positions: np.ndarray) -> float:
        r = self.S @ positions - self.targets
        return float(np.sum(r * r))

    def per_row_values(self, positions: np.ndarray) -> np.ndarray:
        r = self.S @ positions - self.targets
        return np.sum(r * r, axis=1)

    def gram(self) -> sparse.csr_matrix:
        return (self.S.T @ self.S).tocsr()

    def linear(self) -> np.ndarray:
        """q contribution per coordinate: -2 S^T t."""
        return -2.0 * (self.S.T @ self.targets)


def strand_shape_terms(p_current: np.ndarray, source: Hairstyle) -> QuadraticTerm:
    """Per-segment direction preservation with lengths frozen at the iterate.

    Each segment (a, b) contributes ||(p_a - p_b)/len_ab - dbar_ab||^2 where
    len_ab is the current segment length and dbar_ab the source unit
    direction. Near-degenerate current segments freeze at the source length
    instead and are flagged via `frozen_segments`.
    """
    seg = source.segments()
    src_vec = source.positions[seg[:, 0]] - source.positions[seg[:, 1]]
    src_len = np.linalg.norm(src_vec, axis=1)
    if np.any(src_len < _MIN_SEGMENT):
        raise ValueError("source hairstyle has zero-length segments")
    directions = src_vec / src_len[:, None]

    cur_len = np.linalg.norm(p_current[seg[:, 0]] - p_current[seg[:, 1]], axis=1)
    degenerate = cur_len < _MIN_SEGMENT
    cur_len = np.where(degenerate, src_len, cur_len)

    m = len(seg)
    rows = np.repeat(np.arange(m), 2)
    cols = seg.ravel()
    inv = 1.0 / cur_len
    vals = np.column_stack([inv, -inv]).ravel()
    S = sparse.csr_matrix((vals, (rows, cols)), shape=(m, source.n_particles))
    return QuadraticTerm("strand_shape", S, directions, np.flatnonzero(degenerate))


def inter_strand_terms(features: LaplacianFeatureSet,
                       gamma: np.ndarray | None = None) -> QuadraticTerm:
    """Laplacian-feature preservation: ||L_i(p) - L_i(source)||^2 per particle,
    optionally scaled by per-particle weights gamma."""
    active = features.active_rows()
    n = len(features)
    m = len(active)
    scale = np.ones(m) if gamma is None else np.sqrt(gamma[active])

    k = features.k
    rows = np.repeat(np.arange(m), k + 1)
    cols = np.column_stack([active, np.maximum(features.neighbors[active], 0)]).ravel()
    w = features.weights[active]
    vals = (np.column_stack([w.sum(axis=1), -w]) * scale[:, None]).ravel()
    S = sparse.csr_matrix((vals, (rows, cols)), shape=(m, n))
    targets = features.reference[active] * scale[:, None]
    return QuadraticTerm("inter_strand", S, targets, row_particles=active)


def hair_body_terms(p_hat: np.ndarray, gamma: np.ndarray | None = None,
                    rows: np.ndarray | None = None) -> QuadraticTerm:
    """Proximity to the initial transfer: ||p_i - p_hat_i||^2 per particle."""
    n = len(p_hat)
    idx = np.arange(n) if rows is None else np.asarray(rows, dtype=np.int64)
    scale = np.ones(len(idx)) if gamma is None else np.sqrt(gamma[idx])
    S = sparse.csr_matrix((scale, (np.arange(len(idx)), idx)), shape=(len(idx), n))
    return QuadraticTerm("hair_body", S, p_hat[idx] * scale[:, None], row_particles=idx)


@dataclass
class PenetrationRows:
    """Half-space rows <p_i - q_i, n_i> >= eps_c at frozen closest points."""

    particles: np.ndarray  # (M,) particle indices
    normals: np.ndarray  # (M, 3) unit outward pseudo-normals
    offsets: np.ndarray  # (M,) required <p_i, n_i> lower bounds
    surface_points: np.ndarray  # (M, 3) frozen closest points

    def violation(self, positions: np.ndarray) -> np.ndarray:
        lhs = np.einsum("ij,ij->i", positions[self.particles], self.normals)
        return self.offsets - lhs  # positive entries violate


def penetration_constraints(p_current: np.ndarray, target: BodyModel, eps_c: float,
                            particles: np.ndarray,
                            activation_bound: float | None = None) -> PenetrationRows:
    """One half-space per listed particle, anchored at its current closest
    surface point. With `activation_bound`, rows further than the bound from
    the surface are dropped (speed flag; default keeps every row)."""
    particles = np.asarray(particles, dtype=np.int64)
    _, _, q, n = target.queries.closest_points_with_normals(p_current[particles])
    if activation_bound is not None:
        signed = np.einsum("ij,ij->i", p_current[particles] - q, n)
        keep = signed < activation_bound
        particles, q, n = particles[keep], q[keep], n[keep]
    offsets = np.einsum("ij,ij->i", q, n) + eps_c
    return PenetrationRows(particles, n, offsets, q)


@dataclass
class QPProblem:
    """Assembled QP over interleaved particle coordinates (x0,y0,z0,x1,...).

    minimize 0.5 x^T P x + q^T x  subject to  A x >= lower, x[eq] = eq_values.
    """

    P: sparse.csc_matrix
    q: np.ndarray
    A: sparse.csr_matrix
    lower: np.ndarray
    eq_indices: np.ndarray  # fixed variable indices (root coordinates)
    eq_values: np.ndarray
    terms: list[tuple[float, QuadraticTerm]]

    @property
    def n(self) -> int:
        return self.P.shape[0]

    def objective(self, positions: np.ndarray) -> float:
        return float(sum(w * t.value(positions) for w, t in self.terms))


def assemble_qp(terms: list[tuple[float, QuadraticTerm]], n_particles: int,
                constraints: PenetrationRows, root_indices: np.ndarray,
                root_targets: np.ndarray, config: AdaptationConfig) -> QPProblem:
    """Stack weighted quadratic terms into P/q and expand constraints to the
    interleaved coordinate layout. P is PSD by construction (a sum of Gram
    matrices); symmetry is asserted."""
    p1 = sparse.csr_matrix((n_particles, n_particles))
    q1 = np.zeros((n_particles, 3))
    for w, t in terms:
        p1 = p1 + 2.0 * w * t.gram()
        q1 += w * t.linear()
    assert abs(p1 - p1.T).max() < 1e-10, "assembled quadratic form must be symmetric"

    P = sparse.kron(p1, sparse.eye(3), format="csc")
    q = q1.ravel()

    m = len(constraints.particles)
    rows = np.repeat(np.arange(m), 3)
    cols = (3 * constraints.particles[:, None] + np.arange(3)).ravel()
    A = sparse.csr_matrix(
        (constraints.normals.ravel(), (rows, cols)), shape=(m, 3 * n_particles)
    )

    eq_idx = (3 * np.asarray(root_indices, dtype=np.int64)[:, None] + np.arange(3)).ravel()
    eq_val = np.asarray(root_targets, dtype=np.float64).ravel()
    return QPProblem(P, q, A, constraints.offsets.copy(), eq_idx, eq_val, list(terms))
