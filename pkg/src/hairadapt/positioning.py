"""Hair-body local positioning: encode particles on the source, replay on the
target, then smooth replay artifacts.

Each particle is anchored to a skeleton bone: the closest bone point, the ray
intersection with the body surface, and the remaining offset length along the
ray. Replaying those coordinates on the target gives a raw transfer; strand
particles whose discrete Laplacian deviates too far from the source are then
re-solved per strand against Dirichlet anchors (a 1D Poisson equation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .body import BodyModel, SurfacePoint
from .config import AdaptationConfig
from .hair import Hairstyle

FALLBACK_BONE = -1  # anchor is the nearest surface point, offset along its normal


class DegenerateAnchorError(RuntimeError):
    def __init__(self, particle: int):
        super().__init__(f"degenerate replay direction for particle {particle}")
        self.particle = particle


@dataclass
class LocalAnchorSet:
    """Per-particle local coordinates relative to the body.

    bone: anchor bone index, or FALLBACK_BONE for nearest-surface anchors.
    t: parameter of the closest bone point in [0, 1].
    face / bary: surface intersection as a barycentric face reference.
    eta: offset length from the surface intersection to the particle, meters.
    """

    bone: np.ndarray  # (N,) int32
    t: np.ndarray  # (N,) float64
    face: np.ndarray  # (N,) int64
    bary: np.ndarray  # (N, 3) float64
    eta: np.ndarray  # (N,) float64

    def __len__(self) -> int:
        return len(self.bone)

    def surface_point(self, i: int) -> SurfacePoint:
        return SurfacePoint(int(self.face[i]), self.bary[i])


@dataclass
class InitialTransfer:
    p_tilde: np.ndarray  # raw replayed positions (N, 3)
    p_hat: np.ndarray  # smoothed positions (N, 3)
    discrepant: np.ndarray  # particle indices re-solved by smoothing


def _bone_closest_params(points: np.ndarray, head: np.ndarray, tail: np.ndarray) -> np.ndarray:
    d = tail - head
    return np.clip((points - head) @ d / (d @ d), 0.0, 1.0)


def _barycentric_in_face(body: BodyModel, faces: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of on-face points, clipped to the simplex."""
    tri = body.vertices[body.faces[faces]]
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    r = points - tri[:, 0]
    a = np.einsum("ij,ij->i", e1, e1)
    b = np.einsum("ij,ij->i", e1, e2)
    c = np.einsum("ij,ij->i", e2, e2)
    det = a * c - b * b
    u = (c * np.einsum("ij,ij->i", r, e1) - b * np.einsum("ij,ij->i", r, e2)) / det
    v = (a * np.einsum("ij,ij->i", r, e2) - b * np.einsum("ij,ij->i", r, e1)) / det
    bary = np.column_stack([1.0 - u - v, u, v])
    bary = np.clip(bary, 0.0, 1.0)
    return bary / bary.sum(axis=1, keepdims=True)


def select_anchors(points: np.ndarray, body: BodyModel, sigma_bone: float) -> LocalAnchorSet:
    """Best-scoring bone anchor per point; nearest-surface fallback otherwise.

    A bone is a candidate when the ray from its closest point through the
    particle hits the body inside the bone's valid region; candidates are
    ranked by distance to the hit, penalized by alignment between ray and
    bone (exp(sigma * <r, v>^2)). Invalid bones are excluded outright.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = len(points)
    mq = body.queries
    n_bones = len(body.bones)
    valid_mask = body.face_valid_mask()

    scores = np.full((n_bones, n), np.inf)
    bone_t = np.zeros((n_bones, n))
    hit_face = np.full((n_bones, n), -1, dtype=np.int64)
    hit_point = np.zeros((n_bones, n, 3))

    for b, bone in enumerate(body.bones):
        t = _bone_closest_params(points, bone.head, bone.tail)
        o = bone.head + t[:, None] * (bone.tail - bone.head)
        rays = points - o
        ray_len = np.linalg.norm(rays, axis=1)
        ok = ray_len > 1e-12
        dirs = np.where(ok[:, None], rays / np.maximum(ray_len, 1e-300)[:, None], 0.0)
        t_hit, f_hit = mq.raycast(o, dirs)
        hit = ok & (f_hit >= 0) & valid_mask[b][np.maximum(f_hit, 0)]
        q = o + t_hit[:, None] * dirs
        align = dirs @ bone.direction
        dist = np.linalg.norm(points - q, axis=1)
        s = dist * np.exp(sigma_bone * align**2)
        scores[b, hit] = s[hit]
        bone_t[b] = t
        hit_face[b] = f_hit
        hit_point[b] = q

    best = np.argmin(scores, axis=0)
    best_score = scores[best, np.arange(n)]
    no_bone = ~np.isfinite(best_score)

    bone_idx = best.astype(np.int32)
    t_out = bone_t[best, np.arange(n)]
    face_out = hit_face[best, np.arange(n)]
    q_out = hit_point[best, np.arange(n)]

    if np.any(no_bone):
        d, f, cp, _ = mq.closest_points(points[no_bone])
        bone_idx[no_bone] = FALLBACK_BONE
        t_out[no_bone] = 0.0
        face_out[no_bone] = f
        q_out[no_bone] = cp

    eta = np.linalg.norm(points - q_out, axis=1)
    bary = _barycentric_in_face(body, face_out, q_out)
    return LocalAnchorSet(bone_idx, t_out, face_out, bary, eta)


def select_anchor(particle: np.ndarray, body: BodyModel, sigma_bone: float):
    """Single-particle anchor; None when no bone yields a valid intersection."""
    anchors = select_anchors(np.asarray(particle)[None, :], body, sigma_bone)
    if anchors.bone[0] == FALLBACK_BONE:
        return None
    return (
        int(anchors.bone[0]),
        float(anchors.t[0]),
        SurfacePoint(int(anchors.face[0]), anchors.bary[0]),
        float(anchors.eta[0]),
    )


def snap_roots_to_surface(anchors: LocalAnchorSet, points: np.ndarray,
                          root_indices: np.ndarray, body: BodyModel) -> None:
    """Roots are surface points by definition: re-anchor them to their nearest
    surface point with zero offset so the replayed root sits exactly on the
    target surface."""
    roots = points[root_indices]
    _, f, cp, _ = body.queries.closest_points(roots)
    anchors.bone[root_indices] = FALLBACK_BONE
    anchors.t[root_indices] = 0.0
    anchors.face[root_indices] = f
    anchors.bary[root_indices] = _barycentric_in_face(body, f, cp)
    anchors.eta[root_indices] = 0.0


def replay_coordinates(anchors: LocalAnchorSet, target: BodyModel) -> np.ndarray:
    """Apply stored local coordinates on the target body."""
    n = len(anchors)
    tri = target.vertices[target.faces[anchors.face]]
    q = np.einsum("ij,ijk->ik", anchors.bary, tri)

    p = np.empty((n, 3))
    fallback = anchors.bone == FALLBACK_BONE
    if np.any(fallback):
        normals = target.queries.face_normals[anchors.face[fallback]]
        p[fallback] = q[fallback] + anchors.eta[fallback, None] * normals

    for b, bone in enumerate(target.bones):
        rows = np.flatnonzero(anchors.bone == b)
        if rows.size == 0:
            continue
        o = bone.head + anchors.t[rows, None] * (bone.tail - bone.head)
        d = q[rows] - o
        norms = np.linalg.norm(d, axis=1)
        bad = norms < 1e-9
        if np.any(bad):
            raise DegenerateAnchorError(int(rows[np.flatnonzero(bad)[0]]))
        p[rows] = q[rows] + anchors.eta[rows, None] * (d / norms[:, None])
    return p


def strand_laplacians(hair: Hairstyle, values: np.ndarray) -> np.ndarray:
    """Discrete per-particle Laplacian of `values`, weighted by the source
    segment lengths of `hair`; zero on strand endpoints."""
    pos = hair.positions
    out = np.zeros_like(np.atleast_2d(values.T).T, dtype=np.float64)
    seg = hair.segments()
    lengths = np.linalg.norm(pos[seg[:, 1]] - pos[seg[:, 0]], axis=1)
    inv = 1.0 / lengths
    interior = hair.interior_mask()
    idx = np.flatnonzero(interior)
    # for interior particle i, segment (i-1, i) has index i - 1 - strand_id
    # in the packed segment array; recover via searchsorted on segment starts
    seg_of_a = np.full(hair.n_particles, -1, dtype=np.int64)
    seg_of_a[seg[:, 0]] = np.arange(len(seg))
    left = seg_of_a[idx - 1]
    right = seg_of_a[idx]
    fwd = (values[idx + 1] - values[idx]) * inv[right][:, None]
    bwd = (values[idx] - values[idx - 1]) * inv[left][:, None]
    out[idx] = fwd - bwd
    return out


def detect_discrepant(p_tilde: np.ndarray, source: Hairstyle, eps_s: float) -> np.ndarray:
    """Interior particles whose Laplacian drifted more than eps_s from the
    source feature; endpoints are never flagged."""
    l_new = strand_laplacians(source, p_tilde)
    l_ref = strand_laplacians(source, source.positions)
    diff = np.linalg.norm(l_new - l_ref, axis=1)
    mask = (diff > eps_s) & source.interior_mask()
    return np.flatnonzero(mask)


def poisson_smooth(p_tilde: np.ndarray, source: Hairstyle, discrepant: np.ndarray) -> np.ndarray:
    """Re-solve flagged particles so their source-Laplacian is restored, with
    all other particles held fixed (Dirichlet). One tridiagonal system per
    strand per coordinate, assembled globally."""
    n = source.n_particles
    if len(discrepant) == 0:
        return p_tilde.copy()
    interior = source.interior_mask()
    if not np.all(interior[discrepant]):
        raise ValueError("discrepant set may only contain interior particles")

    pos = source.positions
    seg = source.segments()
    inv = 1.0 / np.linalg.norm(pos[seg[:, 1]] - pos[seg[:, 0]], axis=1)
    seg_of_a = np.full(n, -1, dtype=np.int64)
    seg_of_a[seg[:, 0]] = np.arange(len(seg))

    is_unknown = np.zeros(n, dtype=bool)
    is_unknown[discrepant] = True

    rows, cols, vals = [], [], []
    rhs = p_tilde.copy()
    d = discrepant
    wl = inv[seg_of_a[d - 1]]
    wr = inv[seg_of_a[d]]
    rows.extend([d, d, d])
    cols.extend([d - 1, d, d + 1])
    vals.extend([wl, -(wl + wr), wr])
    l_ref = strand_laplacians(source, source.positions)
    rhs[d] = l_ref[d]
    fixed = np.flatnonzero(~is_unknown)
    rows.append(fixed)
    cols.append(fixed)
    vals.append(np.ones(len(fixed)))

    mat = sparse.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    lu = splu(mat)
    out = np.column_stack([lu.solve(rhs[:, c]) for c in range(3)])
    return out


def initial_transfer(source_hair: Hairstyle, source_body: BodyModel,
                     target_body: BodyModel, config: AdaptationConfig,
                     anchors: LocalAnchorSet | None = None) -> tuple[InitialTransfer, LocalAnchorSet]:
    """Full local-positioning pipeline; returns the transfer and the anchor
    cache (reusable across targets)."""
    if anchors is None:
        anchors = select_anchors(source_hair.positions, source_body, config.sigma_bone)
        snap_roots_to_surface(anchors, source_hair.positions, source_hair.root_indices, source_body)
    p_tilde = replay_coordinates(anchors, target_body)
    discrepant = detect_discrepant(p_tilde, source_hair, config.eps_s)
    p_hat = poisson_smooth(p_tilde, source_hair, discrepant)
    return InitialTransfer(p_tilde, p_hat, discrepant), anchors
