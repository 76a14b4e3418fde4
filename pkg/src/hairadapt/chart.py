"""Disk parameterization of the head patch and chart-space point location.

The boundary is pinned to the unit circle by rest arc length; interior
coordinates solve the weighted graph Laplacian (cotangent weights for the
harmonic chart, uniform weights for the Tutte chart). Convex-boundary maps
with positive weights are injective, which the constructor verifies by
checking face orientations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .meshutil import boundary_loops, cotangent_weights, face_adjacency, uniform_weights
from .scalp import HeadPatch

CHART_KINDS = ("harmonic", "tutte")
_WALK_MAX_STEPS = 4096


class ChartError(ValueError):
    pass


@dataclass
class ParamChart:
    """2D coordinates per head-patch vertex plus walking acceleration."""

    patch: HeadPatch
    u: np.ndarray  # (V, 2)
    kind: str
    adjacency: np.ndarray = field(init=False, repr=False)  # (F, 3) neighbor per edge
    _tri_u: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.adjacency = face_adjacency(self.patch.faces)
        self._tri_u = self.u[self.patch.faces]

    def face_bary(self, face: int, point: np.ndarray) -> np.ndarray:
        """Barycentric coordinates of a 2D point in a chart triangle."""
        t = self._tri_u[face]
        m = np.column_stack([t[1] - t[0], t[2] - t[0]])
        lam = np.linalg.solve(m, point - t[0])
        return np.array([1.0 - lam[0] - lam[1], lam[0], lam[1]])

    def locate(self, point: np.ndarray, start_face: int | None = None,
               eps: float = 1e-12) -> tuple[int, np.ndarray]:
        """Host triangle for a chart point via straight-line walking with a
        restart-from-anywhere fallback. Raises ChartError outside the chart."""
        if start_face is not None:
            face = int(start_face)
            visited = 0
            while visited < _WALK_MAX_STEPS:
                bary = self.face_bary(face, point)
                worst = int(np.argmin(bary))
                if bary[worst] >= -eps:
                    return face, np.clip(bary, 0.0, None) / np.clip(bary, 0.0, None).sum()
                nxt = self.adjacency[face, worst]
                if nxt < 0:
                    break
                face = int(nxt)
                visited += 1
        return self._locate_global(point, eps)

    def _locate_global(self, point: np.ndarray, eps: float) -> tuple[int, np.ndarray]:
        t = self._tri_u
        m0 = t[:, 1] - t[:, 0]
        m1 = t[:, 2] - t[:, 0]
        det = m0[:, 0] * m1[:, 1] - m0[:, 1] * m1[:, 0]
        r = point - t[:, 0]
        l1 = (r[:, 0] * m1[:, 1] - r[:, 1] * m1[:, 0]) / det
        l2 = (m0[:, 0] * r[:, 1] - m0[:, 1] * r[:, 0]) / det
        bary = np.column_stack([1.0 - l1 - l2, l1, l2])
        worst = bary.min(axis=1)
        best = int(np.argmax(worst))
        if worst[best] < -1e-9:
            raise ChartError(f"point {point} lies outside the chart")
        b = np.clip(bary[best], 0.0, None)
        return best, b / b.sum()

    def embed(self, points_u: np.ndarray, hosts: np.ndarray | None = None):
        """3D positions (and hosts/barycentrics) for chart points."""
        n = len(points_u)
        faces = np.empty(n, dtype=np.int64)
        bary = np.empty((n, 3))
        start = None
        for i in range(n):
            s = int(hosts[i]) if hosts is not None else start
            faces[i], bary[i] = self.locate(points_u[i], start_face=s)
            start = int(faces[i])
        tri = self.patch.vertices[self.patch.faces[faces]]
        pos = np.einsum("ij,ijk->ik", bary, tri)
        return pos, faces, bary

    def vertex_u(self, head_vertices: np.ndarray) -> np.ndarray:
        return self.u[head_vertices]

    def surface_point_u(self, head_faces: np.ndarray, bary: np.ndarray) -> np.ndarray:
        """Chart coordinates of on-surface points given per head-patch face."""
        tri_u = self.u[self.patch.faces[head_faces]]
        return np.einsum("ij,ijk->ik", bary, tri_u)


def parameterize_head(patch: HeadPatch, kind: str = "harmonic") -> ParamChart:
    """Map the disk-topology head patch to the unit circle."""
    if kind not in CHART_KINDS:
        raise ValueError(f"unknown chart kind {kind!r}; expected one of {CHART_KINDS}")
    loops = boundary_loops(patch.faces)
    if len(loops) != 1:
        raise ChartError(
            f"head patch must be a topological disk (found {len(loops)} boundary loops)"
        )
    loop = loops[0]
    start = int(np.argmin(loop))  # deterministic loop origin
    loop = np.roll(loop, -start)

    pts = patch.vertices[loop]
    seg = np.linalg.norm(np.diff(np.vstack([pts, pts[:1]]), axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg[:-1])])
    theta = 2.0 * np.pi * cum / seg.sum()
    n = len(patch.vertices)
    u = np.zeros((n, 2))
    u[loop, 0] = np.cos(theta)
    u[loop, 1] = np.sin(theta)

    weights = (
        cotangent_weights(patch.vertices, patch.faces)
        if kind == "harmonic"
        else uniform_weights(patch.faces)
    )
    boundary_mask = np.zeros(n, dtype=bool)
    boundary_mask[loop] = True
    interior = np.flatnonzero(~boundary_mask)
    if interior.size:
        index_of = -np.ones(n, dtype=np.int64)
        index_of[interior] = np.arange(len(interior))
        rows, cols, vals = [], [], []
        rhs = np.zeros((len(interior), 2))
        diag = np.zeros(len(interior))
        for (a, b), w in weights.items():
            for i, j in ((a, b), (b, a)):
                if boundary_mask[i]:
                    continue
                ii = index_of[i]
                diag[ii] += w
                if boundary_mask[j]:
                    rhs[ii] += w * u[j]
                else:
                    rows.append(ii)
                    cols.append(index_of[j])
                    vals.append(-w)
        rows.extend(range(len(interior)))
        cols.extend(range(len(interior)))
        vals.extend(diag)
        lap = sparse.csc_matrix(
            (vals, (rows, cols)), shape=(len(interior), len(interior))
        )
        sol = spsolve(lap, rhs)
        u[interior] = sol.reshape(len(interior), 2)

    tri = u[patch.faces]
    signed = 0.5 * (
        (tri[:, 1, 0] - tri[:, 0, 0]) * (tri[:, 2, 1] - tri[:, 0, 1])
        - (tri[:, 1, 1] - tri[:, 0, 1]) * (tri[:, 2, 0] - tri[:, 0, 0])
    )
    if np.all(signed < 0):
        u[:, 1] = -u[:, 1]
        signed = -signed
    flipped = int(np.sum(signed <= 0))
    if flipped:
        raise ChartError(f"{flipped} flipped triangles in the {kind} chart")
    return ParamChart(patch, u, kind)
