"""Triangle-mesh proximity and ray queries over a flat BVH.

Batched kernels are numba-compiled; the BVH is built once per mesh in
Python (median split on the longest centroid axis) and traversed with an
explicit stack. Closest-point normals are angle-weighted pseudo-normals
resolved at the closest feature (face / edge / vertex), which gives a
sign-correct inside/outside test on closed meshes.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_LEAF_SIZE = 4
_STACK = 128
_FEATURE_EPS = 1e-9


@njit(cache=True)
def _closest_point_tri(a, b, c, p):
    """Closest point on triangle abc to p, with barycentric coordinates.

    Region walk from Ericson, Real-Time Collision Detection, ch. 5.1.5.
    Returns (point, (u, v, w)) with point = u*a + v*b + w*c.
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ab[0] * ap[0] + ab[1] * ap[1] + ab[2] * ap[2]
    d2 = ac[0] * ap[0] + ac[1] * ap[1] + ac[2] * ap[2]
    if d1 <= 0.0 and d2 <= 0.0:
        return a, np.array((1.0, 0.0, 0.0))
    bp = p - b
    d3 = ab[0] * bp[0] + ab[1] * bp[1] + ab[2] * bp[2]
    d4 = ac[0] * bp[0] + ac[1] * bp[1] + ac[2] * bp[2]
    if d3 >= 0.0 and d4 <= d3:
        return b, np.array((0.0, 1.0, 0.0))
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return a + v * ab, np.array((1.0 - v, v, 0.0))
    cp = p - c
    d5 = ab[0] * cp[0] + ab[1] * cp[1] + ab[2] * cp[2]
    d6 = ac[0] * cp[0] + ac[1] * cp[1] + ac[2] * cp[2]
    if d6 >= 0.0 and d5 <= d6:
        return c, np.array((0.0, 0.0, 1.0))
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return a + w * ac, np.array((1.0 - w, 0.0, w))
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return b + w * (c - b), np.array((0.0, 1.0 - w, w))
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return a + ab * v + ac * w, np.array((1.0 - v - w, v, w))


@njit(cache=True)
def _ray_tri(orig, direction, a, b, c):
    """Moller-Trumbore; returns t >= 0 of the hit or -1."""
    e1 = b - a
    e2 = c - a
    pvec = np.empty(3)
    pvec[0] = direction[1] * e2[2] - direction[2] * e2[1]
    pvec[1] = direction[2] * e2[0] - direction[0] * e2[2]
    pvec[2] = direction[0] * e2[1] - direction[1] * e2[0]
    det = e1[0] * pvec[0] + e1[1] * pvec[1] + e1[2] * pvec[2]
    if abs(det) < 1e-14:
        return -1.0
    inv = 1.0 / det
    tvec = orig - a
    u = (tvec[0] * pvec[0] + tvec[1] * pvec[1] + tvec[2] * pvec[2]) * inv
    if u < -1e-9 or u > 1.0 + 1e-9:
        return -1.0
    qvec = np.empty(3)
    qvec[0] = tvec[1] * e1[2] - tvec[2] * e1[1]
    qvec[1] = tvec[2] * e1[0] - tvec[0] * e1[2]
    qvec[2] = tvec[0] * e1[1] - tvec[1] * e1[0]
    v = (direction[0] * qvec[0] + direction[1] * qvec[1] + direction[2] * qvec[2]) * inv
    if v < -1e-9 or u + v > 1.0 + 1e-9:
        return -1.0
    t = (e2[0] * qvec[0] + e2[1] * qvec[1] + e2[2] * qvec[2]) * inv
    return t


@njit(cache=True)
def _box_dist2(bmin, bmax, p):
    d = 0.0
    for i in range(3):
        if p[i] < bmin[i]:
            d += (bmin[i] - p[i]) ** 2
        elif p[i] > bmax[i]:
            d += (p[i] - bmax[i]) ** 2
    return d


@njit(cache=True)
def _box_ray_hit(bmin, bmax, orig, inv_dir, t_best):
    tmin = 0.0
    tmax = t_best
    for i in range(3):
        t1 = (bmin[i] - orig[i]) * inv_dir[i]
        t2 = (bmax[i] - orig[i]) * inv_dir[i]
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > tmin:
            tmin = t1
        if t2 < tmax:
            tmax = t2
        if tmin > tmax:
            return False
    return True


@njit(cache=True)
def _closest_batch(points, tri_verts, node_min, node_max, node_left, node_right,
                   node_start, node_count, tri_order):
    n = points.shape[0]
    out_pts = np.empty((n, 3))
    out_faces = np.empty(n, dtype=np.int64)
    out_bary = np.empty((n, 3))
    out_d = np.empty(n)
    stack = np.empty(_STACK, dtype=np.int64)
    for q in range(n):
        p = points[q]
        best_d2 = np.inf
        best_f = -1
        best_pt = np.zeros(3)
        best_b = np.zeros(3)
        top = 0
        stack[top] = 0
        top += 1
        while top > 0:
            top -= 1
            node = stack[top]
            if _box_dist2(node_min[node], node_max[node], p) >= best_d2:
                continue
            if node_left[node] < 0:  # leaf
                for k in range(node_start[node], node_start[node] + node_count[node]):
                    f = tri_order[k]
                    cp, bary = _closest_point_tri(
                        tri_verts[f, 0], tri_verts[f, 1], tri_verts[f, 2], p
                    )
                    d2 = (cp[0] - p[0]) ** 2 + (cp[1] - p[1]) ** 2 + (cp[2] - p[2]) ** 2
                    if d2 < best_d2:
                        best_d2 = d2
                        best_f = f
                        best_pt = cp
                        best_b = bary
            else:
                l = node_left[node]
                r = node_right[node]
                dl = _box_dist2(node_min[l], node_max[l], p)
                dr = _box_dist2(node_min[r], node_max[r], p)
                # push farther child first so the nearer one is popped next
                if dl <= dr:
                    if dr < best_d2:
                        stack[top] = r
                        top += 1
                    if dl < best_d2:
                        stack[top] = l
                        top += 1
                else:
                    if dl < best_d2:
                        stack[top] = l
                        top += 1
                    if dr < best_d2:
                        stack[top] = r
                        top += 1
        out_pts[q] = best_pt
        out_faces[q] = best_f
        out_bary[q] = best_b
        out_d[q] = np.sqrt(best_d2)
    return out_d, out_faces, out_pts, out_bary


@njit(cache=True)
def _ray_batch(origins, dirs, tri_verts, node_min, node_max, node_left, node_right,
               node_start, node_count, tri_order, t_min):
    n = origins.shape[0]
    out_t = np.full(n, -1.0)
    out_f = np.full(n, -1, dtype=np.int64)
    stack = np.empty(_STACK, dtype=np.int64)
    for q in range(n):
        orig = origins[q]
        d = dirs[q]
        inv = np.empty(3)
        for i in range(3):
            inv[i] = 1.0 / d[i] if abs(d[i]) > 1e-300 else 1e300
        best_t = np.inf
        best_f = -1
        top = 0
        stack[top] = 0
        top += 1
        while top > 0:
            top -= 1
            node = stack[top]
            if not _box_ray_hit(node_min[node], node_max[node], orig, inv, best_t):
                continue
            if node_left[node] < 0:
                for k in range(node_start[node], node_start[node] + node_count[node]):
                    f = tri_order[k]
                    t = _ray_tri(orig, d, tri_verts[f, 0], tri_verts[f, 1], tri_verts[f, 2])
                    if t_min <= t < best_t:
                        best_t = t
                        best_f = f
            else:
                stack[top] = node_left[node]
                top += 1
                stack[top] = node_right[node]
                top += 1
        if best_f >= 0:
            out_t[q] = best_t
            out_f[q] = best_f
    return out_t, out_f


def _build_bvh(tri_verts: np.ndarray):
    n_tris = len(tri_verts)
    tri_min = tri_verts.min(axis=1)
    tri_max = tri_verts.max(axis=1)
    centroids = tri_verts.mean(axis=1)
    order = np.arange(n_tris, dtype=np.int64)

    node_min, node_max = [], []
    node_left, node_right, node_start, node_count = [], [], [], []

    def new_node():
        node_min.append(np.zeros(3))
        node_max.append(np.zeros(3))
        node_left.append(-1)
        node_right.append(-1)
        node_start.append(-1)
        node_count.append(0)
        return len(node_min) - 1

    # iterative build: (node_id, lo, hi) ranges into `order`
    root = new_node()
    todo = [(root, 0, n_tris)]
    while todo:
        node, lo, hi = todo.pop()
        ids = order[lo:hi]
        node_min[node] = tri_min[ids].min(axis=0)
        node_max[node] = tri_max[ids].max(axis=0)
        if hi - lo <= _LEAF_SIZE:
            node_start[node] = lo
            node_count[node] = hi - lo
            continue
        cent = centroids[ids]
        axis = int(np.argmax(cent.max(axis=0) - cent.min(axis=0)))
        mid = (hi - lo) // 2
        part = np.argpartition(cent[:, axis], mid)
        order[lo:hi] = ids[part]
        left = new_node()
        right = new_node()
        node_left[node] = left
        node_right[node] = right
        todo.append((left, lo, lo + mid))
        todo.append((right, lo + mid, hi))

    return (
        np.asarray(node_min),
        np.asarray(node_max),
        np.asarray(node_left, dtype=np.int64),
        np.asarray(node_right, dtype=np.int64),
        np.asarray(node_start, dtype=np.int64),
        np.asarray(node_count, dtype=np.int64),
        order,
    )


def _pseudo_normals(vertices: np.ndarray, faces: np.ndarray):
    """Face normals, angle-weighted vertex normals, and per-face-edge normals.

    edge_normals[f, e] is the normal of the edge opposite corner e of face f
    (mean of the two adjacent face normals; the face normal on boundaries).
    """
    tri = vertices[faces]
    raw = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    face_n = raw / np.linalg.norm(raw, axis=1, keepdims=True)

    vert_n = np.zeros_like(vertices)
    for c in range(3):
        a = tri[:, c]
        b = tri[:, (c + 1) % 3]
        d = tri[:, (c + 2) % 3]
        e1 = b - a
        e2 = d - a
        cosang = np.einsum("ij,ij->i", e1, e2) / (
            np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
        )
        ang = np.arccos(np.clip(cosang, -1.0, 1.0))
        np.add.at(vert_n, faces[:, c], ang[:, None] * face_n)
    norms = np.linalg.norm(vert_n, axis=1, keepdims=True)
    vert_n = np.divide(vert_n, norms, out=np.zeros_like(vert_n), where=norms > 0)

    edge_owner: dict[tuple[int, int], list[int]] = {}
    for f, (i, j, k) in enumerate(faces):
        for a, b in ((j, k), (k, i), (i, j)):
            edge_owner.setdefault((min(a, b), max(a, b)), []).append(f)
    edge_n = np.empty((len(faces), 3, 3))
    for f, (i, j, k) in enumerate(faces):
        for e, (a, b) in enumerate(((j, k), (k, i), (i, j))):
            owners = edge_owner[(min(a, b), max(a, b))]
            n = face_n[owners].sum(axis=0)
            nl = np.linalg.norm(n)
            edge_n[f, e] = n / nl if nl > 0 else face_n[f]
    return face_n, vert_n, edge_n


@njit(cache=True)
def _feature_normals(faces, bary, face_ids, face_n, vert_n, edge_n):
    n = len(face_ids)
    out = np.empty((n, 3))
    for q in range(n):
        f = face_ids[q]
        b = bary[q]
        zero0 = b[0] < _FEATURE_EPS
        zero1 = b[1] < _FEATURE_EPS
        zero2 = b[2] < _FEATURE_EPS
        nz = int(zero0) + int(zero1) + int(zero2)
        if nz == 0:
            out[q] = face_n[f]
        elif nz == 1:
            if zero0:
                out[q] = edge_n[f, 0]
            elif zero1:
                out[q] = edge_n[f, 1]
            else:
                out[q] = edge_n[f, 2]
        else:
            if not zero0:
                out[q] = vert_n[faces[f, 0]]
            elif not zero1:
                out[q] = vert_n[faces[f, 1]]
            else:
                out[q] = vert_n[faces[f, 2]]
    return out


class MeshQueries:
    """Closest-point and ray queries against one triangle mesh."""

    def __init__(self, vertices: np.ndarray, faces: np.ndarray):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        self.tri_verts = np.ascontiguousarray(self.vertices[self.faces])
        self._bvh = _build_bvh(self.tri_verts)
        self.face_normals, self.vertex_normals, self.edge_normals = _pseudo_normals(
            self.vertices, self.faces
        )
        scale = float(np.linalg.norm(self.vertices.max(0) - self.vertices.min(0)))
        self._ray_tmin = 1e-12 * max(scale, 1.0)

    def closest_points(self, points: np.ndarray):
        """-> (distances, face ids, closest points, barycentric coords)."""
        pts = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        return _closest_batch(pts, self.tri_verts, *self._bvh)

    def closest_points_with_normals(self, points: np.ndarray):
        """-> (distances, face ids, closest points, feature pseudo-normals)."""
        d, f, cp, bary = self.closest_points(points)
        n = _feature_normals(
            self.faces, bary, f, self.face_normals, self.vertex_normals, self.edge_normals
        )
        return d, f, cp, n

    def raycast(self, origins: np.ndarray, directions: np.ndarray, t_min: float | None = None):
        """Nearest hit along each ray: -> (t, face ids); t = -1 on miss."""
        orig = np.ascontiguousarray(np.atleast_2d(origins), dtype=np.float64)
        dirs = np.ascontiguousarray(np.atleast_2d(directions), dtype=np.float64)
        return _ray_batch(
            orig, dirs, self.tri_verts, *self._bvh,
            self._ray_tmin if t_min is None else t_min,
        )

    def signed_offsets(self, points: np.ndarray):
        """Per point: <p - q, n> with q, n the closest surface point and normal.

        Negative values mean the point is inside a closed mesh.
        """
        _, _, cp, n = self.closest_points_with_normals(points)
        pts = np.atleast_2d(points)
        return np.einsum("ij,ij->i", pts - cp, n)
