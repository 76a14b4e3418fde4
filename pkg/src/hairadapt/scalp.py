"""Scalp extraction, hairline segmentation, and edit-curve correspondence.

The scalp is the set of head-patch triangles hosting at least one hair root,
kept edge-connected (smaller islands are bridged through the shortest face
path, enclosed holes are absorbed). Its boundary is the hairline, cut at two
ear markers into a fixed back segment and an editable front segment. A user
edit supplies an on-surface curve; each front-hairline vertex maps to the
curve point at the same normalized arc length between its bounding turning
points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .body import BodyModel
from .meshutil import boundary_loops, face_components, face_path
from .synthetic import FRONT

_TURNING_ANGLE_DEG = 30.0


@dataclass
class HeadPatch:
    """Compact sub-mesh of a body used as the membrane's host surface."""

    body: BodyModel
    parent_faces: np.ndarray  # (F,) face ids in the body mesh
    vertices: np.ndarray  # (V, 3) compact
    faces: np.ndarray  # (F, 3) compact indices
    vertex_parent: np.ndarray  # compact vertex -> body vertex
    _queries: object = field(default=None, repr=False)

    @property
    def queries(self):
        if self._queries is None:
            from .geometry import MeshQueries

            self._queries = MeshQueries(self.vertices, self.faces)
        return self._queries

    def parent_face_index(self) -> dict[int, int]:
        return {int(p): i for i, p in enumerate(self.parent_faces)}

    def bounding_box_diagonal(self) -> float:
        return float(np.linalg.norm(self.vertices.max(0) - self.vertices.min(0)))


def build_head_patch(body: BodyModel, parent_faces: np.ndarray) -> HeadPatch:
    parent_faces = np.asarray(sorted(set(int(f) for f in parent_faces)), dtype=np.int64)
    used = np.unique(body.faces[parent_faces])
    remap = -np.ones(len(body.vertices), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return HeadPatch(
        body=body,
        parent_faces=parent_faces,
        vertices=body.vertices[used].copy(),
        faces=remap[body.faces[parent_faces]],
        vertex_parent=used,
    )


def head_region_faces(body: BodyModel, bone_name: str = "head") -> np.ndarray:
    """Faces whose three vertices are all dominated by the named bone; the
    usual way to carve a disk-topology head patch out of a closed body."""
    names = [b.name for b in body.bones]
    if bone_name not in names:
        raise ValueError(f"no bone named {bone_name!r}")
    b = names.index(bone_name)
    dense = np.asarray(body.skin_weights.todense())
    dominant = np.argmax(dense, axis=1) == b
    keep = dominant[body.faces].all(axis=1)
    faces = np.flatnonzero(keep)
    comps = face_components(body.faces[faces], np.arange(len(faces)))
    return faces[comps[0]]


@dataclass
class ScalpPatch:
    head: HeadPatch
    head_face_ids: np.ndarray  # (T,) indices into head.faces
    faces: np.ndarray  # (T, 3) scalp-vertex indices
    vertex_head: np.ndarray  # scalp vertex -> head-patch vertex
    X: np.ndarray  # (Vs, 3) undeformed positions
    areas: np.ndarray  # (T,) rest areas
    boundary: np.ndarray  # ordered closed hairline loop (scalp vertex ids)
    root_faces: np.ndarray  # per root: scalp face index
    root_bary: np.ndarray  # per root: (3,)

    @property
    def n_vertices(self) -> int:
        return len(self.X)

    def boundary_mask(self) -> np.ndarray:
        m = np.zeros(self.n_vertices, dtype=bool)
        m[self.boundary] = True
        return m

    def total_area(self) -> float:
        return float(self.areas.sum())


def extract_scalp(head: HeadPatch, root_parent_faces: np.ndarray,
                  root_bary: np.ndarray) -> ScalpPatch:
    """Triangles hosting at least one root, made edge-connected and hole-free."""
    if len(root_parent_faces) == 0:
        raise ValueError("cannot extract a scalp without hair roots")
    lookup = head.parent_face_index()
    try:
        root_head_faces = np.asarray(
            [lookup[int(f)] for f in root_parent_faces], dtype=np.int64
        )
    except KeyError as exc:
        raise ValueError(f"hair root lies outside the head patch (face {exc})") from exc

    scalp_faces = np.unique(root_head_faces)
    comps = face_components(head.faces, scalp_faces)
    merged = set(int(f) for f in comps[0])
    for comp in comps[1:]:
        bridge = face_path(head.faces, comp, np.asarray(sorted(merged)))
        merged.update(int(f) for f in bridge)
        merged.update(int(f) for f in comp)
    # absorb complement islands that do not reach the head-patch boundary
    complement = np.setdiff1d(np.arange(len(head.faces)), np.asarray(sorted(merged)))
    if complement.size:
        outer_edge_faces = _patch_boundary_faces(head.faces)
        for comp in face_components(head.faces, complement):
            if not np.any(np.isin(comp, outer_edge_faces)):
                merged.update(int(f) for f in comp)
    head_face_ids = np.asarray(sorted(merged), dtype=np.int64)

    sub = head.faces[head_face_ids]
    used = np.unique(sub)
    remap = -np.ones(len(head.vertices), dtype=np.int64)
    remap[used] = np.arange(len(used))
    faces = remap[sub]
    X = head.vertices[used].copy()
    tri = X[faces]
    areas = 0.5 * np.linalg.norm(
        np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1
    )
    loops = boundary_loops(faces)
    if len(loops) != 1:
        raise ValueError(f"scalp boundary has {len(loops)} loops, expected one")

    face_of = {int(h): i for i, h in enumerate(head_face_ids)}
    root_faces = np.asarray([face_of[int(lookup[int(f)])] for f in root_parent_faces])
    return ScalpPatch(
        head=head,
        head_face_ids=head_face_ids,
        faces=faces,
        vertex_head=used,
        X=X,
        areas=areas,
        boundary=loops[0],
        root_faces=root_faces,
        root_bary=np.asarray(root_bary, dtype=np.float64),
    )


def _patch_boundary_faces(faces: np.ndarray) -> np.ndarray:
    from .meshutil import boundary_edges

    on_boundary = set()
    for a, b in boundary_edges(faces):
        on_boundary.add((min(a, b), max(a, b)))
    out = []
    for f, (i, j, k) in enumerate(faces):
        for a, b in ((i, j), (j, k), (k, i)):
            if (min(a, b), max(a, b)) in on_boundary:
                out.append(f)
                break
    return np.asarray(out, dtype=np.int64)


def split_hairline(patch: ScalpPatch, ear_markers: tuple[int, int],
                   front_axis: np.ndarray = FRONT) -> tuple[np.ndarray, np.ndarray]:
    """Cut the hairline loop at the two markers; the arc holding the
    forehead-most vertex (largest projection on `front_axis`) is the front.
    Both arcs keep the markers as endpoints."""
    loop = list(int(v) for v in patch.boundary)
    m0, m1 = int(ear_markers[0]), int(ear_markers[1])
    if m0 not in loop or m1 not in loop:
        raise ValueError("ear markers must be hairline vertices")
    i0, i1 = loop.index(m0), loop.index(m1)
    if i0 > i1:
        i0, i1 = i1, i0
    arc_a = loop[i0:i1 + 1]
    arc_b = loop[i1:] + loop[:i0 + 1]
    if len(arc_a) < 3 or len(arc_b) < 3:
        raise ValueError("ear markers are adjacent: degenerate hairline segment")

    proj = patch.X @ np.asarray(front_axis, dtype=np.float64)
    candidates = [v for v in loop if v not in (m0, m1)]
    forehead = max(candidates, key=lambda v: proj[v])
    front, back = (arc_a, arc_b) if forehead in arc_a else (arc_b, arc_a)
    return np.asarray(front, dtype=np.int64), np.asarray(back, dtype=np.int64)


def detect_turning_points(patch: ScalpPatch, segment: np.ndarray,
                          angle_deg: float = _TURNING_ANGLE_DEG) -> np.ndarray:
    """Interior segment vertices where the polyline turns by more than the
    threshold; user-confirmable defaults for correspondence anchors."""
    pts = patch.X[segment]
    out = []
    for i in range(1, len(segment) - 1):
        a = pts[i] - pts[i - 1]
        b = pts[i + 1] - pts[i]
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na < 1e-12 or nb < 1e-12:
            continue
        cosang = np.clip(a @ b / (na * nb), -1.0, 1.0)
        if np.degrees(np.arccos(cosang)) > angle_deg:
            out.append(int(segment[i]))
    return np.asarray(out, dtype=np.int64)


@dataclass
class HairlineEdit:
    """User curve on the head surface plus correspondence anchors.

    curve_faces index the *body* mesh; curve params live in [0, 1] by
    normalized arc length. Turning-point pairs (hairline vertex, curve param)
    must be monotone along the curve.
    """

    curve_faces: np.ndarray  # (C,) body face ids
    curve_bary: np.ndarray  # (C, 3)
    turning_points: list[tuple[int, float]]
    ear_markers: tuple[int, int]

    def curve_positions(self, body: BodyModel) -> np.ndarray:
        tri = body.vertices[body.faces[self.curve_faces]]
        return np.einsum("ij,ijk->ik", self.curve_bary, tri)

    @classmethod
    def from_json(cls, doc: dict | str) -> "HairlineEdit":
        if isinstance(doc, str):
            doc = json.loads(doc)
        curve = doc["curve"]
        faces = np.asarray([c["face"] for c in curve], dtype=np.int64)
        bary2 = np.asarray([c["bary"] for c in curve], dtype=np.float64)
        if bary2.shape[1] == 2:
            bary = np.column_stack([1.0 - bary2.sum(axis=1), bary2])
        else:
            bary = bary2
        tps = [
            (int(t["hairlineVertex"]), float(t["curveParam"]))
            for t in doc.get("turningPoints", [])
        ]
        ear = tuple(int(v) for v in doc["earMarkers"])
        return cls(faces, bary, tps, (ear[0], ear[1]))

    def to_json(self) -> dict:
        return {
            "curve": [
                {"face": int(f), "bary": [float(b[1]), float(b[2])]}
                for f, b in zip(self.curve_faces, self.curve_bary)
            ],
            "turningPoints": [
                {"hairlineVertex": int(v), "curveParam": float(t)}
                for v, t in self.turning_points
            ],
            "earMarkers": [int(self.ear_markers[0]), int(self.ear_markers[1])],
        }


def _normalized_arc_lengths(points: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if cum[-1] <= 0:
        raise ValueError("zero-length polyline")
    return cum / cum[-1]


def build_correspondence(patch: ScalpPatch, front: np.ndarray, back: np.ndarray,
                         edit: HairlineEdit, curve_points: np.ndarray,
                         ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense hairline-to-curve map by normalized arc length.

    Returns (dirichlet vertex ids, matched curve parameter per front vertex,
    curve parameters padded with -1 for back vertices). Back vertices map to
    themselves; interpolation of the actual target points happens in chart
    space (see the membrane solver).
    """
    front_t = _normalized_arc_lengths(patch.X[front])
    anchors = [(0, 0.0), (len(front) - 1, 1.0)]
    for v, param in edit.turning_points:
        where = np.flatnonzero(front == v)
        if where.size == 0:
            raise ValueError(f"turning point vertex {v} is not on the front hairline")
        anchors.append((int(where[0]), float(param)))
    anchors = sorted(set(anchors))
    idxs = [a[0] for a in anchors]
    params = [a[1] for a in anchors]
    if idxs != sorted(idxs) or params != sorted(params):
        raise ValueError("turning-point correspondence must be monotone")
    for (i0, t0), (i1, t1) in zip(anchors[:-1], anchors[1:]):
        if i1 == i0 or abs(front_t[i1] - front_t[i0]) < 1e-12 or abs(t1 - t0) < 1e-12:
            raise ValueError("zero-length hairline or curve segment between turning points")

    curve_param = np.empty(len(front))
    for n, t in enumerate(front_t):
        seg_i = 0
        for s in range(len(anchors) - 1):
            if front_t[anchors[s][0]] <= t <= front_t[anchors[s + 1][0]]:
                seg_i = s
                break
        i0, p0 = anchors[seg_i]
        i1, p1 = anchors[seg_i + 1]
        local = (t - front_t[i0]) / (front_t[i1] - front_t[i0])
        curve_param[n] = p0 + local * (p1 - p0)

    dirichlet = np.concatenate([front, back[1:-1]])  # markers already in front
    padded = np.concatenate([curve_param, np.full(len(back) - 2, -1.0)])
    return dirichlet, curve_param, padded


def evaluate_curve_at(params: np.ndarray, curve_values: np.ndarray,
                      curve_t: np.ndarray) -> np.ndarray:
    """Piecewise-linear evaluation of per-control-point values at normalized
    arc-length parameters."""
    out = np.empty((len(params), curve_values.shape[1]))
    for c in range(curve_values.shape[1]):
        out[:, c] = np.interp(params, curve_t, curve_values[:, c])
    return out
