"""Body model: triangulated surface, skeleton bones, skin weights, valid regions.

Source/target pairs must share mesh topology and bone lists; only vertex and
bone placements differ. Per-bone valid regions are the faces whose vertices
carry a skinning weight above a clip threshold; they gate which bones may
anchor a hair particle.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

DEFAULT_WEIGHT_CLIP = 0.3
_MIN_FACE_AREA = 1e-12


@dataclass(frozen=True)
class Bone:
    name: str
    head: np.ndarray  # (3,)
    tail: np.ndarray  # (3,)

    @property
    def direction(self) -> np.ndarray:
        d = self.tail - self.head
        return d / np.linalg.norm(d)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.tail - self.head))

    def point_at(self, t: float) -> np.ndarray:
        return self.head + t * (self.tail - self.head)


@dataclass(frozen=True)
class SurfacePoint:
    """Barycentric reference into a mesh face."""

    face: int
    bary: np.ndarray  # (3,) nonnegative, sums to 1

    def __post_init__(self):
        bary = np.asarray(self.bary, dtype=np.float64)
        if bary.shape != (3,):
            raise ValueError("bary must have 3 entries")
        if np.any(bary < -1e-9) or np.any(bary > 1 + 1e-9):
            raise ValueError(f"barycentric entries outside [0,1]: {bary}")
        if abs(bary.sum() - 1.0) > 1e-9:
            raise ValueError(f"barycentric sum {bary.sum()} != 1")
        object.__setattr__(self, "bary", bary)

    def position(self, vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
        return self.bary @ vertices[faces[self.face]]


@dataclass
class BodyModel:
    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray  # (F, 3) int64
    bones: list[Bone]
    skin_weights: sparse.csr_matrix  # (V, B), rows sum to 1
    valid_regions: list[np.ndarray] = field(default_factory=list)  # per bone, face indices
    _queries: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValueError("faces must be (F, 3) triangles")
        if self.faces.size and self.faces.max() >= len(self.vertices):
            raise ValueError("face index out of range")
        areas = self.face_areas()
        if np.any(areas <= _MIN_FACE_AREA):
            bad = int(np.argmin(areas))
            raise ValueError(f"degenerate triangle {bad} (area {areas[bad]:.3e})")
        for b in self.bones:
            if b.length <= 0:
                raise ValueError(f"bone {b.name!r} has zero length")
        names = [b.name for b in self.bones]
        if len(set(names)) != len(names):
            raise ValueError("bone names must be unique")
        rows = np.asarray(self.skin_weights.sum(axis=1)).ravel()
        if self.skin_weights.shape[0] != len(self.vertices):
            raise ValueError("skin weight rows must match vertex count")
        if np.any(np.abs(rows - 1.0) > 1e-6):
            raise ValueError("skin weights must sum to 1 per vertex")
        if not self.valid_regions:
            self.valid_regions = compute_valid_regions(self.faces, self.skin_weights)

    def face_areas(self) -> np.ndarray:
        tri = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(
            np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1
        )

    def face_valid_mask(self) -> np.ndarray:
        """(B, F) bool: face f is in bone b's valid region."""
        mask = np.zeros((len(self.bones), len(self.faces)), dtype=bool)
        for b, region in enumerate(self.valid_regions):
            mask[b, region] = True
        return mask

    @property
    def queries(self):
        """Lazily built BVH-backed closest-point / ray query accelerator."""
        if self._queries is None:
            from .geometry import MeshQueries

            self._queries = MeshQueries(self.vertices, self.faces)
        return self._queries

    def surface_point_position(self, sp: SurfacePoint) -> np.ndarray:
        return sp.position(self.vertices, self.faces)

    def bounding_box_diagonal(self) -> float:
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))


def compute_valid_regions(
    faces: np.ndarray, skin_weights: sparse.csr_matrix, clip: float = DEFAULT_WEIGHT_CLIP
) -> list[np.ndarray]:
    """Faces with at least one vertex whose weight for the bone exceeds `clip`."""
    strong = skin_weights > clip  # (V, B) sparse bool
    strong = np.asarray(strong.todense())
    regions = []
    for b in range(skin_weights.shape[1]):
        face_has = strong[faces, b].any(axis=1)
        regions.append(np.flatnonzero(face_has).astype(np.int64))
    return regions


def load_mesh_obj(path) -> tuple[np.ndarray, np.ndarray]:
    """OBJ subset: `v` and triangulated `f` lines, 1-based indices."""
    verts, faces = [], []
    with open(path, "r") as f:
        for ln, line in enumerate(f, start=1):
            t = line.split("#", 1)[0].split()
            if not t:
                continue
            if t[0] == "v":
                if len(t) < 4:
                    raise ValueError(f"{path}:{ln}: vertex needs 3 coordinates")
                verts.append([float(x) for x in t[1:4]])
            elif t[0] == "f":
                if len(t) != 4:
                    raise ValueError(f"{path}:{ln}: only triangle faces are supported")
                idx = [int(tok.split("/")[0]) for tok in t[1:4]]
                if any(i < 1 for i in idx):
                    raise ValueError(f"{path}:{ln}: indices must be 1-based positive")
                faces.append([i - 1 for i in idx])
            # other line types (vn, vt, o, g, s, usemtl...) are ignored
    return np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int64)


def load_skeleton_json(path, n_vertices: int) -> tuple[list[Bone], sparse.csr_matrix]:
    """One JSON document holding the bone list and per-vertex weight maps."""
    with open(path, "r") as f:
        doc = json.load(f)
    bones = [
        Bone(b["name"], np.asarray(b["head"], dtype=np.float64), np.asarray(b["tail"], dtype=np.float64))
        for b in doc["bones"]
    ]
    rows = doc["weights"]
    if len(rows) != n_vertices:
        raise ValueError(f"weights has {len(rows)} rows, mesh has {n_vertices} vertices")
    mat = sparse.lil_matrix((n_vertices, len(bones)), dtype=np.float64)
    renorm_count = 0
    for v, row in enumerate(rows):
        total = 0.0
        for key, w in row.items():
            b = int(key)
            if not 0 <= b < len(bones):
                raise ValueError(f"vertex {v}: bone index {b} out of range")
            if w < 0:
                raise ValueError(f"vertex {v}: negative weight")
            mat[v, b] = w
            total += w
        if total <= 0:
            raise ValueError(f"vertex {v}: weight row sums to {total}, cannot normalize")
        if abs(total - 1.0) > 1e-6:
            renorm_count += 1
            for key in row:
                mat[v, int(key)] /= total
    if renorm_count:
        warnings.warn(
            f"renormalized skin weights on {renorm_count} vertices (sums deviated from 1)",
            stacklevel=2,
        )
    return bones, mat.tocsr()


def load_body(mesh_path, skeleton_path, weight_clip: float = DEFAULT_WEIGHT_CLIP) -> BodyModel:
    vertices, faces = load_mesh_obj(mesh_path)
    bones, weights = load_skeleton_json(skeleton_path, len(vertices))
    regions = compute_valid_regions(faces, weights, clip=weight_clip)
    return BodyModel(vertices, faces, bones, weights, regions)


@dataclass(frozen=True)
class PairReport:
    ok: bool
    mismatch: str | None = None

    def __bool__(self) -> bool:
        return self.ok


def validate_pair(source: BodyModel, target: BodyModel) -> PairReport:
    """Topology-only check: identical face arrays and bone name lists."""
    if len(source.vertices) != len(target.vertices):
        return PairReport(
            False, f"vertex counts differ: {len(source.vertices)} vs {len(target.vertices)}"
        )
    if source.faces.shape != target.faces.shape:
        return PairReport(
            False, f"face counts differ: {len(source.faces)} vs {len(target.faces)}"
        )
    diff = np.flatnonzero(np.any(source.faces != target.faces, axis=1))
    if diff.size:
        f = int(diff[0])
        return PairReport(
            False,
            f"face {f} differs: {source.faces[f].tolist()} vs {target.faces[f].tolist()}",
        )
    src_names = [b.name for b in source.bones]
    tgt_names = [b.name for b in target.bones]
    if src_names != tgt_names:
        for i, (a, b) in enumerate(zip(src_names, tgt_names)):
            if a != b:
                return PairReport(False, f"bone {i} differs: {a!r} vs {b!r}")
        return PairReport(False, f"bone counts differ: {len(src_names)} vs {len(tgt_names)}")
    return PairReport(True)
