"""Deterministic synthetic characters and hairstyles for tests and demos.

Bodies are closed UV-sphere "heads" (optionally anisotropically scaled into
ellipsoids) with a small vertical bone chain and distance-based skinning
weights. Hairstyles grow from the upper cap of the head, blend from the
outward normal toward gravity, and keep a configurable clearance from the
surface. Same `rings`/`segments` always yield the same topology, so any two
bodies built here form a valid source/target pair.
"""

from __future__ import annotations

import json

import numpy as np
from scipy import sparse

from .body import BodyModel, Bone, compute_valid_regions
from .hair import Hairstyle

UP = np.array([0.0, 1.0, 0.0])
FRONT = np.array([0.0, 0.0, 1.0])


def uv_sphere(radius=0.1, center=(0.0, 0.0, 0.0), rings=18, segments=28,
              scale=(1.0, 1.0, 1.0)):
    """Closed triangulated UV sphere; returns (vertices, faces)."""
    center = np.asarray(center, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    verts = [np.array([0.0, radius, 0.0])]
    for i in range(1, rings):
        theta = np.pi * i / rings
        y = radius * np.cos(theta)
        r = radius * np.sin(theta)
        for j in range(segments):
            phi = 2 * np.pi * j / segments
            verts.append(np.array([r * np.sin(phi), y, r * np.cos(phi)]))
    verts.append(np.array([0.0, -radius, 0.0]))
    verts = np.asarray(verts) * scale + center

    faces = []
    def ring_vertex(i, j):
        return 1 + (i - 1) * segments + (j % segments)

    for j in range(segments):  # top fan
        faces.append([0, ring_vertex(1, j), ring_vertex(1, j + 1)])
    for i in range(1, rings - 1):
        for j in range(segments):
            a = ring_vertex(i, j)
            b = ring_vertex(i, j + 1)
            c = ring_vertex(i + 1, j)
            d = ring_vertex(i + 1, j + 1)
            faces.append([a, c, b])
            faces.append([b, c, d])
    last = len(verts) - 1
    for j in range(segments):  # bottom fan
        faces.append([last, ring_vertex(rings - 1, j + 1), ring_vertex(rings - 1, j)])
    return verts, np.asarray(faces, dtype=np.int64)


def _segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = b - a
    t = np.clip((points - a) @ d / (d @ d), 0.0, 1.0)
    return np.linalg.norm(points - (a + t[:, None] * d), axis=1)


def skin_weights_by_distance(vertices: np.ndarray, bones: list[Bone],
                             falloff: float = 0.08) -> sparse.csr_matrix:
    scores = np.column_stack(
        [np.exp(-(_segment_distance(vertices, b.head, b.tail) / falloff) ** 2) for b in bones]
    )
    scores /= scores.sum(axis=1, keepdims=True)
    scores[scores < 1e-4] = 0.0
    scores /= scores.sum(axis=1, keepdims=True)
    return sparse.csr_matrix(scores)


def synthetic_body(radius=0.1, center=(0.0, 0.0, 0.0), scale=(1.0, 1.0, 1.0),
                   rings=18, segments=28, weights: sparse.csr_matrix | None = None,
                   weight_clip: float = 0.3) -> BodyModel:
    """Head-sphere body with a head/neck bone pair inside and below it."""
    center = np.asarray(center, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    vertices, faces = uv_sphere(radius, center, rings, segments, scale)
    head = Bone(
        "head",
        center + scale * np.array([0.0, -0.5 * radius, 0.0]),
        center + scale * np.array([0.0, 0.5 * radius, 0.0]),
    )
    neck = Bone(
        "neck",
        center + scale * np.array([0.0, -2.2 * radius, 0.0]),
        center + scale * np.array([0.0, -1.0 * radius, 0.0]),
    )
    bones = [head, neck]
    if weights is None:
        weights = skin_weights_by_distance(vertices, bones, falloff=0.8 * radius)
    regions = compute_valid_regions(faces, weights, clip=weight_clip)
    return BodyModel(vertices, faces, bones, weights, regions)


def body_pair(radius=0.1, target_scale=(1.2, 1.1, 0.95), target_shift=(0.0, 0.01, 0.0),
              rings=18, segments=28) -> tuple[BodyModel, BodyModel]:
    """Source sphere head and an ellipsoidal target with identical topology."""
    src = synthetic_body(radius, rings=rings, segments=segments)
    tgt = synthetic_body(
        radius, center=target_shift, scale=target_scale, rings=rings, segments=segments,
        weights=src.skin_weights,
    )
    return src, tgt


def grow_hairstyle(body: BodyModel, n_strands=50, n_particles=8, seed=0,
                   segment_length=None, clearance=5e-3, cap_angle_deg=65.0,
                   curliness=0.25) -> Hairstyle:
    """Strands rooted on the upper head cap, bending from normal toward gravity.

    Every non-root particle keeps at least `clearance` distance from the body,
    so freshly grown styles are feasible for the penetration constraints.
    """
    rng = np.random.default_rng(seed)
    mq = body.queries
    center = 0.5 * (body.vertices.max(axis=0) + body.vertices.min(axis=0))
    radius = float(np.linalg.norm(body.vertices - center, axis=1).mean())
    if segment_length is None:
        segment_length = 0.25 * radius

    # faces whose centroid sits inside the upper cap
    centroids = body.vertices[body.faces].mean(axis=1)
    rel = centroids - center
    polar = np.arccos(np.clip((rel @ UP) / np.linalg.norm(rel, axis=1), -1, 1))
    cap_faces = np.flatnonzero(polar < np.deg2rad(cap_angle_deg))
    areas = body.face_areas()[cap_faces]
    chosen = rng.choice(cap_faces, size=n_strands, p=areas / areas.sum())

    positions = np.empty((n_strands * n_particles, 3))
    offsets = np.arange(n_strands + 1, dtype=np.int64) * n_particles
    down = -UP
    for s in range(n_strands):
        f = chosen[s]
        bary = rng.dirichlet((3.0, 3.0, 3.0))
        tri = body.vertices[body.faces[f]]
        root = bary @ tri
        normal = mq.face_normals[f]
        side = np.cross(normal, UP)
        nrm = np.linalg.norm(side)
        side = side / nrm if nrm > 1e-12 else FRONT
        phase = rng.uniform(0, 2 * np.pi)
        p = root.copy()
        pts = [root.copy()]
        direction = normal.copy()
        for j in range(1, n_particles):
            blend = min(1.0, j / max(2, n_particles - 3))
            direction = (1 - blend) * normal + blend * down
            direction = direction / np.linalg.norm(direction)
            wob = curliness * np.sin(phase + 1.7 * j) * side
            step = direction + wob
            step = step / np.linalg.norm(step)
            p = p + segment_length * step
            pts.append(p.copy())
        positions[s * n_particles:(s + 1) * n_particles] = np.asarray(pts)

    # clamp clearance for non-root particles (bodies here are convex)
    hair = Hairstyle(positions, offsets)
    pos = hair.positions.copy()
    non_root = ~hair.root_mask
    for _ in range(3):
        d, _, cp, n = mq.closest_points_with_normals(pos[non_root])
        offs = np.einsum("ij,ij->i", pos[non_root] - cp, n)
        short = offs < clearance
        if not np.any(short):
            break
        fix = pos[non_root]
        fix[short] = cp[short] + clearance * 1.001 * n[short]
        pos[non_root] = fix
    return Hairstyle(pos, offsets)


def write_body_files(body: BodyModel, directory, stem: str):
    """Write the OBJ mesh and skeleton/weights JSON; returns their paths."""
    mesh_path = f"{directory}/{stem}.obj"
    skel_path = f"{directory}/{stem}.skeleton.json"
    with open(mesh_path, "w") as f:
        for v in body.vertices:
            f.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for a, b, c in body.faces:
            f.write(f"f {a + 1} {b + 1} {c + 1}\n")
    weights = []
    w = body.skin_weights.tocoo()
    rows: list[dict] = [dict() for _ in range(body.skin_weights.shape[0])]
    for v, b, val in zip(w.row, w.col, w.data):
        rows[v][str(int(b))] = float(val)
    weights = rows
    doc = {
        "bones": [
            {"name": b.name, "head": b.head.tolist(), "tail": b.tail.tolist()}
            for b in body.bones
        ],
        "weights": weights,
    }
    with open(skel_path, "w") as f:
        json.dump(doc, f)
    return mesh_path, skel_path
