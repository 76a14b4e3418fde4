"""Small triangle-mesh topology helpers shared by the scalp/chart code."""

from __future__ import annotations

import numpy as np


def face_adjacency(faces: np.ndarray) -> np.ndarray:
    """(F, 3) neighbor face per edge; entry e is the face across the edge
    opposite corner e, or -1 on the boundary."""
    edge_map: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for f, (i, j, k) in enumerate(faces):
        for e, (a, b) in enumerate(((j, k), (k, i), (i, j))):
            edge_map.setdefault((min(a, b), max(a, b)), []).append((f, e))
    adj = np.full((len(faces), 3), -1, dtype=np.int64)
    for owners in edge_map.values():
        if len(owners) == 2:
            (f0, e0), (f1, e1) = owners
            adj[f0, e0] = f1
            adj[f1, e1] = f0
        elif len(owners) > 2:
            raise ValueError("non-manifold edge (more than two incident faces)")
    return adj


def boundary_edges(faces: np.ndarray) -> list[tuple[int, int]]:
    """Directed boundary edges (a, b), oriented as they appear in the faces."""
    count: dict[tuple[int, int], int] = {}
    directed: dict[tuple[int, int], tuple[int, int]] = {}
    for i, j, k in faces:
        for a, b in ((i, j), (j, k), (k, i)):
            key = (min(a, b), max(a, b))
            count[key] = count.get(key, 0) + 1
            directed[key] = (a, b)
    return [directed[k] for k, c in count.items() if c == 1]


def boundary_loops(faces: np.ndarray) -> list[np.ndarray]:
    """Closed boundary loops as ordered vertex arrays (first != last)."""
    edges = boundary_edges(faces)
    nxt = {}
    for a, b in edges:
        if a in nxt:
            raise ValueError("boundary is not a collection of simple loops")
        nxt[a] = b
    loops = []
    remaining = set(nxt)
    while remaining:
        start = min(remaining)
        loop = [start]
        remaining.discard(start)
        cur = nxt[start]
        while cur != start:
            loop.append(cur)
            remaining.discard(cur)
            cur = nxt[cur]
        loops.append(np.asarray(loop, dtype=np.int64))
    return loops


def face_components(faces: np.ndarray, subset: np.ndarray) -> list[np.ndarray]:
    """Edge-connected components of `subset` (face indices), largest first."""
    adj = face_adjacency(faces)
    in_subset = np.zeros(len(faces), dtype=bool)
    in_subset[subset] = True
    seen = np.zeros(len(faces), dtype=bool)
    comps = []
    for f in subset:
        if seen[f]:
            continue
        stack = [int(f)]
        seen[f] = True
        comp = []
        while stack:
            cur = stack.pop()
            comp.append(cur)
            for nb in adj[cur]:
                if nb >= 0 and in_subset[nb] and not seen[nb]:
                    seen[nb] = True
                    stack.append(int(nb))
        comps.append(np.asarray(sorted(comp), dtype=np.int64))
    comps.sort(key=len, reverse=True)
    return comps


def face_path(faces: np.ndarray, sources: np.ndarray, targets: np.ndarray) -> list[int]:
    """Shortest face-adjacency path from any source face to any target face
    (BFS); returns the in-between faces, excluding endpoints."""
    adj = face_adjacency(faces)
    target_set = set(int(t) for t in targets)
    prev = {int(s): -1 for s in sources}
    frontier = [int(s) for s in sources]
    while frontier:
        nxt = []
        for f in frontier:
            for nb in adj[f]:
                nb = int(nb)
                if nb < 0 or nb in prev:
                    continue
                prev[nb] = f
                if nb in target_set:
                    path = []
                    cur = prev[nb]
                    while cur != -1 and cur not in target_set and prev[cur] != -1:
                        path.append(cur)
                        cur = prev[cur]
                    if cur != -1 and prev[cur] == -1 and cur not in target_set:
                        path.append(cur)
                    return path
                nxt.append(nb)
        frontier = nxt
    raise ValueError("no connecting face path found")


def cotangent_weights(vertices: np.ndarray, faces: np.ndarray) -> dict[tuple[int, int], float]:
    """Per-undirected-edge cotangent weights (0.5 * (cot alpha + cot beta))."""
    weights: dict[tuple[int, int], float] = {}
    tri = vertices[faces]
    for c in range(3):
        a = faces[:, c]
        b = faces[:, (c + 1) % 3]
        o = tri[:, (c + 2) % 3]
        ea = tri[:, c] - o
        eb = tri[:, (c + 1) % 3] - o
        cross = np.linalg.norm(np.cross(ea, eb), axis=1)
        cot = np.einsum("ij,ij->i", ea, eb) / np.maximum(cross, 1e-300)
        for i in range(len(faces)):
            key = (min(int(a[i]), int(b[i])), max(int(a[i]), int(b[i])))
            weights[key] = weights.get(key, 0.0) + 0.5 * float(cot[i])
    return weights


def uniform_weights(faces: np.ndarray) -> dict[tuple[int, int], float]:
    weights: dict[tuple[int, int], float] = {}
    for i, j, k in faces:
        for a, b in ((i, j), (j, k), (k, i)):
            key = (min(int(a), int(b)), max(int(a), int(b)))
            weights[key] = 1.0
    return weights
