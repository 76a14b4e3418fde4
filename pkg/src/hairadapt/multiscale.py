"""Two-level adaptation: a globally coupled solve over representative guide
strands, then independent per-strand solves for the remaining hair against
the fixed guides.

Guides are chosen by seeded k-medoids over a strand shape descriptor (root
position concatenated with uniformly resampled curve points), initialized by
farthest-point traversal. In the fine stage each non-guide strand becomes a
small dense QP: its cross-strand feature targets are constants computed from
the adapted guides, so the system matrix is block-diagonal by strand and
strands can be solved in any order or in parallel.
"""

from __future__ import annotations

import hashlib
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .body import BodyModel
from .config import AdaptationConfig
from .features import LaplacianFeatureSet, build_decoupled_features, build_knn_features
from .hair import Hairstyle
from .qp import ADMMSettings, SolverReport, iterate_adaptation, solve_box_qp

DESCRIPTOR_SAMPLES = 8


@dataclass
class HairHierarchy:
    guides: np.ndarray  # guide strand indices, ascending
    normals: np.ndarray  # remaining strand indices, ascending
    assignment: np.ndarray  # strand -> guide (index into guides)
    cluster_radius: float  # max root distance from a strand to its guide
    descriptor_hash: str = ""


@dataclass
class MultiscaleReport:
    coarse: SolverReport
    fine_outer_iterations: int = 0
    fine_failed_strands: list[int] = field(default_factory=list)
    guide_count: int = 0
    wall_time: float = 0.0
    coarse_time: float = 0.0
    fine_time: float = 0.0


def strand_descriptors(hair: Hairstyle, n_samples: int = DESCRIPTOR_SAMPLES) -> np.ndarray:
    """Root position plus n_samples arc-length-uniform curve samples, stacked
    into one vector per strand."""
    out = np.empty((hair.n_strands, 3 + 3 * n_samples))
    ts = np.linspace(0.0, 1.0, n_samples)
    for s in range(hair.n_strands):
        pts = hair.strand_positions(s)
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        total = cum[-1]
        if total <= 0:
            samples = np.repeat(pts[:1], n_samples, axis=0)
        else:
            samples = np.column_stack([
                np.interp(ts * total, cum, pts[:, c]) for c in range(3)
            ])
        out[s, :3] = pts[0]
        out[s, 3:] = samples.ravel()
    return out


def _farthest_point_init(desc: np.ndarray, k: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n = len(desc)
    first = int(rng.integers(n))
    chosen = [first]
    d = np.linalg.norm(desc - desc[first], axis=1)
    for _ in range(k - 1):
        nxt = int(np.argmax(d))
        chosen.append(nxt)
        d = np.minimum(d, np.linalg.norm(desc - desc[nxt], axis=1))
    return np.asarray(chosen)


def select_guides(source: Hairstyle, n_guides: int, seed: int = 0,
                  max_sweeps: int = 50) -> HairHierarchy:
    """Seeded k-medoids over the strand descriptors."""
    if n_guides < 1:
        raise ValueError("n_guides must be >= 1")
    n = source.n_strands
    if n_guides >= n:
        guides = np.arange(n, dtype=np.int64)
        return HairHierarchy(guides, np.empty(0, dtype=np.int64),
                             np.arange(n, dtype=np.int64), 0.0,
                             _descriptor_hash(strand_descriptors(source)))
    desc = strand_descriptors(source)
    medoids = _farthest_point_init(desc, n_guides, seed)
    for _ in range(max_sweeps):
        d2 = ((desc[:, None, :] - desc[medoids][None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(d2, axis=1)
        new_medoids = medoids.copy()
        for c in range(n_guides):
            members = np.flatnonzero(assign == c)
            if members.size == 0:
                continue
            inner = ((desc[members][:, None, :] - desc[members][None, :, :]) ** 2).sum(axis=2)
            cost = np.sqrt(inner).sum(axis=1)
            new_medoids[c] = members[int(np.argmin(cost))]
        if np.array_equal(np.sort(new_medoids), np.sort(medoids)):
            medoids = new_medoids
            break
        medoids = new_medoids
    d2 = ((desc[:, None, :] - desc[medoids][None, :, :]) ** 2).sum(axis=2)
    assign = np.argmin(d2, axis=1)

    guides = np.sort(medoids).astype(np.int64)
    remap = {int(m): i for i, m in enumerate(guides)}
    assignment = np.asarray([remap[int(medoids[a])] for a in assign], dtype=np.int64)
    roots = source.positions[source.root_indices]
    radius = float(np.max(np.linalg.norm(roots - roots[guides[assignment]], axis=1)))
    normals = np.setdiff1d(np.arange(n, dtype=np.int64), guides)
    return HairHierarchy(guides, normals, assignment, radius, _descriptor_hash(desc))


def _descriptor_hash(desc: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(desc).tobytes()).hexdigest()[:16]


def sub_hairstyle(hair: Hairstyle, strands: np.ndarray) -> tuple[Hairstyle, np.ndarray]:
    """Hairstyle restricted to the given strands, plus the particle index map
    back into the full hairstyle."""
    counts = hair.strand_counts[strands]
    offsets = np.concatenate([[0], np.cumsum(counts)])
    index_map = np.concatenate([
        np.arange(hair.offsets[s], hair.offsets[s + 1]) for s in strands
    ]) if len(strands) else np.empty(0, dtype=np.int64)
    return Hairstyle(hair.positions[index_map], offsets), index_map


def coarse_solve(source: Hairstyle, hierarchy: HairHierarchy, p_hat: np.ndarray,
                 target: BodyModel, config: AdaptationConfig,
                 guide_features: LaplacianFeatureSet | None = None,
                 root_targets_full: np.ndarray | None = None,
                 gamma_full: np.ndarray | None = None,
                 initial_positions: np.ndarray | None = None,
                 ) -> tuple[np.ndarray, np.ndarray, SolverReport]:
    """Full coupled adaptation restricted to guide strands. Returns adapted
    guide particle positions, their indices in the full hairstyle, and the
    solver report."""
    guide_hair, index_map = sub_hairstyle(source, hierarchy.guides)
    if guide_features is None:
        guide_features = build_knn_features(guide_hair, config.k)
    # root_targets_full is one target per strand, in strand order
    root_targets = (
        root_targets_full[hierarchy.guides] if root_targets_full is not None else None
    )
    gamma = gamma_full[index_map] if gamma_full is not None else None
    init = initial_positions[index_map] if initial_positions is not None else None
    positions, report = iterate_adaptation(
        p_hat[index_map], guide_hair, guide_features, target, config,
        root_targets=root_targets, gamma=gamma, initial_positions=init,
    )
    return positions, index_map, report


def _strand_shape_rows(p_local: np.ndarray, src_local: np.ndarray):
    """Dense per-segment direction rows with lengths frozen at p_local."""
    m = len(p_local) - 1
    src_vec = src_local[:-1] - src_local[1:]
    src_len = np.linalg.norm(src_vec, axis=1)
    directions = src_vec / src_len[:, None]
    cur = np.linalg.norm(p_local[:-1] - p_local[1:], axis=1)
    cur = np.where(cur < 1e-9, src_len, cur)
    S = np.zeros((m, len(p_local)))
    rows = np.arange(m)
    S[rows, rows] = 1.0 / cur
    S[rows, rows + 1] = -1.0 / cur
    return S, directions


def _solve_normal_strand(p_local, src_local, inter_targets, inter_scale,
                         body_targets, body_scale, pen_normals, pen_offsets,
                         config, settings) -> tuple[np.ndarray, float]:
    """One dense QP for a single strand with the root (particle 0) fixed.

    inter/body rows are identity rows with constant targets; penetration rows
    are one half-space per non-root particle. Returns new local positions and
    the max displacement."""
    n = len(p_local)
    nf = n - 1  # root eliminated
    P1 = np.zeros((n, n))
    q1 = np.zeros((n, 3))

    S, directions = _strand_shape_rows(p_local, src_local)
    P1 += 2.0 * S.T @ S
    q1 += -2.0 * S.T @ directions

    idx = np.arange(1, n)
    P1[idx, idx] += 2.0 * config.alpha * inter_scale**2
    q1[idx] += -2.0 * config.alpha * inter_scale[:, None] ** 2 * inter_targets
    P1[idx, idx] += 2.0 * config.beta * body_scale**2
    q1[idx] += -2.0 * config.beta * body_scale[:, None] ** 2 * body_targets

    root = p_local[0]
    P_ff = np.kron(P1[1:, 1:], np.eye(3))
    q_f = (q1[1:] + np.outer(P1[1:, 0], root)).ravel()

    m = nf
    A = np.zeros((m, 3 * nf))
    for j in range(m):
        A[j, 3 * j:3 * j + 3] = pen_normals[j]
    res = solve_box_qp(P_ff, q_f, A, pen_offsets, np.full(m, np.inf),
                       x0=p_local[1:].ravel(), settings=settings)
    out = p_local.copy()
    out[1:] = res.x.reshape(-1, 3)
    disp = float(np.max(np.linalg.norm(out - p_local, axis=1)))
    return out, disp


def fine_solve(source: Hairstyle, hierarchy: HairHierarchy,
               guide_positions_full: np.ndarray,
               decoupled: LaplacianFeatureSet, p_hat: np.ndarray,
               target: BodyModel, config: AdaptationConfig,
               root_targets_full: np.ndarray | None = None,
               gamma_full: np.ndarray | None = None,
               initial_positions: np.ndarray | None = None,
               workers: int = 1) -> tuple[np.ndarray, int, list[int]]:
    """Adapt all non-guide strands independently against fixed guides.

    Freezing passes (segment lengths, closest points, normals) are batched
    over all still-active strands; the per-strand QPs are then solved
    independently, so the result does not depend on strand order or worker
    count. Failed strands keep their initial transfer."""
    p = guide_positions_full.copy()
    roots = source.root_indices
    if root_targets_full is None:
        root_targets_full = p_hat[roots]
    start_positions = initial_positions if initial_positions is not None else p_hat
    normal_strands = hierarchy.normals
    for s in normal_strands:
        sl = source.strand_slice(s)
        p[sl] = start_positions[sl]
        p[sl.start] = root_targets_full[s]

    # constant cross-strand targets from the adapted guides
    safe = np.maximum(decoupled.neighbors, 0)
    guide_ctx = np.einsum("nk,nkc->nc", decoupled.weights, guide_positions_full[safe])
    inter_targets_full = decoupled.reference + guide_ctx
    inter_active = decoupled.counts > 0

    settings = ADMMSettings(eps_primal=config.tol_primal, eps_dual=config.tol_dual,
                            max_iters=config.max_admm_iters)
    tol_outer = config.tol_outer_rel * source.bounding_box_diagonal()

    state = {int(s): "active" for s in normal_strands}
    failed: list[int] = []
    outer_used = 0
    for outer in range(config.max_outer):
        active = [s for s in normal_strands if state[int(s)] == "active"]
        if not active:
            break
        outer_used = outer + 1
        check_idx = np.concatenate([
            np.arange(source.offsets[s] + 1, source.offsets[s + 1]) for s in active
        ])
        _, _, q_pts, n_vecs = target.queries.closest_points_with_normals(p[check_idx])
        offsets = np.einsum("ij,ij->i", q_pts, n_vecs) + config.eps_c
        row_of = {int(i): r for r, i in enumerate(check_idx)}

        def run_strand(s: int):
            sl = source.strand_slice(s)
            local = np.arange(sl.start + 1, sl.stop)
            rows = np.asarray([row_of[int(i)] for i in local])
            lhs = np.einsum("ij,ij->i", p[local], n_vecs[rows])
            viol = float(np.max(offsets[rows] - lhs, initial=0.0))
            gamma = gamma_full[local] if gamma_full is not None else np.ones(len(local))
            scale_i = np.where(inter_active[local], np.sqrt(gamma), 0.0)
            try:
                new_local, disp = _solve_normal_strand(
                    p[sl], source.positions[sl],
                    inter_targets_full[local], scale_i,
                    p_hat[local], np.sqrt(gamma),
                    n_vecs[rows], offsets[rows], config, settings,
                )
                return s, new_local, disp, viol, None
            except Exception as exc:  # pragma: no cover - defensive per-strand guard
                return s, None, 0.0, viol, exc

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run_strand, active))
        else:
            results = [run_strand(s) for s in active]

        for s, new_local, disp, viol, exc in results:
            sl = source.strand_slice(s)
            if exc is not None:
                state[int(s)] = "failed"
                failed.append(int(s))
                p[sl] = p_hat[sl]
                p[sl.start] = root_targets_full[s]
                continue
            already_still = disp < tol_outer
            p[sl] = new_local
            if already_still and viol <= 1e-6:
                state[int(s)] = "done"
    if failed:
        warnings.warn(f"{len(failed)} strands fell back to the initial transfer",
                      stacklevel=2)
    return p, outer_used, failed


def multiscale_retarget(source: Hairstyle, p_hat: np.ndarray, target: BodyModel,
                        config: AdaptationConfig,
                        hierarchy: HairHierarchy | None = None,
                        guide_features: LaplacianFeatureSet | None = None,
                        decoupled: LaplacianFeatureSet | None = None,
                        root_targets_full: np.ndarray | None = None,
                        gamma_full: np.ndarray | None = None,
                        initial_positions: np.ndarray | None = None,
                        workers: int = 1,
                        ) -> tuple[np.ndarray, MultiscaleReport]:
    """Coarse guide solve followed by the decoupled fine stage."""
    t0 = time.perf_counter()
    if hierarchy is None:
        hierarchy = select_guides(source, min(config.n_guides, source.n_strands),
                                  seed=config.seed)
    if decoupled is None:
        decoupled = build_decoupled_features(source, hierarchy.guides, config.k)

    t_coarse = time.perf_counter()
    guide_pos, index_map, coarse_report = coarse_solve(
        source, hierarchy, p_hat, target, config,
        guide_features=guide_features, root_targets_full=root_targets_full,
        gamma_full=gamma_full, initial_positions=initial_positions,
    )
    coarse_time = time.perf_counter() - t_coarse

    full = p_hat.copy()
    full[index_map] = guide_pos

    t_fine = time.perf_counter()
    strand_root_targets = (
        root_targets_full if root_targets_full is not None else p_hat[source.root_indices]
    )
    positions, fine_outer, failed = fine_solve(
        source, hierarchy, full, decoupled, p_hat, target, config,
        root_targets_full=strand_root_targets, gamma_full=gamma_full,
        initial_positions=initial_positions, workers=workers,
    )
    fine_time = time.perf_counter() - t_fine

    report = MultiscaleReport(
        coarse=coarse_report,
        fine_outer_iterations=fine_outer,
        fine_failed_strands=failed,
        guide_count=len(hierarchy.guides),
        wall_time=time.perf_counter() - t0,
        coarse_time=coarse_time,
        fine_time=fine_time,
    )
    return positions, report
