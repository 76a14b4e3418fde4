"""End-to-end orchestration: preprocessing, retargeting, and hairline edits.

Preprocessing depends only on the source character and hairstyle, so its
caches (anchors, feature sets, guide hierarchy) can be reused across any
number of targets. A retarget replays the anchors on the target, optionally
relocates roots for a hairline edit, and runs the multi-scale (or global)
solve.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .body import BodyModel
from .chart import ParamChart, parameterize_head
from .config import AdaptationConfig
from .features import LaplacianFeatureSet, build_decoupled_features, build_knn_features
from .hair import Hairstyle
from .membrane import (
    MembraneResult,
    Relocation,
    hairline_targets,
    relocate_roots,
    solve_membrane,
)
from .metrics import RuntimeReport
from .multiscale import (
    HairHierarchy,
    MultiscaleReport,
    multiscale_retarget,
    select_guides,
    sub_hairstyle,
)
from .positioning import (
    InitialTransfer,
    LocalAnchorSet,
    initial_transfer,
    select_anchors,
    snap_roots_to_surface,
)
from .qp import SolverReport, iterate_adaptation
from .scalp import (
    HairlineEdit,
    ScalpPatch,
    build_correspondence,
    build_head_patch,
    detect_turning_points,
    extract_scalp,
    head_region_faces,
    split_hairline,
)
from .tuning import compute_weights, tuned_retarget


@dataclass
class Preprocessed:
    """Target-agnostic caches for one source character + hairstyle."""

    anchors: LocalAnchorSet
    features: LaplacianFeatureSet  # full cross-strand kNN (global solve)
    hierarchy: HairHierarchy
    guide_features: LaplacianFeatureSet  # guide-to-guide kNN
    decoupled: LaplacianFeatureSet  # normal-to-guide kNN
    elapsed_s: float = 0.0


def preprocess(source_hair: Hairstyle, source_body: BodyModel,
               config: AdaptationConfig) -> Preprocessed:
    t0 = time.perf_counter()
    anchors = select_anchors(source_hair.positions, source_body, config.sigma_bone)
    snap_roots_to_surface(anchors, source_hair.positions, source_hair.root_indices,
                          source_body)
    features = build_knn_features(source_hair, config.k)
    hierarchy = select_guides(source_hair, min(config.n_guides, source_hair.n_strands),
                              seed=config.seed)
    guide_hair, _ = sub_hairstyle(source_hair, hierarchy.guides)
    guide_features = build_knn_features(guide_hair, config.k)
    decoupled = build_decoupled_features(source_hair, hierarchy.guides, config.k)
    return Preprocessed(anchors, features, hierarchy, guide_features, decoupled,
                        elapsed_s=time.perf_counter() - t0)


@dataclass
class ScalpContext:
    """Target-side scalp machinery for hairline editing."""

    patch: ScalpPatch
    chart: ParamChart
    front: np.ndarray
    back: np.ndarray
    ear_markers: tuple[int, int]
    turning_candidates: np.ndarray


def build_scalp_context(anchors: LocalAnchorSet, source_hair: Hairstyle,
                        target: BodyModel, config: AdaptationConfig,
                        ear_markers: tuple[int, int] | None = None) -> ScalpContext:
    roots = source_hair.root_indices
    head = build_head_patch(target, head_region_faces(target, config.head_bone))
    patch = extract_scalp(head, anchors.face[roots], anchors.bary[roots])
    chart = parameterize_head(head, config.chart_kind)
    if ear_markers is None:
        bx = patch.X[patch.boundary]
        ear_markers = (
            int(patch.boundary[int(np.argmax(bx[:, 0]))]),
            int(patch.boundary[int(np.argmin(bx[:, 0]))]),
        )
    front, back = split_hairline(patch, ear_markers)
    candidates = detect_turning_points(patch, front)
    return ScalpContext(patch, chart, front, back, ear_markers, candidates)


@dataclass
class EditOutcome:
    relocation: Relocation
    membrane: MembraneResult
    root_targets: np.ndarray  # (S, 3) per strand
    dirichlet: np.ndarray
    targets_u: np.ndarray


def apply_hairline_edit(ctx: ScalpContext, edit: HairlineEdit) -> EditOutcome:
    curve_points = edit.curve_positions(ctx.patch.head.body)
    _, params, _ = build_correspondence(ctx.patch, ctx.front, ctx.back, edit, curve_points)
    dirichlet, targets_u = hairline_targets(
        ctx.patch, ctx.chart, ctx.front, ctx.back, edit, params
    )
    result = solve_membrane(ctx.patch, ctx.chart, dirichlet, targets_u)
    relocation = relocate_roots(result.state, ctx.patch)
    return EditOutcome(relocation, result, relocation.positions, dirichlet, targets_u)


@dataclass
class RetargetOutcome:
    positions: np.ndarray
    runtime: RuntimeReport
    solver: dict = field(default_factory=dict)
    multiscale_report: MultiscaleReport | None = None
    global_report: SolverReport | None = None
    transfer: InitialTransfer | None = None
    edit: EditOutcome | None = None


def run_retarget(source_hair: Hairstyle, source_body: BodyModel, target: BodyModel,
                 config: AdaptationConfig, pre: Preprocessed | None = None,
                 mode: str = "multiscale", edit: HairlineEdit | None = None,
                 with_full_reference: bool = False, workers: int = 1,
                 ear_markers: tuple[int, int] | None = None) -> RetargetOutcome:
    """Full retarget pipeline. With an edit, the unedited retarget runs first
    (it initializes the tuned solve), then roots relocate on the target scalp
    and the weighted solve re-runs both scales."""
    runtime = RuntimeReport()
    if pre is None:
        pre = preprocess(source_hair, source_body, config)
    runtime.preprocess_s = pre.elapsed_s

    t0 = time.perf_counter()
    transfer, _ = initial_transfer(source_hair, source_body, target, config,
                                   anchors=pre.anchors)
    runtime.initial_transfer_s = time.perf_counter() - t0

    outcome = RetargetOutcome(transfer.p_hat, runtime, transfer=transfer)

    t0 = time.perf_counter()
    if mode == "global":
        positions, report = iterate_adaptation(
            transfer.p_hat, source_hair, pre.features, target, config
        )
        outcome.global_report = report
        outcome.solver["global"] = report.to_dict()
        runtime.multiscale_s = time.perf_counter() - t0
    elif mode == "multiscale":
        positions, ms_report = multiscale_retarget(
            source_hair, transfer.p_hat, target, config,
            hierarchy=pre.hierarchy, guide_features=pre.guide_features,
            decoupled=pre.decoupled, workers=workers,
        )
        outcome.multiscale_report = ms_report
        outcome.solver["coarse"] = ms_report.coarse.to_dict()
        outcome.solver["fineOuterIterations"] = ms_report.fine_outer_iterations
        outcome.solver["fineFailedStrands"] = ms_report.fine_failed_strands
        runtime.multiscale_s = time.perf_counter() - t0
    else:
        raise ValueError(f"unknown mode {mode!r}")

    if edit is not None:
        t0 = time.perf_counter()
        ctx = build_scalp_context(pre.anchors, source_hair, target, config,
                                  ear_markers=ear_markers or edit.ear_markers)
        edit_out = apply_hairline_edit(ctx, edit)
        runtime.relocation_s = time.perf_counter() - t0

        weights = compute_weights(source_hair, edit_out.relocation.travel,
                                  config.sigma_gamma)
        t0 = time.perf_counter()
        positions, tuned_report = tuned_retarget(
            source_hair, transfer.p_hat, positions, target, config,
            edit_out.root_targets, weights,
            hierarchy=pre.hierarchy, guide_features=pre.guide_features,
            decoupled=pre.decoupled, workers=workers,
        )
        runtime.multiscale_s += time.perf_counter() - t0
        outcome.edit = edit_out
        outcome.solver["tunedCoarse"] = tuned_report.coarse.to_dict()

    if with_full_reference and mode == "multiscale":
        t0 = time.perf_counter()
        iterate_adaptation(transfer.p_hat, source_hair, pre.features, target, config)
        runtime.full_solve_s = time.perf_counter() - t0

    runtime.total_s = (
        runtime.initial_transfer_s + runtime.relocation_s + runtime.multiscale_s
    )
    outcome.positions = positions
    return outcome
