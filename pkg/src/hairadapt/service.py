"""HTTP service exposing retargeting sessions to the hairline editor.

Sessions load the source/target models once, preprocess lazily, and keep
their latest transfer, relocation, and retarget results. Retargets run as
background jobs polled via /jobs/{id}; all other endpoints are synchronous.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel

from .body import BodyModel, load_body, validate_pair
from .config import AdaptationConfig, load_config
from .hair import Hairstyle, hairstyle_to_bytes, load_hairstyle
from .metrics import density_change
from .pipeline import (
    EditOutcome,
    Preprocessed,
    ScalpContext,
    apply_hairline_edit,
    build_scalp_context,
    preprocess,
)
from .positioning import initial_transfer
from .multiscale import multiscale_retarget
from .scalp import HairlineEdit
from .tuning import compute_weights, tuned_retarget


class SessionRequest(BaseModel):
    sourceHair: str
    sourceMesh: str
    sourceSkeleton: str
    targetMesh: str
    targetSkeleton: str
    config: str | None = None
    earMarkers: tuple[int, int] | None = None


class RetargetRequest(BaseModel):
    useEdit: bool = False


@dataclass
class Job:
    id: str
    session_id: str
    status: str = "queued"  # queued | running | done | failed
    progress: float = 0.0
    error: str | None = None


@dataclass
class Session:
    id: str
    hair: Hairstyle
    source: BodyModel
    target: BodyModel
    config: AdaptationConfig
    ear_markers: tuple[int, int] | None = None
    pre: Preprocessed | None = None
    scalp_ctx: ScalpContext | None = None
    p_hat: np.ndarray | None = None
    unedited: np.ndarray | None = None
    edit_outcome: EditOutcome | None = None
    result: Hairstyle | None = None
    running_job: str | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def ensure_preprocessed(self) -> Preprocessed:
        with self.lock:
            if self.pre is None:
                self.pre = preprocess(self.hair, self.source, self.config)
                transfer, _ = initial_transfer(
                    self.hair, self.source, self.target, self.config,
                    anchors=self.pre.anchors,
                )
                self.p_hat = transfer.p_hat
            return self.pre

    def ensure_scalp(self) -> ScalpContext:
        pre = self.ensure_preprocessed()
        with self.lock:
            if self.scalp_ctx is None:
                self.scalp_ctx = build_scalp_context(
                    pre.anchors, self.hair, self.target, self.config,
                    ear_markers=self.ear_markers,
                )
            return self.scalp_ctx


def _resolve(root: Path, rel: str) -> Path:
    p = (root / rel).resolve()
    if not str(p).startswith(str(root.resolve())):
        raise HTTPException(400, detail={"code": "path_escape", "message": rel})
    if not p.exists():
        raise HTTPException(404, detail={"code": "missing_file", "message": rel})
    return p


def create_app(model_root: Path, base_config: AdaptationConfig | None = None) -> FastAPI:
    app = FastAPI(title="hairadapt")
    sessions: dict[str, Session] = {}
    jobs: dict[str, Job] = {}

    def get_session(sid: str) -> Session:
        if sid not in sessions:
            raise HTTPException(404, detail={"code": "no_session", "message": sid})
        return sessions[sid]

    @app.post("/sessions", status_code=201)
    def create_session(req: SessionRequest):
        config = (
            load_config(_resolve(model_root, req.config))
            if req.config
            else (base_config or AdaptationConfig())
        )
        try:
            hair = load_hairstyle(_resolve(model_root, req.sourceHair))
            source = load_body(
                _resolve(model_root, req.sourceMesh),
                _resolve(model_root, req.sourceSkeleton),
                weight_clip=config.weight_clip,
            )
            target = load_body(
                _resolve(model_root, req.targetMesh),
                _resolve(model_root, req.targetSkeleton),
                weight_clip=config.weight_clip,
            )
        except ValueError as exc:
            raise HTTPException(422, detail={"code": "invalid_model", "message": str(exc)})
        pair = validate_pair(source, target)
        if not pair:
            raise HTTPException(
                422, detail={"code": "topology_mismatch", "message": pair.mismatch}
            )
        sid = uuid.uuid4().hex[:12]
        sessions[sid] = Session(sid, hair, source, target, config,
                                ear_markers=req.earMarkers)
        return {"id": sid}

    @app.get("/sessions/{sid}/scalp")
    def get_scalp(sid: str):
        session = get_session(sid)
        ctx = session.ensure_scalp()
        patch = ctx.patch
        head = patch.head
        return {
            "vertices": patch.X.tolist(),
            "faces": patch.faces.tolist(),
            "hairlineLoop": patch.boundary.tolist(),
            "frontSegment": ctx.front.tolist(),
            "backSegment": ctx.back.tolist(),
            "turningPoints": ctx.turning_candidates.tolist(),
            "earMarkers": list(ctx.ear_markers),
            "head": {
                "vertices": head.vertices.tolist(),
                "faces": head.faces.tolist(),
                "parentFaces": head.parent_faces.tolist(),
            },
        }

    @app.post("/sessions/{sid}/hairline")
    def post_hairline(sid: str, edit_doc: dict):
        session = get_session(sid)
        try:
            edit = HairlineEdit.from_json(edit_doc)
        except (KeyError, ValueError) as exc:
            raise HTTPException(422, detail={"code": "invalid_edit", "message": str(exc)})
        if session.ear_markers is None:
            session.ear_markers = edit.ear_markers
        ctx = session.ensure_scalp()
        try:
            outcome = apply_hairline_edit(ctx, edit)
        except ValueError as exc:
            raise HTTPException(422, detail={"code": "edit_rejected", "message": str(exc)})
        session.edit_outcome = outcome
        reloc = outcome.relocation
        parent_faces = ctx.patch.head.parent_faces[reloc.head_faces]
        dc = density_change(ctx.patch, reloc.positions, deformed_x=reloc.deformed_x)
        pre = session.ensure_preprocessed()
        guide_roots = [
            reloc.positions[int(g)].tolist() for g in pre.hierarchy.guides
        ]
        return {
            "relocatedRoots": [
                {"root": i, "face": int(parent_faces[i]),
                 "bary": reloc.bary[i].tolist(),
                 "position": reloc.positions[i].tolist()}
                for i in range(len(reloc.positions))
            ],
            "travelDistances": reloc.travel.tolist(),
            "densityChange": dc.to_dict(),
            "previewGuides": {
                "strands": pre.hierarchy.guides.tolist(),
                "roots": guide_roots,
            },
        }

    def _run_retarget_job(job: Job, session: Session, use_edit: bool):
        try:
            job.status = "running"
            pre = session.ensure_preprocessed()
            job.progress = 0.1
            p_hat = session.p_hat
            assert p_hat is not None

            def staged(progress_after_coarse, progress_done, **kwargs):
                positions, report = multiscale_retarget(
                    session.hair, p_hat, session.target, session.config,
                    hierarchy=pre.hierarchy, guide_features=pre.guide_features,
                    decoupled=pre.decoupled, **kwargs,
                )
                job.progress = progress_done
                return positions, report

            if session.unedited is None:
                positions, _ = staged(0.4, 0.6 if use_edit else 0.95)
                session.unedited = positions
            job.progress = max(job.progress, 0.6)
            result = session.unedited
            if use_edit:
                if session.edit_outcome is None:
                    raise ValueError("no hairline edit submitted for this session")
                weights = compute_weights(
                    session.hair, session.edit_outcome.relocation.travel,
                    session.config.sigma_gamma,
                )
                result, _ = tuned_retarget(
                    session.hair, p_hat, session.unedited, session.target,
                    session.config, session.edit_outcome.root_targets, weights,
                    hierarchy=pre.hierarchy, guide_features=pre.guide_features,
                    decoupled=pre.decoupled,
                )
                job.progress = 0.95
            session.result = session.hair.with_positions(result)
            job.progress = 1.0
            job.status = "done"
        except Exception as exc:  # surfaced via the job endpoint
            job.status = "failed"
            job.error = str(exc)
        finally:
            session.running_job = None

    @app.post("/sessions/{sid}/retarget")
    def post_retarget(sid: str, req: RetargetRequest):
        session = get_session(sid)
        with session.lock:
            if session.running_job is not None:
                raise HTTPException(
                    409, detail={"code": "job_running", "message": session.running_job}
                )
            job = Job(uuid.uuid4().hex[:12], sid)
            jobs[job.id] = job
            session.running_job = job.id
        thread = threading.Thread(
            target=_run_retarget_job, args=(job, session, req.useEdit), daemon=True
        )
        thread.start()
        return {"jobId": job.id}

    @app.get("/jobs/{jid}")
    def get_job(jid: str):
        if jid not in jobs:
            raise HTTPException(404, detail={"code": "no_job", "message": jid})
        job = jobs[jid]
        payload = {"status": job.status, "progress": job.progress}
        if job.error:
            payload["error"] = job.error
        return payload

    @app.get("/sessions/{sid}/result")
    def get_result(sid: str):
        session = get_session(sid)
        if session.result is None:
            raise HTTPException(404, detail={"code": "no_result", "message": sid})
        return Response(
            content=hairstyle_to_bytes(session.result),
            media_type="application/octet-stream",
        )

    return app
