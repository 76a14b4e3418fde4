"""Command-line pipeline driver.

Exit codes: 1 validation failure, 2 solver non-convergence, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


from . import caches
from .body import load_body, validate_pair
from .config import AdaptationConfig, load_config
from .hair import load_hairstyle, save_hairstyle
from .metrics import density_change, regression_metrics, write_objective_csv
from .pipeline import (
    Preprocessed,
    apply_hairline_edit,
    build_scalp_context,
    preprocess,
    run_retarget,
)
from .scalp import HairlineEdit

EXIT_VALIDATION = 1
EXIT_SOLVER = 2
EXIT_IO = 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _load_config_arg(path: str | None, args) -> AdaptationConfig:
    config = load_config(path) if path else AdaptationConfig()
    if getattr(args, "guides", None):
        config.n_guides = args.guides
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "solver_tol", None):
        config.tol_primal = config.tol_dual = args.solver_tol
    if getattr(args, "max_outer", None):
        config.max_outer = args.max_outer
    return config


def _load_models(args, config):
    try:
        hair = load_hairstyle(args.hair)
        source = load_body(args.source_mesh, args.source_skeleton,
                           weight_clip=config.weight_clip)
    except OSError as exc:
        raise CliError(f"cannot read input: {exc}", EXIT_IO) from exc
    except ValueError as exc:
        raise CliError(f"invalid input: {exc}", EXIT_VALIDATION) from exc
    target = None
    if getattr(args, "target_mesh", None):
        try:
            target = load_body(args.target_mesh, args.target_skeleton,
                               weight_clip=config.weight_clip)
        except OSError as exc:
            raise CliError(f"cannot read target: {exc}", EXIT_IO) from exc
        except ValueError as exc:
            raise CliError(f"invalid target: {exc}", EXIT_VALIDATION) from exc
        report = validate_pair(source, target)
        if not report:
            raise CliError(f"source/target mismatch: {report.mismatch}", EXIT_VALIDATION)
    return hair, source, target


def _cache_manifest(args, config) -> dict:
    return {
        "hair": caches.file_sha256(args.hair),
        "mesh": caches.file_sha256(args.source_mesh),
        "skeleton": caches.file_sha256(args.source_skeleton),
        "k": config.k,
        "nGuides": config.n_guides,
        "seed": config.seed,
    }


def _write_caches(out_dir: Path, pre: Preprocessed, manifest: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    caches.save_anchors(out_dir / "anchors.anch", pre.anchors)
    caches.save_features(out_dir / "features.lapf", pre.features)
    caches.save_features(out_dir / "guide_features.lapf", pre.guide_features)
    caches.save_features(out_dir / "decoupled_features.lapf", pre.decoupled)
    caches.save_guides(out_dir / "guides.json", pre.hierarchy)
    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest, f, sort_keys=True, indent=2)


def _load_caches(cache_dir: Path, manifest: dict, n_strands: int) -> Preprocessed | None:
    mpath = cache_dir / "manifest.json"
    if not mpath.exists():
        return None
    with open(mpath) as f:
        stored = json.load(f)
    if stored != manifest:
        return None
    return Preprocessed(
        anchors=caches.load_anchors(cache_dir / "anchors.anch"),
        features=caches.load_features(cache_dir / "features.lapf"),
        hierarchy=caches.load_guides(cache_dir / "guides.json", n_strands),
        guide_features=caches.load_features(cache_dir / "guide_features.lapf"),
        decoupled=caches.load_features(cache_dir / "decoupled_features.lapf"),
    )


def cmd_preprocess(args) -> int:
    config = _load_config_arg(args.config, args)
    hair, source, _ = _load_models(args, config)
    pre = preprocess(hair, source, config)
    _write_caches(Path(args.out), pre, _cache_manifest(args, config))
    print(json.dumps({"particles": hair.n_particles, "strands": hair.n_strands,
                      "guides": len(pre.hierarchy.guides),
                      "preprocessSeconds": pre.elapsed_s}))
    return 0


def cmd_retarget(args) -> int:
    config = _load_config_arg(args.config, args)
    hair, source, target = _load_models(args, config)
    pre = None
    if args.caches:
        pre = _load_caches(Path(args.caches), _cache_manifest(args, config),
                           hair.n_strands)
        if pre is None:
            print("cache mismatch or missing; recomputing", file=sys.stderr)
    edit = None
    if args.hairline:
        try:
            with open(args.hairline) as f:
                edit = HairlineEdit.from_json(f.read())
        except OSError as exc:
            raise CliError(f"cannot read edit: {exc}", EXIT_IO) from exc

    mode = "global" if args.use_global else "multiscale"
    outcome = run_retarget(hair, source, target, config, pre=pre, mode=mode,
                           edit=edit, with_full_reference=args.compare_full,
                           workers=args.workers)

    if args.weights_csv and outcome.edit is not None:
        from .tuning import compute_weights

        weights = compute_weights(hair, outcome.edit.relocation.travel,
                                  config.sigma_gamma)
        weights.dump_csv(args.weights_csv, hair)

    reports = [r for r in (outcome.multiscale_report,) if r is not None]
    if outcome.global_report is not None and not outcome.global_report.converged:
        raise CliError("global solve did not converge", EXIT_SOLVER)
    if reports and not reports[0].coarse.converged:
        raise CliError("coarse solve did not converge", EXIT_SOLVER)

    try:
        save_hairstyle(args.out, hair.with_positions(outcome.positions))
    except OSError as exc:
        raise CliError(f"cannot write output: {exc}", EXIT_IO) from exc

    report_doc = {"runtime": outcome.runtime.to_dict(), "solver": outcome.solver}
    if outcome.edit is not None:
        report_doc["relocation"] = {
            "meanTravel": float(outcome.edit.relocation.travel.mean()),
            "maxTravel": float(outcome.edit.relocation.travel.max()),
        }
    report_path = args.report or (args.out + ".report.json")
    with open(report_path, "w") as f:
        json.dump(report_doc, f, indent=2, sort_keys=True)
    if args.metrics_csv:
        from .energies import hair_body_terms, inter_strand_terms, strand_shape_terms

        terms = [
            (1.0, strand_shape_terms(outcome.positions, hair)),
            (config.alpha, inter_strand_terms(pre.features if pre else
                                              preprocess(hair, source, config).features)),
            (config.beta, hair_body_terms(outcome.transfer.p_hat)),
        ]
        from .metrics import objective_maps

        maps = objective_maps(hair, outcome.positions, terms)
        write_objective_csv(args.metrics_csv, hair, maps)
    print(json.dumps(report_doc["runtime"]))
    return 0


def cmd_relocate(args) -> int:
    config = _load_config_arg(args.config, args)
    hair, source, target = _load_models(args, config)
    try:
        with open(args.hairline) as f:
            edit = HairlineEdit.from_json(f.read())
    except OSError as exc:
        raise CliError(f"cannot read edit: {exc}", EXIT_IO) from exc
    pre = preprocess(hair, source, config)
    ctx = build_scalp_context(pre.anchors, hair, target, config,
                              ear_markers=edit.ear_markers)
    out = apply_hairline_edit(ctx, edit)
    reloc = out.relocation
    parent_faces = ctx.patch.head.parent_faces[reloc.head_faces]
    doc = {
        str(i): {
            "face": int(parent_faces[i]),
            "bary": reloc.bary[i].tolist(),
            "position": reloc.positions[i].tolist(),
            "travel": float(reloc.travel[i]),
        }
        for i in range(len(reloc.positions))
    }
    dc = density_change(ctx.patch, reloc.positions, deformed_x=reloc.deformed_x)
    payload = {"roots": doc, "densityChange": dc.to_dict()}
    if args.out:
        with open(args.out, "w") as f:
            json.dump(payload, f, indent=2)
    else:
        print(json.dumps(payload))
    return 0


def cmd_metrics(args) -> int:
    try:
        a = load_hairstyle(args.a)
        b = load_hairstyle(args.b)
    except OSError as exc:
        raise CliError(f"cannot read hairstyles: {exc}", EXIT_IO) from exc
    try:
        dist, angle = regression_metrics(a, b)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_VALIDATION) from exc
    print(json.dumps({"meanDistance": dist, "meanAngleRad": angle}))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = _load_config_arg(args.config, args)
    app = create_app(Path(args.model_root), config)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hairadapt", description="strand-based hairstyle retargeting"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_source(p):
        p.add_argument("--hair", required=True)
        p.add_argument("--source-mesh", required=True)
        p.add_argument("--source-skeleton", required=True)
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--guides", type=int, help="guide strand count")

    p = sub.add_parser("preprocess", help="build target-agnostic caches")
    add_source(p)
    p.add_argument("--out", required=True, help="cache directory")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("retarget", help="adapt a hairstyle to a target body")
    add_source(p)
    p.add_argument("--target-mesh", required=True)
    p.add_argument("--target-skeleton", required=True)
    p.add_argument("--caches", help="cache directory from preprocess")
    p.add_argument("--out", required=True, help="output hair file")
    p.add_argument("--report", help="solver report JSON path")
    p.add_argument("--metrics-csv", help="per-particle objective CSV")
    p.add_argument("--global", dest="use_global", action="store_true",
                   help="single global solve instead of multi-scale")
    p.add_argument("--compare-full", action="store_true",
                   help="also time the global solve and report the speedup")
    p.add_argument("--hairline", help="hairline edit JSON")
    p.add_argument("--weights-csv", help="tuning weights dump (with --hairline)")
    p.add_argument("--solver-tol", type=float)
    p.add_argument("--max-outer", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_retarget)

    p = sub.add_parser("relocate", help="relocate roots for a hairline edit")
    add_source(p)
    p.add_argument("--target-mesh", required=True)
    p.add_argument("--target-skeleton", required=True)
    p.add_argument("--hairline", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_relocate)

    p = sub.add_parser("metrics", help="regression metrics between two hair files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("serve", help="HTTP service for the hairline editor")
    p.add_argument("--model-root", required=True)
    p.add_argument("--port", type=int, default=8650)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--config")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
