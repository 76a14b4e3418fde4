"""Adaptation hyperparameters and the key-value config file format."""

from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass
class AdaptationConfig:
    alpha: float = 3e3  # inter-strand energy weight
    beta: float = 1e3  # hair-body energy weight
    k: int = 5  # cross-strand kNN count
    eps_c: float = 5e-4  # penetration clearance, meters
    eps_s: float = 0.3  # smoothing discrepancy threshold (dimensionless)
    sigma_bone: float = 100.0  # bone-alignment exponent constant
    sigma_gamma: float = 0.2  # hairline-tuning weight falloff constant
    n_guides: int = 300
    weight_clip: float = 0.3  # skin-weight threshold for valid regions
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    max_admm_iters: int = 4000
    tol_outer_rel: float = 1e-4  # outer convergence, relative to hair bbox diagonal
    max_outer: int = 20
    seed: int = 0
    penetration_cutoff: bool = False  # build only near-surface rows (speed flag)
    head_bone: str = "head"  # bone whose region carves the head patch
    chart_kind: str = "harmonic"  # head parameterization for the membrane

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.eps_c < 0:
            raise ValueError("eps_c must be nonnegative")
        if self.n_guides < 1:
            raise ValueError("n_guides must be >= 1")


_FIELD_TYPES = {f.name: f.type for f in fields(AdaptationConfig)}


def load_config(path) -> AdaptationConfig:
    """Parse `key = value` lines; `#` comments; unknown keys are rejected."""
    values = {}
    with open(path, "r") as f:
        for ln, line in enumerate(f, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ValueError(f"{path}:{ln}: expected 'key = value'")
            key, raw = (s.strip() for s in body.split("=", 1))
            if key not in _FIELD_TYPES:
                raise ValueError(f"{path}:{ln}: unknown config key {key!r}")
            kind = _FIELD_TYPES[key]
            if kind == "int":
                values[key] = int(raw)
            elif kind == "bool":
                values[key] = raw.lower() in ("1", "true", "yes", "on")
            elif kind == "str":
                values[key] = raw
            else:
                values[key] = float(raw)
    return AdaptationConfig(**values)


def save_config(path, config: AdaptationConfig) -> None:
    with open(path, "w") as f:
        for fld in fields(AdaptationConfig):
            f.write(f"{fld.name} = {getattr(config, fld.name)}\n")
