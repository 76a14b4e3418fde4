"""Adaptation tuning after a hairline edit.

Root relocation changes where strands grow from; particles near a moved
root should follow it while far-away particles keep their original
relationships. Each non-root particle gets a weight
    gamma_i = 1 - exp(-sigma (s_i / r_i)^2)
from its source arc length s_i and its strand's root travel r_i; the weight
scales the inter-strand and proximity energies (the per-segment direction
energy stays unweighted) and the root constraints move to the relocated
positions. Unmoved strands (r = 0) keep full preservation weights.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .body import BodyModel
from .config import AdaptationConfig
from .hair import Hairstyle
from .multiscale import HairHierarchy, MultiscaleReport, multiscale_retarget


@dataclass
class ParticleWeights:
    gamma: np.ndarray  # (N,) in [0, 1]; 0 at roots
    arc_length: np.ndarray  # (N,) source arc length from the root
    root_travel: np.ndarray  # (S,) relocation distance per strand

    def dump_csv(self, path, hair: Hairstyle) -> None:
        strand_of = hair.strand_of_particle()
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["strand", "particle", "s", "r", "gamma"])
            for i in range(hair.n_particles):
                s = int(strand_of[i])
                w.writerow([s, i, f"{self.arc_length[i]:.9g}",
                            f"{self.root_travel[s]:.9g}", f"{self.gamma[i]:.9g}"])


def compute_weights(hair: Hairstyle, root_travel: np.ndarray,
                    sigma_gamma: float) -> ParticleWeights:
    """Per-particle tuning weights from source arc lengths and root travel.

    Strands whose root did not move (r = 0, the s/r -> inf limit) keep weight
    1 on every particle, so an identity edit reproduces the unweighted
    objective term for term. Moved strands follow the exponential falloff,
    which is 0 at the root itself.
    """
    root_travel = np.asarray(root_travel, dtype=np.float64)
    if len(root_travel) != hair.n_strands:
        raise ValueError("one travel distance per strand required")
    s = hair.arc_lengths()
    assert np.all(s >= 0)
    strand_of = hair.strand_of_particle()
    r = root_travel[strand_of]
    gamma = np.ones(hair.n_particles)
    moved = r > 1e-9  # sub-nanometer travel is numerical noise, not a move
    with np.errstate(over="ignore"):
        gamma[moved] = 1.0 - np.exp(-sigma_gamma * (s[moved] / r[moved]) ** 2)
    return ParticleWeights(gamma, s, root_travel)


def tuned_retarget(source: Hairstyle, p_hat: np.ndarray, prior_result: np.ndarray,
                   target: BodyModel, config: AdaptationConfig,
                   relocated_roots: np.ndarray, weights: ParticleWeights,
                   hierarchy: HairHierarchy | None = None,
                   guide_features=None, decoupled=None,
                   workers: int = 1) -> tuple[np.ndarray, MultiscaleReport]:
    """Re-run the multi-scale solve with relocated root targets and weighted
    energies, warm-started from the unedited retarget."""
    return multiscale_retarget(
        source, p_hat, target, config,
        hierarchy=hierarchy, guide_features=guide_features, decoupled=decoupled,
        root_targets_full=np.asarray(relocated_roots, dtype=np.float64),
        gamma_full=weights.gamma,
        initial_positions=prior_result,
        workers=workers,
    )
