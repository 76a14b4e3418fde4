"""Quantitative evaluation: regression errors, root-density changes, and
per-particle objective maps.

Density change treats each rest scalp triangle as a bin: the relocated root
positions are re-binned against the rest scalp geometry, so the vector
reflects root redistribution. The alternative convention (fixed counts over
deformed triangle areas) is emitted alongside when deformed geometry is
available, since both readings of "density on the deformed mesh" are
defensible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .energies import QuadraticTerm
from .hair import Hairstyle
from .scalp import ScalpPatch


def regression_metrics(a: Hairstyle, b: Hairstyle) -> tuple[float, float]:
    """Mean per-particle distance and mean per-segment angle (radians)."""
    if not np.array_equal(a.offsets, b.offsets):
        raise ValueError("hairstyles must share strand topology")
    dist = float(np.mean(np.linalg.norm(a.positions - b.positions, axis=1)))
    seg = a.segments()
    va = a.positions[seg[:, 1]] - a.positions[seg[:, 0]]
    vb = b.positions[seg[:, 1]] - b.positions[seg[:, 0]]
    na = np.linalg.norm(va, axis=1)
    nb = np.linalg.norm(vb, axis=1)
    ok = (na > 1e-12) & (nb > 1e-12)  # degenerate segments are excluded
    cross = np.linalg.norm(np.cross(va[ok], vb[ok]), axis=1)
    dot = np.einsum("ij,ij->i", va[ok], vb[ok])
    ang = np.arctan2(cross, dot)  # exact 0 for identical directions
    angle = float(np.mean(ang)) if len(ang) else 0.0
    return dist, angle


@dataclass
class DensityChangeVector:
    """Per-triangle relative density change in two conventions.

    `distortion` keeps each root in its own (deformed) triangle, so the
    change reduces to the triangle's area ratio; it measures how unevenly
    the relocation stretched the scalp and drives the method comparisons.
    `redistribution` re-bins relocated roots against the rest triangulation
    and reports count changes instead.
    """

    distortion: np.ndarray | None  # rest/deformed area ratio - 1, needs deformed x
    redistribution: np.ndarray
    counts_before: np.ndarray
    counts_after: np.ndarray
    l1_mean: float  # sum |distortion entries| / triangle count
    l1_sum: float
    linf: float
    redistribution_l1_mean: float = 0.0
    redistribution_linf: float = 0.0

    def to_dict(self) -> dict:
        out = {
            "redistribution": self.redistribution.tolist(),
            "countsBefore": self.counts_before.tolist(),
            "countsAfter": self.counts_after.tolist(),
            "l1Mean": self.l1_mean,
            "l1Sum": self.l1_sum,
            "linf": self.linf,
            "redistributionL1Mean": self.redistribution_l1_mean,
            "redistributionLinf": self.redistribution_linf,
        }
        if self.distortion is not None:
            out["distortion"] = self.distortion.tolist()
        return out


def _bin_roots(patch: ScalpPatch, positions: np.ndarray) -> np.ndarray:
    """Scalp-triangle index per root position (closest rest triangle)."""
    from .geometry import MeshQueries

    queries = MeshQueries(patch.X, patch.faces)
    _, faces, _, _ = queries.closest_points(positions)
    return faces


def density_change(patch: ScalpPatch, relocated_roots: np.ndarray,
                   deformed_x: np.ndarray | None = None) -> DensityChangeVector:
    """Per-triangle relative density change after relocation.

    For redistribution, triangles with no roots before or after contribute 0
    and triangles that gain roots from an empty start are normalized by the
    scalp-wide mean rest density to keep entries finite.
    """
    t = len(patch.faces)
    before = np.bincount(patch.root_faces, minlength=t).astype(np.float64)
    after_faces = _bin_roots(patch, relocated_roots)
    after = np.bincount(after_faces, minlength=t).astype(np.float64)

    rho_before = before / patch.areas
    rho_after = after / patch.areas
    mean_density = before.sum() / patch.areas.sum()
    redistribution = np.zeros(t)
    nz = rho_before > 0
    redistribution[nz] = (rho_after[nz] - rho_before[nz]) / rho_before[nz]
    gained = (~nz) & (rho_after > 0)
    redistribution[gained] = rho_after[gained] / mean_density

    distortion = None
    l1_mean = l1_sum = linf = 0.0
    if deformed_x is not None:
        tri = deformed_x[patch.faces]
        areas_def = 0.5 * np.linalg.norm(
            np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1
        )
        distortion = patch.areas / np.maximum(areas_def, 1e-300) - 1.0
        abs_d = np.abs(distortion)
        l1_mean = float(abs_d.sum() / t)
        l1_sum = float(abs_d.sum())
        linf = float(abs_d.max(initial=0.0))

    abs_r = np.abs(redistribution)
    return DensityChangeVector(
        distortion=distortion,
        redistribution=redistribution,
        counts_before=before.astype(np.int64),
        counts_after=after.astype(np.int64),
        l1_mean=l1_mean,
        l1_sum=l1_sum,
        linf=linf,
        redistribution_l1_mean=float(abs_r.sum() / t),
        redistribution_linf=float(abs_r.max(initial=0.0)),
    )


def objective_maps(source: Hairstyle, positions: np.ndarray,
                   terms: list[tuple[float, QuadraticTerm]]) -> dict[str, np.ndarray]:
    """Per-particle contributions of each weighted energy term plus totals.

    Segment terms split half to each endpoint; particle terms map directly.
    """
    n = source.n_particles
    out: dict[str, np.ndarray] = {}
    totals: dict[str, float] = {}
    for weight, term in terms:
        per_row = weight * term.per_row_values(positions)
        field = np.zeros(n)
        if term.row_particles is not None:
            np.add.at(field, term.row_particles, per_row)
        else:  # segment rows: half to each endpoint
            seg = source.segments()
            np.add.at(field, seg[:, 0], 0.5 * per_row)
            np.add.at(field, seg[:, 1], 0.5 * per_row)
        out[term.name] = field
        totals[term.name] = float(per_row.sum())
    out["total"] = sum(out.values())
    out["_totals"] = totals  # type: ignore[assignment]
    return out


def write_objective_csv(path, source: Hairstyle, maps: dict[str, np.ndarray]) -> None:
    names = [k for k in maps if not k.startswith("_") and k != "total"]
    strand_of = source.strand_of_particle()
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["strand", "particle"] + names + ["total"])
        for i in range(source.n_particles):
            writer.writerow(
                [int(strand_of[i]), i]
                + [f"{maps[n][i]:.9e}" for n in names]
                + [f"{maps['total'][i]:.9e}"]
            )


@dataclass
class RuntimeReport:
    preprocess_s: float = 0.0
    initial_transfer_s: float = 0.0
    relocation_s: float = 0.0
    multiscale_s: float = 0.0
    total_s: float = 0.0
    full_solve_s: float | None = None

    @property
    def speedup(self) -> float | None:
        if self.full_solve_s is None or self.multiscale_s <= 0:
            return None
        return self.full_solve_s / self.multiscale_s

    def to_dict(self) -> dict:
        out = {
            "preprocess": self.preprocess_s,
            "initialTransfer": self.initial_transfer_s,
            "relocation": self.relocation_s,
            "multiscaleSolving": self.multiscale_s,
            "total": self.total_s,
        }
        if self.full_solve_s is not None:
            out["fullSolving"] = self.full_solve_s
            out["speedup"] = self.speedup
        return out
