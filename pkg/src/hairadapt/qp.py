"""Operator-splitting QP solver and the outer relinearization loop.

The inner solver is ADMM in the standard splitting
    minimize 0.5 x'Px + q'x  s.t.  Ax = z,  l <= z <= u,
with over-relaxation, residual-balanced penalty adaptation, and an
active-set polish step that recovers machine-precision solutions once the
active constraints are identified. Root equalities are eliminated by
variable substitution before splitting. Problems below a size threshold run
on a dense factorization fast path.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy import sparse
from scipy.sparse.linalg import splu

from .body import BodyModel
from .config import AdaptationConfig
from .energies import (
    QPProblem,
    QuadraticTerm,
    hair_body_terms,
    inter_strand_terms,
    penetration_constraints,
    strand_shape_terms,
)
from .features import LaplacianFeatureSet
from .hair import Hairstyle

DENSE_LIMIT = 512
_SIGMA = 1e-6
_ALPHA = 1.6
_RHO_MIN, _RHO_MAX = 1e-6, 1e6
_POLISH_DELTA = 1e-9
_INF = 1e30


@dataclass
class ADMMSettings:
    eps_primal: float = 1e-6
    eps_dual: float = 1e-6
    max_iters: int = 4000
    rho0: float = 1.0
    check_every: int = 25
    polish: bool = True
    eq_tol: float = 1e-9


@dataclass
class ADMMResult:
    x: np.ndarray
    y: np.ndarray
    iterations: int
    primal_residual: float
    dual_residual: float
    converged: bool
    polished: bool = False


class _KKT:
    """Factorization of [[P + sigma I, A'], [A, -1/rho I]], dense or sparse."""

    def __init__(self, P, A, rho, dense: bool):
        self.dense = dense
        n, m = P.shape[0], A.shape[0]
        self.n, self.m = n, m
        if dense:
            K = np.zeros((n + m, n + m))
            K[:n, :n] = P.toarray() if sparse.issparse(P) else P
            K[:n, :n] += _SIGMA * np.eye(n)
            if m:
                Ad = A.toarray() if sparse.issparse(A) else A
                K[:n, n:] = Ad.T
                K[n:, :n] = Ad
                K[n:, n:] = -np.diag(1.0 / rho)
            self._lu = sla.lu_factor(K)
        else:
            blocks = [[P + _SIGMA * sparse.eye(n), A.T],
                      [A, -sparse.diags(1.0 / rho)]] if m else None
            K = sparse.bmat(blocks, format="csc") if m else (
                P + _SIGMA * sparse.eye(n)
            ).tocsc()
            self._lu = splu(K)

    def solve(self, rhs):
        if self.dense:
            return sla.lu_solve(self._lu, rhs)
        return self._lu.solve(rhs)


def solve_box_qp(P, q, A, l, u, x0=None, y0=None,
                 settings: ADMMSettings | None = None) -> ADMMResult:
    """ADMM for min 0.5 x'Px + q'x s.t. l <= Ax <= u (entries may be +-inf)."""
    settings = settings or ADMMSettings()
    n = P.shape[0]
    m = A.shape[0] if A is not None else 0
    if A is None:
        A = sparse.csr_matrix((0, n))
        l = np.empty(0)
        u = np.empty(0)
    l = np.where(np.isfinite(l), l, -_INF)
    u = np.where(np.isfinite(u), u, _INF)

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    y = np.zeros(m) if y0 is None else np.asarray(y0, dtype=np.float64).copy()
    z = np.clip(A @ x, l, u) if m else np.empty(0)

    dense = n + m <= DENSE_LIMIT
    rho = np.full(m, settings.rho0)
    kkt = _KKT(P, A, rho, dense)

    def residuals():
        ax = A @ x if m else np.empty(0)
        px = P @ x
        aty = A.T @ y if m else 0.0
        r_p = float(np.max(np.abs(ax - z))) if m else 0.0
        r_d = float(np.max(np.abs(px + q + aty)))
        s_p = max(_norm_inf(ax), _norm_inf(z), 1.0)
        s_d = max(_norm_inf(px), _norm_inf(aty), _norm_inf(q), 1.0)
        return r_p, r_d, s_p, s_d

    def try_polish():
        res = _polish(P, q, A, l, u, x, y, z, dense)
        return res

    # when polish cannot certify the active set, tighten and keep iterating
    eps_p, eps_d = settings.eps_primal, settings.eps_dual
    tighten_left = 2
    first_pass = None

    r_p, r_d, s_p, s_d = residuals()
    best = ADMMResult(x.copy(), y.copy(), 0, r_p, r_d, False)
    converged_now = r_p <= eps_p * s_p and r_d <= eps_d * s_d

    rhs = np.empty(n + m)
    it = 0
    while True:
        if converged_now:
            result = ADMMResult(x.copy(), y.copy(), it, r_p, r_d, True)
            if not settings.polish:
                return result
            pol = try_polish()
            if pol is not None:
                pol.iterations = it
                return pol
            first_pass = result  # tightest converged-but-unpolished iterate
            if tighten_left == 0:
                return first_pass
            tighten_left -= 1
            eps_p = max(eps_p * 1e-3, 1e-12)
            eps_d = max(eps_d * 1e-3, 1e-12)
            converged_now = False
            continue
        if it >= settings.max_iters:
            break
        it += 1
        rhs[:n] = _SIGMA * x - q
        if m:
            rhs[n:] = z - y / rho
        sol = kkt.solve(rhs)
        x_t = sol[:n]
        x_new = _ALPHA * x_t + (1 - _ALPHA) * x
        if m:
            nu = sol[n:]
            z_t = z + (nu - y) / rho
            z_rel = _ALPHA * z_t + (1 - _ALPHA) * z
            z_new = np.clip(z_rel + y / rho, l, u)
            y = y + rho * (z_rel - z_new)
            z = z_new
        x = x_new

        if it % settings.check_every == 0 or it == settings.max_iters:
            r_p, r_d, s_p, s_d = residuals()
            if r_p / s_p + r_d / s_d < best.primal_residual + best.dual_residual:
                best = ADMMResult(x.copy(), y.copy(), it, r_p, r_d, False)
            converged_now = r_p <= eps_p * s_p and r_d <= eps_d * s_d
            if m and not converged_now:
                ratio = (r_p / s_p) / max(r_d / s_d, 1e-16)
                scale = np.sqrt(max(ratio, 1e-12))
                if scale > 5.0 or scale < 0.2:
                    rho = np.clip(rho * scale, _RHO_MIN, _RHO_MAX)
                    kkt = _KKT(P, A, rho, dense)

    if first_pass is not None:
        return first_pass
    if settings.polish:
        pol = try_polish()
        if pol is not None:
            pol.iterations = it
            return pol
    best.iterations = it
    return best


def _norm_inf(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


def _polish(P, q, A, l, u, x, y, z, dense) -> ADMMResult | None:
    """Solve the KKT system restricted to the detected active set; accept only
    if the candidate is primal feasible with correctly signed duals."""
    m = A.shape[0]
    n = P.shape[0]
    gap_l = np.abs(z - l)
    gap_u = np.abs(u - z)
    y_eps = 1e-12 * max(1.0, _norm_inf(y))  # ignore numerically-zero duals
    low = (y < -y_eps) | ((gap_l < gap_u) & (gap_l < 1e-7 * np.maximum(1.0, np.abs(l))))
    upp = (y > y_eps) | ((gap_u <= gap_l) & (gap_u < 1e-7 * np.maximum(1.0, np.abs(u))))
    low &= l > -_INF
    upp &= u < _INF
    act = np.flatnonzero(low | upp)
    bounds = np.where(low[act], l[act], u[act])
    ma = len(act)

    A_act = A[act]
    if dense or not sparse.issparse(P):
        Pd = P.toarray() if sparse.issparse(P) else P
        Ad = A_act.toarray() if sparse.issparse(A_act) else A_act
        K = np.zeros((n + ma, n + ma))
        K[:n, :n] = Pd + _POLISH_DELTA * np.eye(n)
        if ma:
            K[:n, n:] = Ad.T
            K[n:, :n] = Ad
            K[n:, n:] = -_POLISH_DELTA * np.eye(ma)
        try:
            lu = sla.lu_factor(K)
        except sla.LinAlgError:
            return None
        solve = lambda r: sla.lu_solve(lu, r)
        K_exact = np.zeros((n + ma, n + ma))
        K_exact[:n, :n] = Pd
        if ma:
            K_exact[:n, n:] = Ad.T
            K_exact[n:, :n] = Ad
        apply_exact = lambda t: K_exact @ t
    else:
        Kreg = sparse.bmat(
            [[P + _POLISH_DELTA * sparse.eye(n), A_act.T],
             [A_act, -_POLISH_DELTA * sparse.eye(ma)]] if ma else None,
            format="csc",
        ) if ma else (P + _POLISH_DELTA * sparse.eye(n)).tocsc()
        try:
            lu = splu(Kreg)
        except RuntimeError:
            return None
        solve = lu.solve
        Kex = sparse.bmat(
            [[P, A_act.T], [A_act, None]], format="csr"
        ) if ma else P.tocsr()
        apply_exact = lambda t: Kex @ t

    rhs = np.concatenate([-q, bounds]) if ma else -q
    t = solve(rhs)
    for _ in range(3):  # iterative refinement against the unregularized KKT
        t = t + solve(rhs - apply_exact(t))
    if not np.all(np.isfinite(t)):
        return None
    x_pol = t[:n]
    y_pol = np.zeros(m)
    if ma:
        y_pol[act] = t[n:]

    ax = A @ x_pol if m else np.empty(0)
    feas = 1e-9 * max(1.0, _norm_inf(ax))
    if m and (np.any(ax < l - feas) or np.any(ax > u + feas)):
        return None
    if ma:
        ya = t[n:]
        if np.any(ya[low[act]] > 1e-9) or np.any(ya[upp[act]] < -1e-9):
            return None
    r_p = _norm_inf(np.clip(l - ax, 0, None) + np.clip(ax - u, 0, None)) if m else 0.0
    r_d = _norm_inf(P @ x_pol + q + (A.T @ y_pol if m else 0.0))
    z_pol = np.clip(ax, l, u)
    res = ADMMResult(x_pol, y_pol, 0, r_p, r_d, True, polished=True)
    res.z = z_pol  # type: ignore[attr-defined]
    return res


def solve_qp(problem: QPProblem, warm_start: np.ndarray | None = None,
             warm_duals: np.ndarray | None = None,
             settings: ADMMSettings | None = None) -> tuple[np.ndarray, ADMMResult]:
    """Solve an assembled problem; equality-fixed variables are substituted
    out, the box QP is solved over the free ones, and the full vector is
    reassembled. Returns particle positions (N, 3) and the solver result."""
    settings = settings or ADMMSettings()
    n = problem.n
    fixed = problem.eq_indices
    free = np.setdiff1d(np.arange(n), fixed, assume_unique=False)
    x_fix = problem.eq_values

    P = problem.P
    q = problem.q
    P_ff = P[free][:, free].tocsc()
    q_f = q[free] + np.asarray(P[free][:, fixed] @ x_fix).ravel()
    A = problem.A.tocsc()
    A_f = A[:, free].tocsr()
    shift = np.asarray(A[:, fixed] @ x_fix).ravel() if len(fixed) else 0.0
    lower = problem.lower - shift
    upper = np.full(len(lower), np.inf)

    x0 = None
    if warm_start is not None:
        x0 = np.asarray(warm_start, dtype=np.float64).ravel()[free]
    res = solve_box_qp(P_ff, q_f, A_f, lower, upper, x0=x0, y0=warm_duals,
                       settings=settings)
    full = np.empty(n)
    full[free] = res.x
    full[fixed] = x_fix
    res.x = full
    return full.reshape(-1, 3), res


@dataclass
class SolverReport:
    """Convergence evidence for one adaptation run."""

    outer_iterations: int = 0
    objective_values: list[float] = field(default_factory=list)
    displacement_values: list[float] = field(default_factory=list)
    primal_residual: float = 0.0
    dual_residual: float = 0.0
    max_violation: float = 0.0
    wall_time: float = 0.0
    converged: bool = False
    admm_iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "outerIterations": self.outer_iterations,
            "objectiveValues": self.objective_values,
            "displacementValues": self.displacement_values,
            "primalResidual": self.primal_residual,
            "dualResidual": self.dual_residual,
            "maxViolation": self.max_violation,
            "wallTime": self.wall_time,
            "converged": self.converged,
            "admmIterations": self.admm_iterations,
        }


class AdaptationDiverged(RuntimeError):
    pass


def iterate_adaptation(p_hat: np.ndarray, source: Hairstyle,
                       features: LaplacianFeatureSet, target: BodyModel,
                       config: AdaptationConfig,
                       root_targets: np.ndarray | None = None,
                       gamma: np.ndarray | None = None,
                       initial_positions: np.ndarray | None = None,
                       disable_term: str | None = None,
                       ) -> tuple[np.ndarray, SolverReport]:
    """Outer loop: freeze nonlinear quantities at the iterate, assemble the
    QP, solve warm-started, repeat until the update stalls and the
    penetration rows rebuilt at the final iterate hold.

    `p_hat` anchors the proximity energy; `initial_positions` (default the
    same) seeds the iteration. `disable_term` drops one energy term for
    ablation studies ("strand_shape", "inter_strand", or "hair_body")."""
    from .energies import assemble_qp  # local import keeps module load light

    t_start = time.perf_counter()
    n = source.n_particles
    roots = source.root_indices
    non_root = np.flatnonzero(~source.root_mask)
    if root_targets is None:
        root_targets = p_hat[roots]

    weights = {
        "strand_shape": 1.0,
        "inter_strand": config.alpha,
        "hair_body": config.beta,
    }
    if disable_term is not None:
        if disable_term not in weights:
            raise ValueError(f"unknown term {disable_term!r}")
        weights[disable_term] = 0.0

    inter = inter_strand_terms(features, gamma=gamma)
    body_term = hair_body_terms(p_hat, gamma=gamma)
    settings = ADMMSettings(
        eps_primal=config.tol_primal, eps_dual=config.tol_dual,
        max_iters=config.max_admm_iters,
    )
    tol_outer = config.tol_outer_rel * source.bounding_box_diagonal()

    p = (initial_positions if initial_positions is not None else p_hat).copy()
    p[roots] = root_targets
    report = SolverReport()
    duals = None
    prev_obj = np.inf
    last_disp = np.inf
    for outer in range(config.max_outer):
        shape = strand_shape_terms(p, source)
        bound = None
        if config.penetration_cutoff and np.isfinite(last_disp):
            bound = 10.0 * config.eps_c + last_disp
        rows = penetration_constraints(p, target, config.eps_c, non_root, bound)
        problem = assemble_qp(
            [(weights["strand_shape"], shape), (weights["inter_strand"], inter),
             (weights["hair_body"], body_term)],
            n, rows, roots, root_targets, config,
        )
        if duals is not None and len(duals) != problem.A.shape[0]:
            duals = None
        p_new, res = solve_qp(problem, warm_start=p, warm_duals=duals, settings=settings)
        duals = res.y
        disp = float(np.max(np.linalg.norm(p_new - p, axis=1)))
        p = p_new
        obj = problem.objective(p)
        report.outer_iterations = outer + 1
        report.objective_values.append(obj)
        report.displacement_values.append(disp)
        report.primal_residual = res.primal_residual
        report.dual_residual = res.dual_residual
        report.admm_iterations += res.iterations
        last_disp = disp
        if obj > 10.0 * prev_obj and prev_obj > 0:
            raise AdaptationDiverged(
                f"objective grew from {prev_obj:.3e} to {obj:.3e} at outer {outer}"
            )
        prev_obj = min(prev_obj, obj)
        if disp < tol_outer:
            final_rows = penetration_constraints(p, target, config.eps_c, non_root)
            viol = float(np.max(final_rows.violation(p), initial=0.0))
            report.max_violation = viol
            if viol <= 1e-6:
                report.converged = True
                break
    else:
        final_rows = penetration_constraints(p, target, config.eps_c, non_root)
        report.max_violation = float(np.max(final_rows.violation(p), initial=0.0))
    report.wall_time = time.perf_counter() - t_start
    return p, report
