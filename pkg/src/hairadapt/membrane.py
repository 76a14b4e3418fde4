"""Surface-embedded neo-Hookean membrane for hair-root relocation.

The scalp deforms only along the head surface: each scalp vertex carries 2D
chart coordinates u, its 3D position is the barycentric embedding inside a
host chart triangle, and the per-triangle deformation gradient F = d D^-1 is
therefore piecewise linear in u. The strain energy
    psi(F) = mu/2 (tr(F'F) - 2 - 2 ln J) + lambda/2 (ln J)^2,  J = |f1 x f2|
is minimized by projected Newton (per-triangle Hessians eigenvalue-clamped
to PSD) with backtracking line search on the true piecewise energy; host
triangles are re-resolved by chart walking after every accepted step.
Boundary conditions come from the hairline correspondence and are applied by
adaptive continuation so large edits stay inversion-free.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu, spsolve

from .chart import ChartError, ParamChart
from .meshutil import cotangent_weights
from .scalp import HairlineEdit, ScalpPatch, evaluate_curve_at

_J_MIN = 1e-12
_HESS_CLAMP = 1e-12


@dataclass
class MembraneMaterial:
    mu: float = 1.0
    lam: float = 1.0


@dataclass
class MembraneOptions:
    grad_tol_factor: float = 1e-8  # times (scalp area * mu)
    max_newton: int = 200
    max_halvings: int = 40
    min_substep: float = 1.0 / 64.0


@dataclass
class MembraneState:
    u: np.ndarray  # (Vs, 2) chart coordinates per scalp vertex
    host: np.ndarray  # (Vs,) chart face per vertex
    bary: np.ndarray  # (Vs, 3)
    x: np.ndarray  # (Vs, 3) embedded positions

    def copy(self) -> "MembraneState":
        return MembraneState(self.u.copy(), self.host.copy(), self.bary.copy(), self.x.copy())


@dataclass
class MembraneResult:
    state: MembraneState
    energy: float
    newton_iterations: int
    grad_norm: float
    substeps: int
    aborted: bool = False
    energy_trace: list[list[float]] = field(default_factory=list)  # per substep
    kink_stationary: bool = False  # stopped on a chart-edge kink, see _newton


def _rest_frames(patch: ScalpPatch) -> np.ndarray:
    """Per-triangle inverse rest matrices D^-1 (T, 2, 2) from an orthonormal
    in-plane frame of the undeformed triangle."""
    tri = patch.X[patch.faces]
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    l1 = np.linalg.norm(e1, axis=1)
    proj = np.einsum("ij,ij->i", e2, e1) / l1
    height = np.linalg.norm(np.cross(e2, e1), axis=1) / l1
    if np.any(np.abs(l1 * height) < 1e-14):
        raise ValueError("degenerate rest triangle in the scalp patch")
    D = np.zeros((len(tri), 2, 2))
    D[:, 0, 0] = l1
    D[:, 0, 1] = proj
    D[:, 1, 1] = height
    return np.linalg.inv(D)


def state_from_u(patch: ScalpPatch, chart: ParamChart, u: np.ndarray,
                 hosts: np.ndarray | None = None, clamp: bool = False) -> MembraneState:
    """Locate every scalp vertex in the chart and embed it on the head.

    Vertices still inside their previous host are resolved in one vectorized
    pass; only the ones that crossed an edge walk the chart.
    """
    n = len(u)
    host = np.empty(n, dtype=np.int64)
    bary = np.empty((n, 3))
    todo = np.arange(n)
    if hosts is not None:
        tri_u = chart.u[chart.patch.faces[hosts]]
        m0 = tri_u[:, 1] - tri_u[:, 0]
        m1 = tri_u[:, 2] - tri_u[:, 0]
        det = m0[:, 0] * m1[:, 1] - m0[:, 1] * m1[:, 0]
        r = u - tri_u[:, 0]
        l1 = (r[:, 0] * m1[:, 1] - r[:, 1] * m1[:, 0]) / det
        l2 = (m0[:, 0] * r[:, 1] - m0[:, 1] * r[:, 0]) / det
        b = np.column_stack([1.0 - l1 - l2, l1, l2])
        inside = b.min(axis=1) >= -1e-12
        host[inside] = hosts[inside]
        bc = np.clip(b[inside], 0.0, None)
        bary[inside] = bc / bc.sum(axis=1, keepdims=True)
        todo = np.flatnonzero(~inside)
    for i in todo:
        start = int(hosts[i]) if hosts is not None else None
        try:
            host[i], bary[i] = chart.locate(u[i], start_face=start)
        except ChartError:
            if not clamp:
                raise
            host[i], bary[i] = _clamp_to_chart(chart, u[i])
    tri = chart.patch.vertices[chart.patch.faces[host]]
    x = np.einsum("ij,ijk->ik", bary, tri)
    return MembraneState(u.copy(), host, bary, x)


def _clamp_to_chart(chart: ParamChart, point: np.ndarray) -> tuple[int, np.ndarray]:
    tri = chart.u[chart.patch.faces]
    m0 = tri[:, 1] - tri[:, 0]
    m1 = tri[:, 2] - tri[:, 0]
    det = m0[:, 0] * m1[:, 1] - m0[:, 1] * m1[:, 0]
    r = point - tri[:, 0]
    l1 = (r[:, 0] * m1[:, 1] - r[:, 1] * m1[:, 0]) / det
    l2 = (m0[:, 0] * r[:, 1] - m0[:, 1] * r[:, 0]) / det
    bary = np.column_stack([1.0 - l1 - l2, l1, l2])
    best = int(np.argmax(bary.min(axis=1)))
    b = np.clip(bary[best], 0.0, None)
    return best, b / b.sum()


def rest_state(patch: ScalpPatch, chart: ParamChart) -> MembraneState:
    """Undeformed state: every scalp vertex sits exactly on its head vertex
    (one-hot barycentric in an incident chart face), so x == X bit-exactly."""
    u = chart.u[patch.vertex_head].copy()
    incident = np.full(len(chart.patch.vertices), -1, dtype=np.int64)
    corner = np.zeros(len(chart.patch.vertices), dtype=np.int64)
    for f, vs in enumerate(chart.patch.faces):
        for c, v in enumerate(vs):
            if incident[v] < 0:
                incident[v] = f
                corner[v] = c
    hosts = incident[patch.vertex_head]
    bary = np.zeros((patch.n_vertices, 3))
    bary[np.arange(patch.n_vertices), corner[patch.vertex_head]] = 1.0
    return MembraneState(u, hosts, bary, patch.X.copy())


def deformation_gradient(patch: ScalpPatch, state: MembraneState, chart: ParamChart,
                         triangle: int, dinv: np.ndarray | None = None):
    """F (3x2) of one scalp triangle plus its constant Jacobian dvec(F)/du
    over the triangle's six chart coordinates (rows f1 then f2)."""
    if dinv is None:
        dinv = _rest_frames(patch)
    vs = patch.faces[triangle]
    d = np.column_stack([state.x[vs[1]] - state.x[vs[0]], state.x[vs[2]] - state.x[vs[0]]])
    F = d @ dinv[triangle]
    G = _vertex_jacobians(chart, state.host[vs])
    K = _f_jacobian(dinv[triangle], G)
    return F, K


def _vertex_jacobians(chart: ParamChart, hosts: np.ndarray) -> np.ndarray:
    """(n, 3, 2) Jacobians dx/du for vertices living in the given chart faces."""
    tri3 = chart.patch.vertices[chart.patch.faces[hosts]]
    tri_u = chart.u[chart.patch.faces[hosts]]
    E3 = np.stack([tri3[:, 1] - tri3[:, 0], tri3[:, 2] - tri3[:, 0]], axis=2)
    T2 = np.stack([tri_u[:, 1] - tri_u[:, 0], tri_u[:, 2] - tri_u[:, 0]], axis=2)
    return E3 @ np.linalg.inv(T2)


def _f_jacobian(dinv: np.ndarray, G: np.ndarray) -> np.ndarray:
    """K (6, 6): rows = (f1, f2), cols = (u_v0, u_v1, u_v2)."""
    K = np.zeros((6, 6))
    c1 = (-(dinv[0, 0] + dinv[1, 0]), dinv[0, 0], dinv[1, 0])
    c2 = (-(dinv[0, 1] + dinv[1, 1]), dinv[0, 1], dinv[1, 1])
    for v in range(3):
        K[0:3, 2 * v:2 * v + 2] = c1[v] * G[v]
        K[3:6, 2 * v:2 * v + 2] = c2[v] * G[v]
    return K


def _cross_mats(v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


class MembraneEnergy:
    """Energy / gradient / per-triangle Hessians over scalp chart coordinates."""

    def __init__(self, patch: ScalpPatch, chart: ParamChart,
                 material: MembraneMaterial | None = None):
        self.patch = patch
        self.chart = chart
        self.material = material or MembraneMaterial()
        self.dinv = _rest_frames(patch)
        rest_u = chart.u[patch.vertex_head]
        tri_u = rest_u[patch.faces]
        self.rest_sign = np.sign(_signed_areas(tri_u))
        # DOF scatter pattern: triangle t couples the 6 chart DOFs of its vertices
        dof = np.stack([2 * patch.faces + 0, 2 * patch.faces + 1], axis=2).reshape(-1, 6)
        self._rows = np.repeat(dof, 6, axis=1).ravel()
        self._cols = np.tile(dof, (1, 6)).ravel()
        self.n_dof = 2 * patch.n_vertices

    def _deformed_F(self, x: np.ndarray) -> np.ndarray:
        tri = x[self.patch.faces]
        d = np.stack([tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]], axis=2)
        return d @ self.dinv

    def value(self, state: MembraneState) -> float:
        tri_u = state.u[self.patch.faces]
        if np.any(_signed_areas(tri_u) * self.rest_sign <= 0):
            return np.inf
        F = self._deformed_F(state.x)
        f1, f2 = F[:, :, 0], F[:, :, 1]
        J = np.linalg.norm(np.cross(f1, f2), axis=1)
        if np.any(J <= _J_MIN):
            return np.inf
        ic = np.einsum("ij,ij->i", f1, f1) + np.einsum("ij,ij->i", f2, f2)
        mu, lam = self.material.mu, self.material.lam
        ln = np.log(J)
        psi = 0.5 * mu * (ic - 2.0) - mu * ln + 0.5 * lam * ln**2
        return float(np.dot(self.patch.areas, psi))

    def derivatives(self, state: MembraneState, clamp: bool = True):
        """(energy, gradient over all DOF, per-triangle Hessians, eigenvalue
        clamped to PSD unless `clamp` is disabled)."""
        mu, lam = self.material.mu, self.material.lam
        F = self._deformed_F(state.x)
        f1, f2 = F[:, :, 0], F[:, :, 1]
        c = np.cross(f1, f2)
        J = np.linalg.norm(c, axis=1)
        if np.any(J <= _J_MIN):
            raise FloatingPointError("derivatives requested at an inverted state")
        chat = c / J[:, None]
        ln = np.log(J)
        ic = np.einsum("ij,ij->i", f1, f1) + np.einsum("ij,ij->i", f2, f2)
        psi = 0.5 * mu * (ic - 2.0) - mu * ln + 0.5 * lam * ln**2
        energy = float(np.dot(self.patch.areas, psi))

        w = (lam * ln - mu) / J
        G1 = np.cross(f2, chat)
        G2 = np.cross(chat, f1)
        g_F = np.concatenate([mu * f1 + w[:, None] * G1, mu * f2 + w[:, None] * G2], axis=1)

        C1 = _cross_mats(f2)
        C2 = _cross_mats(f1)
        Ch = _cross_mats(chat)
        eye = np.broadcast_to(np.eye(3), C1.shape)
        M = (eye - chat[:, :, None] * chat[:, None, :]) / J[:, None, None]
        B11 = -C1 @ M @ C1
        B12 = -Ch + C1 @ M @ C2
        B21 = Ch + C2 @ M @ C1
        B22 = -C2 @ M @ C2
        a = (lam * (1.0 - ln) + mu) / J**2
        Gvec = np.concatenate([G1, G2], axis=1)
        H_F = np.zeros((len(F), 6, 6))
        H_F[:, :3, :3] = B11
        H_F[:, :3, 3:] = B12
        H_F[:, 3:, :3] = B21
        H_F[:, 3:, 3:] = B22
        H_F *= w[:, None, None]
        H_F += a[:, None, None] * Gvec[:, :, None] * Gvec[:, None, :]
        H_F += mu * np.broadcast_to(np.eye(6), H_F.shape)

        # chain to chart coordinates through the per-vertex embedding Jacobians
        Gv = _vertex_jacobians(self.chart, state.host)
        K = np.zeros((len(F), 6, 6))
        dinv = self.dinv
        coef1 = np.stack([-(dinv[:, 0, 0] + dinv[:, 1, 0]), dinv[:, 0, 0], dinv[:, 1, 0]], axis=1)
        coef2 = np.stack([-(dinv[:, 0, 1] + dinv[:, 1, 1]), dinv[:, 0, 1], dinv[:, 1, 1]], axis=1)
        for v in range(3):
            gv = Gv[self.patch.faces[:, v]]
            K[:, 0:3, 2 * v:2 * v + 2] = coef1[:, v, None, None] * gv
            K[:, 3:6, 2 * v:2 * v + 2] = coef2[:, v, None, None] * gv

        A = self.patch.areas
        grad_tri = np.einsum("tfu,tf->tu", K, g_F) * A[:, None]
        H_tri = np.einsum("tfu,tfg,tgw->tuw", K, H_F, K) * A[:, None, None]

        grad = np.zeros(self.n_dof)
        dof = np.stack([2 * self.patch.faces + 0, 2 * self.patch.faces + 1], axis=2).reshape(-1, 6)
        np.add.at(grad, dof.ravel(), grad_tri.ravel())

        if clamp:
            evals, evecs = np.linalg.eigh(H_tri)
            evals = np.maximum(evals, _HESS_CLAMP)
            H_tri = np.einsum("tij,tj,tkj->tik", evecs, evals, evecs)
        return energy, grad, H_tri

    def assemble_hessian(self, H_tri: np.ndarray) -> sparse.csc_matrix:
        return sparse.csc_matrix(
            (H_tri.ravel(), (self._rows, self._cols)), shape=(self.n_dof, self.n_dof)
        )


def _signed_areas(tri_u: np.ndarray) -> np.ndarray:
    return 0.5 * (
        (tri_u[:, 1, 0] - tri_u[:, 0, 0]) * (tri_u[:, 2, 1] - tri_u[:, 0, 1])
        - (tri_u[:, 1, 1] - tri_u[:, 0, 1]) * (tri_u[:, 2, 0] - tri_u[:, 0, 0])
    )


def hairline_targets(patch: ScalpPatch, chart: ParamChart, front: np.ndarray,
                     back: np.ndarray, edit: HairlineEdit, curve_params: np.ndarray,
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Chart-space Dirichlet targets: front vertices follow the edit curve at
    their matched parameters, back vertices stay at their rest coordinates."""
    lookup = patch.head.parent_face_index()
    try:
        head_faces = np.asarray([lookup[int(f)] for f in edit.curve_faces], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"edit curve leaves the head patch (face {exc})") from exc
    curve_u = chart.surface_point_u(head_faces, edit.curve_bary)
    pos3 = np.einsum(
        "ij,ijk->ik", edit.curve_bary, patch.head.vertices[patch.head.faces[head_faces]]
    )
    seg = np.linalg.norm(np.diff(pos3, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if cum[-1] <= 0:
        raise ValueError("edit curve has zero length")
    curve_t = cum / cum[-1]
    front_u = evaluate_curve_at(curve_params, curve_u, curve_t)

    rest_u = chart.u[patch.vertex_head]
    dirichlet = np.concatenate([front, back[1:-1]])
    targets = np.concatenate([front_u, rest_u[back[1:-1]]])
    return dirichlet, targets


def solve_membrane(patch: ScalpPatch, chart: ParamChart, dirichlet: np.ndarray,
                   targets_u: np.ndarray, material: MembraneMaterial | None = None,
                   options: MembraneOptions | None = None) -> MembraneResult:
    """Projected Newton with continuation on the boundary displacement."""
    material = material or MembraneMaterial()
    options = options or MembraneOptions()
    energy = MembraneEnergy(patch, chart, material)
    for t in targets_u:  # boundary targets must be embeddable
        chart.locate(t)

    state = rest_state(patch, chart)
    rest_targets = state.u[dirichlet].copy()
    # targets within float noise of the rest hairline are the same points;
    # snapping keeps an identity edit an exact no-op
    targets_u = np.where(np.abs(targets_u - rest_targets) < 1e-12,
                         rest_targets, targets_u)
    grad_tol = options.grad_tol_factor * patch.total_area() * material.mu

    free_mask = np.ones(2 * patch.n_vertices, dtype=bool)
    free_mask[2 * dirichlet] = False
    free_mask[2 * dirichlet + 1] = False
    free = np.flatnonzero(free_mask)

    total_newton = 0
    substeps = 0
    done = 0.0
    step = 1.0
    aborted = False
    kink = False
    trace: list[list[float]] = []
    while done < 1.0 - 1e-12:
        t_try = min(1.0, done + step)
        boundary = rest_targets + t_try * (targets_u - rest_targets)
        trial = state.copy()
        if np.array_equal(boundary, state.u[dirichlet]):
            valid = True  # boundary unchanged: no relocation pass needed
        else:
            trial.u[dirichlet] = boundary
            try:
                trial = state_from_u(patch, chart, trial.u, hosts=trial.host)
                valid = np.isfinite(energy.value(trial))
            except ChartError:
                valid = False
        if valid:
            sub_trace: list[float] = []
            trial, iters, at_kink = _newton(energy, trial, free, grad_tol, options,
                                            trace=sub_trace)
            trace.append(sub_trace)
            state = trial
            done = t_try
            substeps += 1
            total_newton += iters
            kink |= at_kink
            step = min(1.0, step * 2.0)
            continue
        step *= 0.5
        if step < options.min_substep:
            warnings.warn(
                "membrane boundary continuation stalled; returning last valid state",
                stacklevel=2,
            )
            aborted = True
            break

    e, grad, _ = energy.derivatives(state)
    return MembraneResult(state, e, total_newton,
                          float(np.abs(grad[free]).max(initial=0.0)),
                          substeps, aborted, trace, kink)


def _line_search(energy: MembraneEnergy, state: MembraneState, free: np.ndarray,
                 direction: np.ndarray, e_cur: float, options: MembraneOptions):
    patch, chart = energy.patch, energy.chart
    alpha = 1.0
    for _ in range(options.max_halvings):
        u_try = state.u.copy()
        u_try.reshape(-1)[free] += alpha * direction
        try:
            trial = state_from_u(patch, chart, u_try, hosts=state.host)
        except ChartError:
            alpha *= 0.5
            continue
        e_try = energy.value(trial)
        if np.isfinite(e_try) and e_try < e_cur:
            return trial, e_try
        alpha *= 0.5
    return None


def _nudged_hosts(energy: MembraneEnergy, state: MembraneState, free: np.ndarray,
                  direction: np.ndarray) -> MembraneState | None:
    """Re-resolve hosts a tiny step along the direction. Vertices sitting
    exactly on chart vertices/edges are kinks of the piecewise energy; the
    derivatives must come from the piece the step is about to enter."""
    eps = 1e-7 / max(float(np.abs(direction).max()), 1e-30)
    u_probe = state.u.copy()
    u_probe.reshape(-1)[free] += eps * direction
    try:
        probed = state_from_u(energy.patch, energy.chart, u_probe, hosts=state.host)
    except ChartError:
        return None
    if np.array_equal(probed.host, state.host):
        return None
    chart = energy.chart
    host = probed.host
    bary = np.empty_like(state.bary)
    for i in range(len(host)):
        bary[i] = chart.face_bary(int(host[i]), state.u[i])
    tri = chart.patch.vertices[chart.patch.faces[host]]
    x = np.einsum("ij,ijk->ik", bary, tri)
    return MembraneState(state.u.copy(), host, bary, x)


def _newton(energy: MembraneEnergy, state: MembraneState, free: np.ndarray,
            grad_tol: float, options: MembraneOptions,
            trace: list[float] | None = None) -> tuple[MembraneState, int, bool]:
    """Projected Newton on the fixed-boundary energy.

    The embedding is piecewise linear, so a minimizer may sit exactly on a
    chart edge where one-sided gradients cannot reach the smooth tolerance.
    When neither the current piece's step nor the step of the piece being
    entered (host nudge) can decrease the energy, the iterate is stationary
    in the nonsmooth sense and reported as such."""
    e_cur, grad, H_tri = energy.derivatives(state)
    for it in range(options.max_newton):
        g_free = grad[free]
        if np.abs(g_free).max(initial=0.0) <= grad_tol:
            return state, it, False
        H = energy.assemble_hessian(H_tri)
        H_ff = H[free][:, free]
        try:
            direction = splu(H_ff.tocsc()).solve(-g_free)
        except RuntimeError:
            direction = spsolve(
                (H_ff + 1e-9 * sparse.eye(len(free))).tocsc(), -g_free
            )
        accepted = _line_search(energy, state, free, direction, e_cur, options)
        if accepted is None:
            # kink escape: rebuild derivatives from the entered piece
            nudged = _nudged_hosts(energy, state, free, direction)
            if nudged is not None:
                e2, grad2, H2 = energy.derivatives(nudged)
                H = energy.assemble_hessian(H2)
                H_ff = H[free][:, free]
                try:
                    direction = splu(H_ff.tocsc()).solve(-grad2[free])
                except RuntimeError:
                    direction = spsolve(
                        (H_ff + 1e-9 * sparse.eye(len(free))).tocsc(), -grad2[free]
                    )
                accepted = _line_search(energy, nudged, free, direction, e_cur, options)
        if accepted is None:
            return state, it, True
        state, e_cur = accepted
        if trace is not None:
            trace.append(e_cur)
        e_cur, grad, H_tri = energy.derivatives(state)
    return state, options.max_newton, False


@dataclass
class Relocation:
    """Relocated roots on the head surface plus the deformed scalp geometry."""

    positions: np.ndarray  # (R, 3)
    travel: np.ndarray  # (R,) Euclidean distance moved per root
    head_faces: np.ndarray  # (R,) host face in the head patch
    bary: np.ndarray  # (R, 3)
    deformed_x: np.ndarray  # (Vs, 3) deformed scalp vertex positions


def relocate_roots(state: MembraneState, patch: ScalpPatch) -> Relocation:
    """Move roots with their rest barycentric coordinates on the deformed
    scalp, project back onto the head surface, and report travel distances.

    Roots whose triangle did not deform at all stay bit-exactly in place
    (there is no discretization error to project away)."""
    rest_tri = patch.X[patch.faces[patch.root_faces]]
    old = np.einsum("ij,ijk->ik", patch.root_bary, rest_tri)
    def_tri = state.x[patch.faces[patch.root_faces]]
    moved = np.einsum("ij,ijk->ik", patch.root_bary, def_tri)
    _, faces, proj, bary = patch.head.queries.closest_points(moved)
    unmoved = np.all(def_tri == rest_tri, axis=(1, 2))
    proj[unmoved] = old[unmoved]
    r = np.linalg.norm(proj - old, axis=1)
    return Relocation(proj, r, faces, bary, state.x.copy())


# --- comparison baselines -------------------------------------------------


def _tps_kernel(r: np.ndarray) -> np.ndarray:
    out = np.zeros_like(r)
    nz = r > 0
    out[nz] = r[nz] ** 2 * np.log(r[nz])
    return out


def _tps_fit(seeds: np.ndarray, values: np.ndarray):
    """Thin-plate-spline interpolant with affine term; raises on coincident
    seeds (singular system)."""
    n, d = seeds.shape
    K = _tps_kernel(np.linalg.norm(seeds[:, None, :] - seeds[None, :, :], axis=2))
    P = np.column_stack([np.ones(n), seeds])
    sys = np.zeros((n + d + 1, n + d + 1))
    sys[:n, :n] = K
    sys[:n, n:] = P
    sys[n:, :n] = P.T
    rhs = np.zeros((n + d + 1, values.shape[1]))
    rhs[:n] = values
    try:
        sol = np.linalg.solve(sys, rhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular RBF system (coincident seeds?)") from exc
    w, a = sol[:n], sol[n:]

    def interp(points: np.ndarray) -> np.ndarray:
        Kp = _tps_kernel(np.linalg.norm(points[:, None, :] - seeds[None, :, :], axis=2))
        Pp = np.column_stack([np.ones(len(points)), points])
        return Kp @ w + Pp @ a

    return interp


def _farthest_interior_sample(patch: ScalpPatch, count: int) -> np.ndarray:
    interior = np.flatnonzero(~patch.boundary_mask())
    if interior.size == 0 or count == 0:
        return np.empty(0, dtype=np.int64)
    count = min(count, interior.size)
    pts = patch.X[interior]
    chosen = [0]
    d = np.linalg.norm(pts - pts[0], axis=1)
    for _ in range(count - 1):
        nxt = int(np.argmax(d))
        chosen.append(nxt)
        d = np.minimum(d, np.linalg.norm(pts - pts[nxt], axis=1))
    return interior[np.asarray(sorted(set(chosen)))]


def baseline_relocate(patch: ScalpPatch, chart: ParamChart, dirichlet: np.ndarray,
                      targets_u: np.ndarray, kind: str) -> Relocation:
    """Hair-root relocation with one of the alternative displacement models:
    'rbf3d' (TPS displacement field in 3D with reprojection), 'rbf2d' (TPS in
    chart space), or 'harmonic2d' (Laplace in chart space, same boundary
    conditions)."""
    rest_u = chart.u[patch.vertex_head]
    if kind == "harmonic2d":
        disp = _harmonic_2d(patch, rest_u, dirichlet, targets_u)
        u_new = rest_u + disp
        state = state_from_u(patch, chart, u_new, clamp=True)
        return relocate_roots(state, patch)
    if kind == "rbf2d":
        delta = targets_u - rest_u[dirichlet]
        interp = _tps_fit(rest_u[dirichlet], delta)
        disp = interp(rest_u)
        disp[dirichlet] = delta
        state = state_from_u(patch, chart, rest_u + disp, clamp=True)
        return relocate_roots(state, patch)
    if kind == "rbf3d":
        bpos, _, _ = chart.embed(targets_u)
        delta3 = bpos - patch.X[dirichlet]
        inner = _farthest_interior_sample(patch, max(4, len(dirichlet) // 4))
        seeds = np.vstack([patch.X[dirichlet], patch.X[inner]])
        values = np.vstack([delta3, np.zeros((len(inner), 3))])
        interp = _tps_fit(seeds, values)
        moved = patch.X + interp(patch.X)
        _, _, proj, _ = patch.head.queries.closest_points(moved)
        # hosts/bary are not meaningful for the 3D field; only x is consumed
        state = MembraneState(rest_u.copy(), np.zeros(len(proj), dtype=np.int64),
                              np.zeros((len(proj), 3)), proj)
        return relocate_roots(state, patch)
    raise ValueError(f"unknown baseline kind {kind!r}")


def _harmonic_2d(patch: ScalpPatch, rest_u: np.ndarray, dirichlet: np.ndarray,
                 targets_u: np.ndarray) -> np.ndarray:
    """Chart-space Laplace solve for the displacement with cotangent weights
    taken from the parameterized scalp geometry."""
    n = patch.n_vertices
    uv3 = np.column_stack([rest_u, np.zeros(n)])
    weights = cotangent_weights(uv3, patch.faces)
    fixed = np.zeros(n, dtype=bool)
    fixed[dirichlet] = True
    disp = np.zeros((n, 2))
    disp[dirichlet] = targets_u - rest_u[dirichlet]
    interior = np.flatnonzero(~fixed)
    if interior.size == 0:
        return disp
    index_of = -np.ones(n, dtype=np.int64)
    index_of[interior] = np.arange(len(interior))
    rows, cols, vals = [], [], []
    diag = np.zeros(len(interior))
    rhs = np.zeros((len(interior), 2))
    for (a, b), w in weights.items():
        for i, j in ((a, b), (b, a)):
            if fixed[i]:
                continue
            ii = index_of[i]
            diag[ii] += w
            if fixed[j]:
                rhs[ii] += w * disp[j]
            else:
                rows.append(ii)
                cols.append(index_of[j])
                vals.append(-w)
    rows.extend(range(len(interior)))
    cols.extend(range(len(interior)))
    vals.extend(diag)
    lap = sparse.csc_matrix((vals, (rows, cols)), shape=(len(interior),) * 2)
    disp[interior] = spsolve(lap, rhs).reshape(len(interior), 2)
    return disp
