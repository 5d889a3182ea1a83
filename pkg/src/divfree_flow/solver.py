"""Linear solvers and time stepping.

Contains:
    factor_solve       -- direct sparse LU with a residual guarantee
    Factorization      -- reusable LU handle with the same guarantee
    static_condense    -- per-cell elimination of element-local DOFs
    FlowState          -- (t, element velocity, facet velocity, pressure)
    SaddleSystem       -- constrained, factorized M* = [[M+dt A, dt B],
                          [dt B^T, 0]] with a stale-use guard
    imex_flow_step     -- first-order IMEX update
                          x += dt M*^{-1} (D x + [F; 0]),
                          D = [[-C(u)-A, -B], [-B^T, 0]]
    ScalarSystem / imex_scalar_step -- implicit diffusion, explicit
                          convection/source/sink for transported scalars
    BulkController     -- integral controller driving the streamwise
                          body force to match a target bulk velocity
    bulk_velocity      -- area-averaged streamwise velocity
    relative_change    -- steady-state detector metric
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import apply_dirichlet

RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    """Raised on singular systems, stale factorizations, or NaNs."""


# ---------------------------------------------------------------------------
# direct solves


class Factorization:
    """Sparse LU handle; every solve is verified to RESIDUAL_TOL."""

    def __init__(self, A):
        self.A = A.tocsc()
        self._norm_A = spla.norm(self.A, np.inf)
        try:
            self._lu = spla.splu(self.A)
        except RuntimeError as exc:  # singular factorization
            raise SolverError(f"singular factorization: {exc}") from exc

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, float)
        x = self._lu.solve(rhs)
        res = np.linalg.norm(self.A @ x - rhs)
        if not np.all(np.isfinite(x)):
            raise SolverError("non-finite solution from factorization")
        # backward-error check: residual relative to ||A|| ||x|| + ||b||
        scale = self._norm_A * np.linalg.norm(x) + np.linalg.norm(rhs)
        if res > RESIDUAL_TOL * max(scale, 1.0):
            raise SolverError(
                f"linear solve residual {res:.3e} exceeds tolerance "
                f"{RESIDUAL_TOL:.0e} (scale = {scale:.3e})"
            )
        return x


def factor_solve(A, rhs) -> np.ndarray:
    """One-shot direct solve with residual check."""
    return Factorization(sp.csr_matrix(A)).solve(rhs)


# ---------------------------------------------------------------------------
# static condensation


class CondensedSystem:
    """Schur complement on retained DOFs after eliminating disjoint
    per-cell condensable blocks."""

    def __init__(self, A: sp.csr_matrix, cond_cells):
        A = sp.csr_matrix(A)
        n = A.shape[0]
        cond_cells = [np.asarray(c, int) for c in cond_cells if len(c)]
        cond = (
            np.concatenate(cond_cells) if cond_cells else np.zeros(0, int)
        )
        if len(np.unique(cond)) != len(cond):
            raise SolverError("condensable DOFs must be disjoint per cell")
        mask = np.zeros(n, bool)
        mask[cond] = True
        self.retained = np.flatnonzero(~mask)
        self.condensed = cond
        self.n = n

        if len(cond) == 0:
            self.schur = A
            self._inv_cc = None
            self._A_rc = None
            self._A_cr = None
            self._factor = Factorization(A)
            self._A_full = A
            return

        pos = np.full(n, -1, dtype=int)
        pos[cond] = np.arange(len(cond))
        rows, cols, vals = [], [], []
        for cell in cond_cells:
            blk = A[np.ix_(cell, cell)].toarray()
            try:
                inv = np.linalg.inv(blk)
            except np.linalg.LinAlgError as exc:
                raise SolverError(f"singular local block: {exc}") from exc
            p = pos[cell]
            r, c = np.meshgrid(p, p, indexing="ij")
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(inv.ravel())
        inv_cc = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(len(cond), len(cond)),
        ).tocsr()

        A_rr = A[np.ix_(self.retained, self.retained)]
        A_rc = A[np.ix_(self.retained, cond)]
        A_cr = A[np.ix_(cond, self.retained)]
        self.schur = (A_rr - A_rc @ inv_cc @ A_cr).tocsr()
        self._inv_cc = inv_cc
        self._A_rc = A_rc.tocsr()
        self._A_cr = A_cr.tocsr()
        self._factor = Factorization(self.schur)
        self._A_full = A
        self._norm_full = spla.norm(A, np.inf)

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, float)
        x = np.empty(self.n)
        if self._inv_cc is None:
            return self._factor.solve(rhs)
        b_c = rhs[self.condensed]
        b_r = rhs[self.retained] - self._A_rc @ (self._inv_cc @ b_c)
        x_r = self._factor.solve(b_r)
        x[self.retained] = x_r
        x[self.condensed] = self._inv_cc @ (b_c - self._A_cr @ x_r)
        res = np.linalg.norm(self._A_full @ x - rhs)
        scale = self._norm_full * np.linalg.norm(x) + np.linalg.norm(rhs)
        if res > RESIDUAL_TOL * max(scale, 1.0):
            raise SolverError(f"condensed solve residual {res:.3e} too large")
        return x


def static_condense(A, cond_cells) -> CondensedSystem:
    """Eliminate per-cell condensable DOF blocks; `cond_cells` lists the
    global condensable indices of each cell (disjoint across cells)."""
    return CondensedSystem(A, cond_cells)


# ---------------------------------------------------------------------------
# flow state and saddle system


@dataclass
class FlowState:
    t: float
    u_elem: np.ndarray
    u_facet: np.ndarray  # empty for Taylor-Hood
    p: np.ndarray

    @property
    def u(self) -> np.ndarray:
        if len(self.u_facet) == 0:
            return self.u_elem
        return np.concatenate([self.u_elem, self.u_facet])

    def check_finite(self):
        for name in ("u_elem", "u_facet", "p"):
            v = getattr(self, name)
            if len(v) and not np.all(np.isfinite(v)):
                raise SolverError(f"non-finite values in {name} at t = {self.t}")

    def with_vector(self, u_full, p, t) -> "FlowState":
        ne = len(self.u_elem)
        return FlowState(
            t=t,
            u_elem=np.asarray(u_full[:ne], float),
            u_facet=np.asarray(u_full[ne:], float),
            p=np.asarray(p, float),
        )


class SaddleSystem:
    """Factorized M* = [[M + dt A, dt B], [dt B^T, 0]] with Dirichlet
    constraints and one pinned pressure DOF.

    The factorization is valid for one (dt, A) pair; whenever the
    viscosity (hence A) changes the caller must build a new system.
    `invalidate()` marks the factorization stale; solving a stale system
    is a hard error.
    """

    def __init__(self, M, A, B, dt, dirichlet_u, pressure_pin=0, cond_cells=None):
        if dt <= 0.0:
            raise SolverError(f"time step must be positive, got {dt}")
        self.dt = float(dt)
        self.n_u = A.shape[0]
        self.n_p = B.shape[1]
        self.A = sp.csr_matrix(A)
        self.B = sp.csr_matrix(B)
        self.M = sp.csr_matrix(M)
        Mstar = sp.bmat(
            [
                [self.M + dt * self.A, dt * self.B],
                [dt * self.B.T, None],
            ],
            format="csr",
        )
        self.mask = np.zeros(self.n_u + self.n_p, bool)
        self.mask[: self.n_u] = np.asarray(dirichlet_u, bool)
        if pressure_pin is not None:
            self.mask[self.n_u + pressure_pin] = True
        Mc = apply_dirichlet(Mstar, self.mask)
        if cond_cells is not None:
            self._solver = static_condense(Mc, cond_cells)
        else:
            self._solver = Factorization(Mc)
        self._valid = True

    def invalidate(self):
        self._valid = False

    def solve(self, rhs) -> np.ndarray:
        if not self._valid:
            raise SolverError(
                "stale factorization: the viscosity changed; rebuild the "
                "saddle system before stepping"
            )
        r = np.asarray(rhs, float).copy()
        r[self.mask] = 0.0
        return self._solver.solve(r)


def imex_flow_step(state: FlowState, sys: SaddleSystem, C, F=None) -> FlowState:
    """One first-order IMEX step: implicit viscous/pressure, explicit
    convection C = C(u^n); F is the velocity load vector (body force)."""
    state.check_finite()
    u, p = state.u, state.p
    dt = sys.dt
    r_u = -(C @ u) - sys.A @ u - sys.B @ p
    if F is not None:
        r_u = r_u + F
    r_p = -(sys.B.T @ u)
    rhs = dt * np.concatenate([r_u, r_p])
    delta = sys.solve(rhs)
    if not np.all(np.isfinite(delta)):
        raise SolverError(f"NaN in IMEX update at t = {state.t}")
    new = state.with_vector(
        u + delta[: sys.n_u], p + delta[sys.n_u :], state.t + dt
    )
    new.check_finite()
    return new


# ---------------------------------------------------------------------------
# scalar IMEX


class ScalarSystem:
    """Factorized (M + dt A_diff) with Dirichlet rows for a transported
    scalar; same staleness contract as SaddleSystem."""

    def __init__(self, M, A_diff, dt, dirichlet_mask, extra_implicit=None):
        if dt <= 0.0:
            raise SolverError(f"time step must be positive, got {dt}")
        self.dt = float(dt)
        self.M = sp.csr_matrix(M)
        self.mask = np.asarray(dirichlet_mask, bool)
        lhs = self.M + dt * sp.csr_matrix(A_diff)
        if extra_implicit is not None:
            lhs = lhs + dt * sp.csr_matrix(extra_implicit)
        keep = sp.diags((~self.mask).astype(float))
        lhs = keep @ lhs + sp.diags(self.mask.astype(float))
        self._factor = Factorization(lhs.tocsr())
        self._valid = True

    def invalidate(self):
        self._valid = False

    def solve(self, rhs):
        if not self._valid:
            raise SolverError("stale scalar factorization; rebuild after viscosity update")
        return self._factor.solve(rhs)


def imex_scalar_step(
    phi, sys: ScalarSystem, C=None, explicit_rhs=None, dirichlet_values=None
) -> np.ndarray:
    """(M + dt A_diff) phi^{n+1} = M phi^n + dt (-C phi^n + explicit_rhs)
    with Dirichlet values imposed directly."""
    phi = np.asarray(phi, float)
    if not np.all(np.isfinite(phi)):
        raise SolverError("non-finite scalar state")
    expl = np.zeros_like(phi)
    if C is not None:
        expl -= C @ phi
    if explicit_rhs is not None:
        expl += explicit_rhs
    rhs = sys.M @ phi + sys.dt * expl
    if dirichlet_values is None:
        rhs[sys.mask] = 0.0
    else:
        rhs[sys.mask] = np.asarray(dirichlet_values, float)[sys.mask]
    out = sys.solve(rhs)
    if not np.all(np.isfinite(out)):
        raise SolverError("NaN in scalar IMEX update")
    return out


# ---------------------------------------------------------------------------
# bulk-flow controller and diagnostics


@dataclass
class BulkController:
    """Drives the streamwise body force so the measured bulk velocity
    approaches the target.

    The normalized error err = (target - measured)/target is applied
    multiplicatively: force *= 1 + gain * err.  Each correction persists
    in the force state (integral action on the accumulated error), and a
    zero error leaves the force unchanged.
    """

    target_ub: float
    gain: float = 0.5
    force: float = 1.0
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.target_ub <= 0.0:
            raise SolverError("target bulk velocity must be positive")

    def update(self, measured_ub: float) -> float:
        err = (self.target_ub - measured_ub) / self.target_ub
        self.force *= 1.0 + self.gain * err
        self.history.append((measured_ub, self.force))
        return self.force

    def update_momentum(self, measured_ub: float, dt: float, relax: float = 0.2) -> float:
        """Momentum-based correction for marching runs.

        The uniform body force is shifted by the measured change of the
        bulk velocity over the step plus a relaxed pull toward the
        target: dG = [(ub_prev - ub) + relax * (target - ub)] / dt.  The
        first term cancels the observed bulk acceleration (stable even
        when the frictional response lags the step), the second drains
        the remaining offset over ~1/relax steps."""
        prev = self.history[-1][0] if self.history else self.target_ub
        self.force += (
            (prev - measured_ub) + relax * (self.target_ub - measured_ub)
        ) / dt
        self.history.append((measured_ub, self.force))
        return self.force


def bulk_velocity(space, u_coef, mesh=None) -> float:
    """Area-averaged streamwise velocity (1/|Omega|) int u_1 dx."""
    from .quadrature import physical_cell_rule

    mesh = mesh or space.mesh
    total = 0.0
    area = 0.0
    for c in range(mesh.n_cells):
        pts, w = physical_cell_rule(mesh.vertices[mesh.cells[c]], 2 * space.order + 1)
        phi = space.tabulate(c, pts)
        vals = np.einsum("qid,i->qd", phi, u_coef[space.cell_dofs(c)])
        total += float(vals[:, 0] @ w)
        area += float(w.sum())
    return total / area


def kinetic_energy(M, u_coef) -> float:
    """E = (1/2) u^T M u for the element mass matrix."""
    return 0.5 * float(u_coef @ (M @ u_coef))


def divergence_norm(space, u_coef, rel=True) -> float:
    """Element-wise L2 norm of div(u); relative to ||u|| if rel."""
    from .quadrature import physical_cell_rule

    mesh = space.mesh
    div2 = 0.0
    u2 = 0.0
    for c in range(mesh.n_cells):
        pts, w = physical_cell_rule(mesh.vertices[mesh.cells[c]], 2 * space.order + 1)
        loc = u_coef[space.cell_dofs(c)]
        d = np.einsum("qi,i->q", space.tabulate_div(c, pts), loc)
        v = np.einsum("qid,i->qd", space.tabulate(c, pts), loc)
        div2 += float((d**2) @ w)
        u2 += float(np.einsum("qd,qd,q->", v, v, w))
    div = np.sqrt(div2)
    if not rel:
        return div
    return div / max(np.sqrt(u2), 1e-300)


def relative_change(a, b) -> float:
    """Steady-state metric: ||a - b|| / max(||b||, tiny)."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
