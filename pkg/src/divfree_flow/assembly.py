"""Sparse assembly of all bilinear/trilinear forms.

Contains:
    ViscosityField / ConstantViscosity / VariableViscosity
    HDGVelocity, HDGScalar   -- compound (element, facet) space bundles
    assemble_mass            -- velocity/scalar/tensor mass matrices
    assemble_th_stokes       -- Taylor-Hood viscous + divergence blocks
    assemble_th_convection   -- Taylor-Hood convection matrix C(w)
    assemble_hdg_viscous     -- interior-penalty viscous form (constant
                                viscosity: full gradients; variable:
                                symmetric strain with facet viscosity)
    assemble_hdg_div         -- element-wise divergence constraint
    assemble_hdg_convection  -- upwind convection with outflow gluing
    assemble_cd_cg           -- scalar convection-diffusion (CG)
    assemble_cd_hdg          -- scalar convection-diffusion (HDG)
    assemble_source          -- load vectors
    apply_dirichlet / constrain_rows / fe_eval / fe_grad
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fe_spaces import (
    BDMSpace,
    DGScalarSpace,
    FacetSpace,
    LagrangeSpace,
)
from .mesh import Mesh
from .quadrature import physical_cell_rule, physical_facet_rule

DEFAULT_PENALTY = 4.0


class AssemblyError(ValueError):
    """Raised for invalid assembly requests."""


# ---------------------------------------------------------------------------
# viscosity fields


class ViscosityField:
    """Total viscosity nu + nu_T at cell quadrature points and facets."""

    nu: float
    is_constant: bool

    def total_cell(self, c: int, pts) -> np.ndarray:
        raise NotImplementedError

    def total_facet(self, f: int) -> float:
        raise NotImplementedError


class ConstantViscosity(ViscosityField):
    def __init__(self, nu: float):
        if nu <= 0.0:
            raise AssemblyError(f"viscosity must be positive, got {nu}")
        self.nu = float(nu)
        self.is_constant = True

    def total_cell(self, c, pts):
        return np.full(len(pts), self.nu)

    def total_facet(self, f):
        return self.nu


class VariableViscosity(ViscosityField):
    """nu + eddy viscosity; nut_cell(c, pts) -> per-point values,
    nut_facet an array over facets (adjacent-trace average)."""

    def __init__(self, nu: float, nut_cell, nut_facet):
        if nu <= 0.0:
            raise AssemblyError(f"viscosity must be positive, got {nu}")
        self.nu = float(nu)
        self.is_constant = False
        self._nut_cell = nut_cell
        self._nut_facet = np.asarray(nut_facet, float)
        if np.any(self._nut_facet < 0.0):
            raise AssemblyError("negative facet eddy viscosity")

    def total_cell(self, c, pts):
        nut = np.maximum(np.asarray(self._nut_cell(c, pts), float), 0.0)
        return self.nu + nut

    def total_facet(self, f):
        return self.nu + float(self._nut_facet[f])


# ---------------------------------------------------------------------------
# compound HDG spaces


@dataclass
class HDGVelocity:
    """H(div) element space + tangential facet space; combined DOF
    vector is [element part, facet part]."""

    elem: BDMSpace  # or RTSpace
    facet: FacetSpace

    def __post_init__(self):
        if not self.facet.tangential:
            raise AssemblyError("HDG velocity needs a tangential facet space")
        self.mesh = self.elem.mesh
        self.n_elem = self.elem.ndof
        self.ndof = self.elem.ndof + self.facet.ndof

    @property
    def dirichlet(self) -> np.ndarray:
        return np.concatenate([self.elem.dirichlet, self.facet.dirichlet])

    @property
    def condensable_mask(self) -> np.ndarray:
        return np.concatenate(
            [
                self.elem.dofmap.condensable_mask,
                np.zeros(self.facet.ndof, bool),
            ]
        )

    def facet_gdofs(self, f: int) -> np.ndarray:
        return self.n_elem + self.facet.facet_dofs(f)


@dataclass
class HDGScalar:
    """DG element space + scalar facet space for transported scalars."""

    elem: DGScalarSpace
    facet: FacetSpace

    def __post_init__(self):
        if self.facet.tangential:
            raise AssemblyError("HDG scalar needs a scalar facet space")
        self.mesh = self.elem.mesh
        self.n_elem = self.elem.ndof
        self.ndof = self.elem.ndof + self.facet.ndof

    @property
    def dirichlet(self) -> np.ndarray:
        return np.concatenate(
            [np.zeros(self.elem.ndof, bool), self.facet.dirichlet]
        )

    def facet_gdofs(self, f: int) -> np.ndarray:
        return self.n_elem + self.facet.facet_dofs(f)


# ---------------------------------------------------------------------------
# sparse accumulation


class _Builder:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def add(self, gr, gc, local):
        r, c = np.meshgrid(gr, gc, indexing="ij")
        self.rows.append(r.ravel())
        self.cols.append(c.ravel())
        self.vals.append(np.asarray(local).ravel())

    def build(self, nr, nc) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix((nr, nc))
        A = sp.coo_matrix(
            (
                np.concatenate(self.vals),
                (np.concatenate(self.rows), np.concatenate(self.cols)),
            ),
            shape=(nr, nc),
        )
        return A.tocsr()


def _cell_quad(mesh: Mesh, c: int, degree: int):
    return physical_cell_rule(mesh.vertices[mesh.cells[c]], degree)


def _facet_quad(mesh: Mesh, f: int, degree: int):
    a, b = mesh.vertices[mesh.facets[f]]
    return physical_facet_rule(a, b, degree)


def _outward_normal(mesh: Mesh, c: int, f: int) -> np.ndarray:
    sign = 1.0 if mesh.facet_cells[f, 0] == c else -1.0
    return sign * mesh.facet_normals[f]


# ---------------------------------------------------------------------------
# FE function evaluation


def fe_eval(space, coef, c: int, pts) -> np.ndarray:
    """Values of the FE function with local coefficients taken from the
    global vector `coef` on cell c."""
    phi = space.tabulate(c, pts)
    loc = coef[space.cell_dofs(c)]
    if phi.ndim == 2:
        return phi @ loc
    return np.einsum("qi...,i->q...", phi, loc)


def fe_grad(space, coef, c: int, pts) -> np.ndarray:
    g = space.tabulate_grad(c, pts)
    loc = coef[space.cell_dofs(c)]
    return np.einsum("qi...,i->q...", g, loc)


def hdg_facet_eval(hdg, coef, f: int, pts) -> np.ndarray:
    """Facet-variable values of an HDG compound coefficient vector."""
    phi = hdg.facet.tabulate_facet(f, pts)
    loc = coef[hdg.facet_gdofs(f)]
    return np.einsum("qi...,i->q...", phi, loc)


# ---------------------------------------------------------------------------
# mass / source


def assemble_mass(space) -> sp.csr_matrix:
    """M_ij = integral(phi_i . phi_j); Frobenius product for tensors."""
    if isinstance(space, FacetSpace):
        b = _Builder()
        mesh = space.mesh
        seen = set()
        for f in range(mesh.n_facets):
            r = int(space.facet_rep[f])
            if r in seen:
                continue
            seen.add(r)
            pts, w = _facet_quad(mesh, r, 2 * space.order + 1)
            phi = space.tabulate_facet(r, pts)
            loc = (
                np.einsum("qid,qjd,q->ij", phi, phi, w)
                if phi.ndim == 3
                else np.einsum("qi,qj,q->ij", phi, phi, w)
            )
            b.add(space.facet_dofs(r), space.facet_dofs(r), loc)
        return b.build(space.ndof, space.ndof)

    mesh = space.mesh
    b = _Builder()
    deg = 2 * space.order + 2
    for c in range(mesh.n_cells):
        pts, w = _cell_quad(mesh, c, deg)
        phi = space.tabulate(c, pts)
        if phi.ndim == 2:
            loc = np.einsum("qi,qj,q->ij", phi, phi, w)
        elif phi.ndim == 3:
            loc = np.einsum("qid,qjd,q->ij", phi, phi, w)
        else:
            loc = np.einsum("qiab,qjab,q->ij", phi, phi, w)
        dofs = space.cell_dofs(c)
        b.add(dofs, dofs, loc)
    return b.build(space.ndof, space.ndof)


def assemble_source(space, f, degree: int | None = None) -> np.ndarray:
    """Load vector F_i = integral(f . phi_i); `f(pts)` analytic."""
    mesh = space.mesh
    deg = degree if degree is not None else 2 * space.order + 3
    F = np.zeros(space.ndof)
    for c in range(mesh.n_cells):
        pts, w = _cell_quad(mesh, c, deg)
        phi = space.tabulate(c, pts)
        vals = np.asarray(f(pts), float)
        if phi.ndim == 2:
            F[space.cell_dofs(c)] += np.einsum("q,qi,q->i", vals, phi, w)
        else:
            F[space.cell_dofs(c)] += np.einsum("qd,qid,q->i", vals, phi, w)
    return F


# ---------------------------------------------------------------------------
# Taylor-Hood forms


def _sym(g):
    """Symmetric part over the trailing two axes."""
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def assemble_th_stokes(vel: LagrangeSpace, pres: LagrangeSpace, visc: ViscosityField):
    """(A, B): A_ij = int 2 nu S(phi_j):S(phi_i), B_iq = -int div(phi_i) psi_q."""
    if vel.ncomp != 2 or pres.ncomp != 1:
        raise AssemblyError("Taylor-Hood needs vector velocity, scalar pressure")
    if vel.order != pres.order + 1 or vel.order < 2:
        raise AssemblyError(
            f"mismatched Taylor-Hood pair P{vel.order}/P{pres.order}"
        )
    mesh = vel.mesh
    bA, bB = _Builder(), _Builder()
    deg = 2 * vel.order + 2
    for c in range(mesh.n_cells):
        pts, w = _cell_quad(mesh, c, deg)
        g = vel.tabulate_grad(c, pts)  # (nq, nl, 2, 2)
        S = _sym(g)
        nu = visc.total_cell(c, pts)
        A_loc = 2.0 * np.einsum("qiab,qjab,q,q->ij", S, S, nu, w)
        div = vel.tabulate_div(c, pts)
        psi = pres.tabulate_scalar(c, pts)
        B_loc = -np.einsum("qi,qm,q->im", div, psi, w)
        vd, pd = vel.cell_dofs(c), pres.cell_dofs(c)
        bA.add(vd, vd, A_loc)
        bB.add(vd, pd, B_loc)
    return bA.build(vel.ndof, vel.ndof), bB.build(vel.ndof, pres.ndof)


def assemble_th_graddiv(vel: LagrangeSpace) -> sp.csr_matrix:
    """G_ij = int div(phi_j) div(phi_i); grad-div stabilization matrix."""
    mesh = vel.mesh
    b = _Builder()
    deg = 2 * vel.order
    for c in range(mesh.n_cells):
        pts, w = _cell_quad(mesh, c, deg)
        div = vel.tabulate_div(c, pts)  # (nq, nl)
        loc = np.einsum("qj,qi,q->ij", div, div, w)
        vd = vel.cell_dofs(c)
        b.add(vd, vd, loc)
    return b.build(vel.ndof, vel.ndof)


def assemble_th_convection(vel: LagrangeSpace, w_coef) -> sp.csr_matrix:
    """C(w)_ij = int ((w . grad) phi_j) . phi_i."""
    mesh = vel.mesh
    b = _Builder()
    deg = 3 * vel.order + 1
    for c in range(mesh.n_cells):
        pts, w = _cell_quad(mesh, c, deg)
        wind = fe_eval(vel, w_coef, c, pts)  # (nq, 2)
        phi = vel.tabulate(c, pts)
        g = vel.tabulate_grad(c, pts)
        conv = np.einsum("qjab,qb->qja", g, wind)  # (w.grad)phi_j
        loc = np.einsum("qja,qia,q->ij", conv, phi, w)
        vd = vel.cell_dofs(c)
        b.add(vd, vd, loc)
    return b.build(vel.ndof, vel.ndof)


# ---------------------------------------------------------------------------
# HDG flow forms


def _hdg_edge_basis(hdg: HDGVelocity, c: int, f: int, pts):
    """Element values/grads and facet values on an edge of cell c.

    Returns (vals_e (nq,nb,2), grads_e, vals_f (nq,nfl,2), gdofs)."""
    vals_e = hdg.elem.tabulate(c, pts)
    grads_e = hdg.elem.tabulate_grad(c, pts)
    vals_f = hdg.facet.tabulate_facet(f, pts)
    gdofs = np.concatenate([hdg.elem.cell_dofs(c), hdg.facet_gdofs(f)])
    return vals_e, grads_e, vals_f, gdofs


def assemble_hdg_viscous(
    hdg: HDGVelocity, visc: ViscosityField, alpha: float = DEFAULT_PENALTY
) -> sp.csr_matrix:
    """Interior-penalty viscous form on (element, facet) velocity.

    Constant viscosity: full-gradient volume term nu grad u : grad v and
    fluxes nu (grad u) n.  Variable viscosity: 2(nu+nu_T) S(u):S(v) with
    facet flux 2(nu+nu_T^F) S(u) n.  Penalty nu_tot alpha p^2 |e|/|T| on
    the tangential jumps, p the velocity order; the facet-length over
    cell-area scaling matches the trace inequality on anisotropic cells,
    where a 1/h law under-penalizes the long facets and loses coercivity.
    """
    if alpha <= 0.0:
        raise AssemblyError(f"penalty must be positive, got {alpha}")
    mesh = hdg.mesh
    k = hdg.elem.order
    b = _Builder()
    degc, degf = 2 * k + 2, 2 * k + 2
    for c in range(mesh.n_cells):
        pts, w = _cell_quad(mesh, c, degc)
        g = hdg.elem.tabulate_grad(c, pts)
        nu = visc.total_cell(c, pts)
        if visc.is_constant:
            loc = np.einsum("qiab,qjab,q,q->ij", g, g, nu, w)
        else:
            S = _sym(g)
            loc = 2.0 * np.einsum("qiab,qjab,q,q->ij", S, S, nu, w)
        ed = hdg.elem.cell_dofs(c)
        b.add(ed, ed, loc)

        area = mesh.cell_area(c)
        for le in range(3):
            f = mesh.cell_facets[c, le]
            n = _outward_normal(mesh, c, f)
            trace_scale = mesh.facet_length(f) / area
            pts_f, wf = _facet_quad(mesh, f, degf)
            vals_e, grads_e, vals_f, gdofs = _hdg_edge_basis(hdg, c, f, pts_f)
            nb, nfl = vals_e.shape[1], vals_f.shape[1]
            # tangential jump [[u^t]] = u_T - (u_T.n)n - u^F
            un = np.einsum("qid,d->qi", vals_e, n)
            tang_e = vals_e - un[:, :, None] * n[None, None, :]
            jump = np.concatenate([tang_e, -vals_f], axis=1)  # (nq, nb+nfl, 2)
            nu_f = visc.total_facet(f)
            if visc.is_constant:
                flux_e = nu_f * np.einsum("qiab,b->qia", grads_e, n)
                pen = nu_f * alpha * k**2 * trace_scale
            else:
                flux_e = 2.0 * nu_f * np.einsum("qiab,b->qia", _sym(grads_e), n)
                pen = 2.0 * nu_f * alpha * k**2 * trace_scale
            flux = np.concatenate(
                [flux_e, np.zeros((len(pts_f), nfl, 2))], axis=1
            )
            loc = (
                -np.einsum("qia,qja,q->ij", jump, flux, wf)
                - np.einsum("qia,qja,q->ij", flux, jump, wf)
                + pen * np.einsum("qia,qja,q->ij", jump, jump, wf)
            )
            b.add(gdofs, gdofs, loc)
    return b.build(hdg.ndof, hdg.ndof)


def assemble_hdg_div(hdg: HDGVelocity, pres: DGScalarSpace) -> sp.csr_matrix:
    """B_iq = -sum_T int div(phi_i) psi_q (element DOFs only)."""
    mesh = hdg.mesh
    b = _Builder()
    deg = hdg.elem.order + pres.order + 1
    for c in range(mesh.n_cells):
        pts, w = _cell_quad(mesh, c, deg)
        div = hdg.elem.tabulate_div(c, pts)
        psi = pres.tabulate(c, pts)
        loc = -np.einsum("qi,qm,q->im", div, psi, w)
        b.add(hdg.elem.cell_dofs(c), pres.cell_dofs(c), loc)
    return b.build(hdg.ndof, pres.ndof)


def assemble_hdg_convection(hdg: HDGVelocity, w_coef, gluing: bool = True) -> sp.csr_matrix:
    """Upwind convection C(w): volume transport against the element
    test space, upwind facet fluxes (element normal part always; facet
    value on inflow, element tangential value on outflow, the w.n = 0
    tie resolving to the element branch), and the outflow constraint
    gluing the facet variable to the element trace.

    `gluing=False` drops the facet test rows (the gluing term).  Use it
    when the operator is applied explicitly in time stepping: the facet
    unknowns carry no mass, so explicit facet-row forcing amplifies by
    ~|w.n| h / (nu alpha p^2) per step and destabilizes low-viscosity
    runs; the implicit viscous block then determines the facet trace.
    """
    mesh = hdg.mesh
    k = hdg.elem.order
    b = _Builder()
    degc, degf = 3 * k + 2, 3 * k + 2
    # basis tabulations and quadrature geometry are wind-independent;
    # cache them on the space so repeated assembly (every time step)
    # only re-evaluates the wind and the upwind switches
    static = getattr(hdg, "_conv_static", None)
    if static is None:
        static = []
        for c in range(mesh.n_cells):
            pts, w = _cell_quad(mesh, c, degc)
            phi = hdg.elem.tabulate(c, pts)
            g = hdg.elem.tabulate_grad(c, pts)
            ed = hdg.elem.cell_dofs(c)
            edges = []
            for le in range(3):
                f = mesh.cell_facets[c, le]
                n = _outward_normal(mesh, c, f)
                pts_f, wf = _facet_quad(mesh, f, degf)
                vals_e, _, vals_f, gdofs = _hdg_edge_basis(hdg, c, f, pts_f)
                un = np.einsum("qid,d->qi", vals_e, n)
                norm_e = un[:, :, None] * n[None, None, :]
                tang_e = vals_e - norm_e
                edges.append((n, wf, vals_e, norm_e, tang_e, vals_f, gdofs))
            static.append((w, phi, g, ed, edges))
        hdg._conv_static = static
    for c in range(mesh.n_cells):
        w, phi, g, ed, edges = static[c]
        loc_w = w_coef[hdg.elem.cell_dofs(c)]
        wind = np.einsum("qid,i->qd", phi, loc_w)
        # -int u_j . (w . grad) v_i
        conv_test = np.einsum("qiab,qb->qia", g, wind)
        loc = -np.einsum("qja,qia,q->ij", phi, conv_test, w)
        b.add(ed, ed, loc)

        for n, wf, vals_e, norm_e, tang_e, vals_f, gdofs in edges:
            nb, nfl = vals_e.shape[1], vals_f.shape[1]
            wn = np.einsum("qid,i,d->q", vals_e, loc_w, n)
            outflow = (wn >= 0.0)[:, None, None]
            nq = vals_e.shape[0]
            up_e = norm_e + np.where(outflow, tang_e, 0.0)
            up_f = np.where(~outflow, vals_f, 0.0)
            up = np.concatenate([up_e, up_f], axis=1)  # trial (nq, nb+nfl, 2)
            test_e = np.concatenate([vals_e, np.zeros((nq, nfl, 2))], axis=1)
            loc = np.einsum("qja,qia,q,q->ij", up, test_e, wn, wf)
            if gluing:
                # outflow gluing: int (w.n)(u^F - u^{T,t}).v^F, w.n > 0
                wn_out = np.where(wn > 0.0, wn, 0.0)
                glue_trial = np.concatenate([-tang_e, vals_f], axis=1)
                test_f = np.concatenate(
                    [np.zeros((nq, nb, 2)), vals_f], axis=1
                )
                loc += np.einsum(
                    "qja,qia,q,q->ij", glue_trial, test_f, wn_out, wf
                )
            b.add(gdofs, gdofs, loc)
    return b.build(hdg.ndof, hdg.ndof)


# ---------------------------------------------------------------------------
# scalar convection-diffusion


def assemble_cd_cg(
    space: LagrangeSpace, w_eval, visc: ViscosityField, diffusion: bool = True
) -> sp.csr_matrix:
    """A_ij = int (w . grad phi_j) phi_i + int nu_tot grad phi_j . grad phi_i.

    `w_eval(c, pts) -> (nq, 2)` evaluates the wind; None means w = 0.
    `diffusion=False` returns the convection part alone (for IMEX
    operator splitting).
    """
    if space.ncomp != 1:
        raise AssemblyError("convection-diffusion space must be scalar")
    mesh = space.mesh
    b = _Builder()
    deg = 3 * space.order + 1
    for c in range(mesh.n_cells):
        pts, w = _cell_quad(mesh, c, deg)
        phi = space.tabulate_scalar(c, pts)
        g = space.tabulate_scalar_grad(c, pts)
        nloc = phi.shape[1]
        loc = np.zeros((nloc, nloc))
        if diffusion:
            nu = visc.total_cell(c, pts)
            loc += np.einsum("qja,qia,q,q->ij", g, g, nu, w)
        if w_eval is not None:
            wind = np.asarray(w_eval(c, pts), float)
            loc += np.einsum("qjb,qb,qi,q->ij", g, wind, phi, w)
        dofs = space.cell_dofs(c)
        b.add(dofs, dofs, loc)
    return b.build(space.ndof, space.ndof)


def assemble_cd_hdg(
    hdg: HDGScalar,
    w_eval,
    visc: ViscosityField,
    alpha: float = DEFAULT_PENALTY,
    diffusion: bool = True,
    gluing: bool = True,
) -> sp.csr_matrix:
    """Scalar HDG convection-diffusion on (element, facet) unknowns.

    Diffusion: interior-penalty with scalar jumps phi - phi^F and facet
    viscosity.  Convection: upwind value (element trace when w.n >= 0,
    facet value otherwise) plus the outflow constraint gluing the facet
    variable to the upwind element trace.

    `diffusion=False` returns the convection part alone.  As with the
    flow form, pass `gluing=False` when the convection operator is
    applied explicitly in time stepping: the facet unknowns carry no
    mass, so explicit facet-row forcing destabilizes the step and the
    implicit diffusion block should determine the facet trace instead.
    """
    if alpha <= 0.0:
        raise AssemblyError(f"penalty must be positive, got {alpha}")
    mesh = hdg.mesh
    k = hdg.elem.order
    b = _Builder()
    degc, degf = 3 * k + 2, 3 * k + 2
    for c in range(mesh.n_cells):
        pts, w = _cell_quad(mesh, c, degc)
        g = hdg.elem.tabulate_grad(c, pts)
        loc = np.zeros((g.shape[1], g.shape[1]))
        if diffusion:
            nu = visc.total_cell(c, pts)
            loc += np.einsum("qja,qia,q,q->ij", g, g, nu, w)
        if w_eval is not None:
            wind = np.asarray(w_eval(c, pts), float)
            phi = hdg.elem.tabulate(c, pts)
            # -int phi_j (w . grad psi_i)
            loc += -np.einsum("qj,qb,qib,q->ij", phi, wind, g, w)
        ed = hdg.elem.cell_dofs(c)
        b.add(ed, ed, loc)

        area = mesh.cell_area(c)
        for le in range(3):
            f = mesh.cell_facets[c, le]
            n = _outward_normal(mesh, c, f)
            trace_scale = mesh.facet_length(f) / area
            pts_f, wf = _facet_quad(mesh, f, degf)
            vals_e = hdg.elem.tabulate(c, pts_f)  # (nq, nb)
            grads_e = hdg.elem.tabulate_grad(c, pts_f)
            vals_f = hdg.facet.tabulate_facet(f, pts_f)  # (nq, nfl)
            nb, nfl = vals_e.shape[1], vals_f.shape[1]
            gdofs = np.concatenate([ed, hdg.facet_gdofs(f)])
            loc = np.zeros((nb + nfl, nb + nfl))
            if diffusion:
                jump = np.concatenate([vals_e, -vals_f], axis=1)
                nu_f = visc.total_facet(f)
                flux_e = nu_f * np.einsum("qib,b->qi", grads_e, n)
                flux = np.concatenate(
                    [flux_e, np.zeros((len(pts_f), nfl))], axis=1
                )
                pen = nu_f * alpha * max(k, 1) ** 2 * trace_scale
                loc += (
                    -np.einsum("qi,qj,q->ij", jump, flux, wf)
                    - np.einsum("qi,qj,q->ij", flux, jump, wf)
                    + pen * np.einsum("qi,qj,q->ij", jump, jump, wf)
                )
            if w_eval is not None:
                wn = np.einsum(
                    "qd,d->q", np.asarray(w_eval(c, pts_f), float), n
                )
                outflow = (wn >= 0.0)[:, None]
                up = np.concatenate(
                    [np.where(outflow, vals_e, 0.0), np.where(~outflow, vals_f, 0.0)],
                    axis=1,
                )
                test_e = np.concatenate(
                    [vals_e, np.zeros((len(pts_f), nfl))], axis=1
                )
                loc += np.einsum("qj,qi,q,q->ij", up, test_e, wn, wf)
                if gluing:
                    # outflow gluing (phi^F - phi) psi^F, dissipative branch
                    wn_out = np.where(wn > 0.0, wn, 0.0)
                    glue_trial = np.concatenate([-vals_e, vals_f], axis=1)
                    test_f = np.concatenate(
                        [np.zeros((len(pts_f), nb)), vals_f], axis=1
                    )
                    loc += np.einsum(
                        "qj,qi,q,q->ij", glue_trial, test_f, wn_out, wf
                    )
            b.add(gdofs, gdofs, loc)
    return b.build(hdg.ndof, hdg.ndof)


# ---------------------------------------------------------------------------
# constraints


def apply_dirichlet(A: sp.csr_matrix, mask) -> sp.csr_matrix:
    """Zero constrained rows and columns, unit diagonal (symmetric)."""
    mask = np.asarray(mask, bool)
    if not mask.any():
        return A.tocsr()
    keep = sp.diags((~mask).astype(float))
    A2 = keep @ A @ keep + sp.diags(mask.astype(float))
    return A2.tocsr()


def constrain_rows(A: sp.csr_matrix, mask) -> sp.csr_matrix:
    """Replace constrained rows by identity rows (columns untouched)."""
    mask = np.asarray(mask, bool)
    if not mask.any():
        return A.tocsr()
    keep = sp.diags((~mask).astype(float))
    A2 = keep @ A + sp.diags(mask.astype(float))
    return A2.tocsr()


def zero_rows(A: sp.csr_matrix, mask) -> sp.csr_matrix:
    mask = np.asarray(mask, bool)
    keep = sp.diags((~mask).astype(float))
    return (keep @ A).tocsr()
