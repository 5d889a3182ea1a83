"""Finite element spaces and global DOF maps.

Contains:
    FESpaceDesc          -- space descriptor (kind, order)
    DofMap               -- global numbering, Dirichlet mask, aliasing
    make_space           -- descriptor -> (space, DofMap)
    eval_basis           -- basis values/gradients/divergences at a point
    build_dofmap         -- numbering with periodic aliasing + Dirichlet
    interpolate          -- analytic field -> coefficient vector

Space kinds:
    h1_lagrange      continuous P_k, scalar or 2-vector
    hdiv_bdm         BDM_k, normal-continuous, per-cell dim (k+1)(k+2)
    hdiv_rt          RT_0, per-cell dim 3
    facet_tangential tangential trace space on the skeleton
    facet_scalar     scalar trace space on the skeleton
    dg_scalar        discontinuous P_k, per-cell L2-orthonormal basis
    dg_sym_tensor    discontinuous symmetric tensors, orthonormal basis

Element bases are represented per cell as polynomials in centroid-scaled
physical coordinates, dual to globally defined DOF functionals (point
values for Lagrange, oriented edge moments of the normal trace for
BDM/RT).  On affine triangles this reproduces normal-trace continuity
and divergences exactly, matching a contravariant mapping of the
reference space.  Edge orientation is global: endpoints sorted
lexicographically, tangent t from first to second endpoint, normal the
clockwise rotation of t.  Translation-congruent periodic facets thus
carry identical functionals and can share DOFs directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import (
    TAG_WALL,
    Mesh,
    MeshError,
)
from .quadrature import physical_cell_rule, physical_facet_rule

MAX_ORDER = 3


class SpaceError(ValueError):
    """Raised for unsupported space requests."""


@dataclass(frozen=True)
class FESpaceDesc:
    kind: str
    order: int
    ncomp: int = 1  # h1_lagrange only: 1 scalar, 2 vector


@dataclass
class DofMap:
    n_dofs: int
    cell_to_global: list  # per-cell global DOF index arrays
    facet_to_global: list | None  # per-facet arrays (facet-borne spaces)
    dirichlet_mask: np.ndarray  # bool per global DOF
    periodic_alias: dict  # raw entity aliasing (slave -> master)
    condensable_mask: np.ndarray  # element-local DOFs eliminable per cell

    @property
    def n_condensable(self) -> int:
        return int(self.condensable_mask.sum())

    @property
    def n_retained(self) -> int:
        return self.n_dofs - self.n_condensable


# ---------------------------------------------------------------------------
# monomial helpers (centroid-scaled coordinates)


def mono_exponents(degree: int) -> np.ndarray:
    exps = [(d - b, b) for d in range(degree + 1) for b in range(d + 1)]
    return np.array(exps, dtype=int)


def mono_eval(exps: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Values (npts, nmono) of x^a y^b at pts."""
    x, y = pts[:, 0:1], pts[:, 1:2]
    return x ** exps[:, 0] * y ** exps[:, 1]


def mono_grad(exps: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Gradients (npts, nmono, 2)."""
    x, y = pts[:, 0:1], pts[:, 1:2]
    a, b = exps[:, 0], exps[:, 1]
    gx = np.where(a > 0, a * x ** np.maximum(a - 1, 0) * y**b, 0.0)
    gy = np.where(b > 0, b * x**a * y ** np.maximum(b - 1, 0), 0.0)
    return np.stack([gx, gy], axis=-1)


def tab_memo(fn):
    """Memoize a tabulation method on (method, entity, points).

    Basis tabulations depend only on the static mesh geometry, so
    repeated evaluation at the same points (time stepping, repeated
    assembly) can reuse the stored arrays.  Cached arrays are returned
    read-only so accidental mutation fails loudly."""
    name = fn.__name__

    def wrapped(self, c, pts):
        pts = np.asarray(pts, dtype=float)
        memo = self.__dict__.setdefault("_tab_memo", {})
        key = (name, c, pts.tobytes())
        out = memo.get(key)
        if out is None:
            out = np.ascontiguousarray(fn(self, c, pts))
            out.flags.writeable = False
            memo[key] = out
        return out

    wrapped.__name__ = name
    wrapped.__doc__ = fn.__doc__
    return wrapped


def legendre_values(order: int, s: np.ndarray) -> np.ndarray:
    """Orthonormal-on-[-1,1] (weight 1/2) Legendre values (npts, order+1)."""
    vals = np.empty((len(s), order + 1))
    vals[:, 0] = 1.0
    if order >= 1:
        vals[:, 1] = s
    for m in range(1, order):
        vals[:, m + 1] = ((2 * m + 1) * s * vals[:, m] - m * vals[:, m - 1]) / (m + 1)
    return vals * np.sqrt(2.0 * np.arange(order + 1) + 1.0)


# ---------------------------------------------------------------------------
# periodic aliasing


def _vertex_alias(mesh: Mesh) -> np.ndarray:
    """Representative vertex index per vertex under periodic pairing."""
    parent = np.arange(mesh.n_vertices)

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for (f_in, f_out), shift in zip(mesh.periodic_pairs, mesh.periodic_shifts):
        vin = mesh.vertices[mesh.facets[f_in]]
        for v_out in mesh.facets[f_out]:
            target = mesh.vertices[v_out] - shift
            d = np.abs(vin - target).max(axis=1)
            j = int(np.argmin(d))
            if d[j] > 1e-10:
                raise MeshError(f"periodic vertex match failed for vertex {v_out}")
            a, b = find(mesh.facets[f_in][j]), find(v_out)
            if a != b:
                parent[max(a, b)] = min(a, b)
    return np.array([find(v) for v in range(mesh.n_vertices)])


def _facet_alias(mesh: Mesh) -> np.ndarray:
    rep = np.arange(mesh.n_facets)
    for f_in, f_out in mesh.periodic_pairs:
        rep[f_out] = f_in
    return rep


def _facet_endpoints(mesh: Mesh, f: int):
    """Facet endpoints in global (lexicographic) orientation."""
    a, b = mesh.vertices[mesh.facets[f]]
    if (a[0], a[1]) > (b[0], b[1]):
        a, b = b, a
    return a, b


def facet_frame(mesh: Mesh, f: int):
    """(p0, p1, tangent, normal, length) in global orientation."""
    p0, p1 = _facet_endpoints(mesh, f)
    d = p1 - p0
    L = float(np.hypot(*d))
    t = d / L
    n = np.array([t[1], -t[0]])
    return p0, p1, t, n, L


def facet_param(mesh: Mesh, f: int, pts: np.ndarray) -> np.ndarray:
    """Map points on facet f to the parameter s in [-1, 1]."""
    p0, p1, t, _, L = facet_frame(mesh, f)
    return 2.0 * ((pts - p0) @ t) / L - 1.0


def _cell_scales(mesh: Mesh):
    centroids = mesh.vertices[mesh.cells].mean(axis=1)
    v = mesh.vertices[mesh.cells]
    e = np.stack(
        [v[:, 1] - v[:, 0], v[:, 2] - v[:, 1], v[:, 0] - v[:, 2]], axis=1
    )
    h = np.sqrt((e**2).sum(axis=2)).max(axis=1)
    return centroids, h


# ---------------------------------------------------------------------------
# element spaces


class _ElementSpace:
    """Shared plumbing: per-cell polynomial coefficients over monomials in
    centroid-scaled coordinates."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.centroid, self.hscale = _cell_scales(mesh)
        self.facet_rep = _facet_alias(mesh)

    def _scaled(self, c: int, pts: np.ndarray) -> np.ndarray:
        return (np.asarray(pts, float) - self.centroid[c]) / self.hscale[c]

    def cell_dofs(self, c: int) -> np.ndarray:
        return self.dofmap.cell_to_global[c]

    @property
    def ndof(self) -> int:
        return self.dofmap.n_dofs

    @property
    def dirichlet(self) -> np.ndarray:
        return self.dofmap.dirichlet_mask


class LagrangeSpace(_ElementSpace):
    """Continuous P_k on triangles, scalar (ncomp=1) or 2-vector.

    Vector DOFs interleave components: global = 2*node + comp, and the
    tabulated basis carries both components explicitly.
    """

    kind = "h1_lagrange"

    def __init__(self, mesh: Mesh, order: int, ncomp: int = 1, dirichlet_tags=(TAG_WALL,)):
        if not 1 <= order <= MAX_ORDER:
            raise SpaceError(f"h1_lagrange order {order} unsupported (1..{MAX_ORDER})")
        if ncomp not in (1, 2):
            raise SpaceError(f"ncomp must be 1 or 2, got {ncomp}")
        super().__init__(mesh)
        self.order = order
        self.ncomp = ncomp
        k = order
        self.exps = mono_exponents(k)
        self.nloc_scalar = (k + 1) * (k + 2) // 2

        vrep = _vertex_alias(mesh)
        self.vertex_rep = vrep
        reps = np.unique(vrep)
        vid = {int(r): i for i, r in enumerate(reps)}
        n_vnodes = len(reps)

        frep = self.facet_rep
        frs = np.unique(frep)
        fid = {int(r): i for i, r in enumerate(frs)}
        n_edge = k - 1
        n_fnodes = len(frs) * n_edge
        n_int = (k - 1) * (k - 2) // 2
        n_nodes = n_vnodes + n_fnodes + mesh.n_cells * n_int
        self.n_nodes = n_nodes

        node_coords = np.zeros((n_nodes, 2))
        cell_nodes = []
        coeffs = []
        for c in range(mesh.n_cells):
            tri = mesh.cells[c]
            pv = mesh.vertices[tri]
            loc_nodes = []
            loc_pts = []
            for i in range(3):
                loc_nodes.append(vid[int(vrep[tri[i]])])
                loc_pts.append(pv[i])
            for le in range(3):
                f = mesh.cell_facets[c, le]
                p0, p1, _, _, _ = facet_frame(mesh, f)
                base = n_vnodes + fid[int(frep[f])] * n_edge
                for i in range(1, k):
                    loc_nodes.append(base + i - 1)
                    loc_pts.append(p0 + (i / k) * (p1 - p0))
            idx = 0
            for a in range(1, k):
                for b in range(1, k - a):
                    lam = np.array([k - a - b, a, b]) / k
                    loc_nodes.append(n_vnodes + n_fnodes + c * n_int + idx)
                    loc_pts.append(lam @ pv)
                    idx += 1
            loc_pts = np.array(loc_pts)
            node_coords[loc_nodes] = loc_pts
            V = mono_eval(self.exps, self._scaled(c, loc_pts))
            coeffs.append(np.linalg.inv(V))  # columns: nodal basis coefficients
            cell_nodes.append(np.array(loc_nodes, dtype=int))
        self.node_coords = node_coords
        self.cell_nodes = cell_nodes
        # coeffs[c][:, i] are monomial coefficients of nodal basis i
        self.coeffs = coeffs

        dirichlet_nodes = np.zeros(n_nodes, bool)
        for f in range(mesh.n_facets):
            if mesh.boundary_tags[f] in dirichlet_tags:
                for v in mesh.facets[f]:
                    dirichlet_nodes[vid[int(vrep[v])]] = True
                if n_edge:
                    base = n_vnodes + fid[int(frep[f])] * n_edge
                    dirichlet_nodes[base : base + n_edge] = True

        nd = n_nodes * ncomp
        if ncomp == 1:
            c2g = [cn.copy() for cn in cell_nodes]
            dmask = dirichlet_nodes
        else:
            c2g = [
                np.stack([2 * cn, 2 * cn + 1], axis=1).ravel() for cn in cell_nodes
            ]
            dmask = np.repeat(dirichlet_nodes, 2)
        self.nloc = self.nloc_scalar * ncomp
        self.dofmap = DofMap(
            n_dofs=nd,
            cell_to_global=c2g,
            facet_to_global=None,
            dirichlet_mask=dmask,
            periodic_alias={
                int(v): int(r) for v, r in enumerate(vrep) if r != v
            },
            condensable_mask=np.zeros(nd, bool),
        )

    @tab_memo
    def tabulate_scalar(self, c: int, pts) -> np.ndarray:
        """Scalar nodal basis values (nq, nloc_scalar)."""
        return mono_eval(self.exps, self._scaled(c, pts)) @ self.coeffs[c]

    @tab_memo
    def tabulate_scalar_grad(self, c: int, pts) -> np.ndarray:
        g = mono_grad(self.exps, self._scaled(c, pts)) / self.hscale[c]
        return np.einsum("qmd,ml->qld", g, self.coeffs[c])

    @tab_memo
    def tabulate(self, c: int, pts) -> np.ndarray:
        """Values; scalar (nq, nloc), vector (nq, nloc, 2)."""
        phi = self.tabulate_scalar(c, pts)
        if self.ncomp == 1:
            return phi
        nq, nl = phi.shape
        out = np.zeros((nq, 2 * nl, 2))
        out[:, 0::2, 0] = phi
        out[:, 1::2, 1] = phi
        return out

    @tab_memo
    def tabulate_grad(self, c: int, pts) -> np.ndarray:
        """Gradients; scalar (nq, nloc, 2), vector (nq, nloc, 2, 2)
        with [q, l, i, j] = d(phi_l)_i / dx_j."""
        g = self.tabulate_scalar_grad(c, pts)
        if self.ncomp == 1:
            return g
        nq, nl, _ = g.shape
        out = np.zeros((nq, 2 * nl, 2, 2))
        out[:, 0::2, 0, :] = g
        out[:, 1::2, 1, :] = g
        return out

    @tab_memo
    def tabulate_div(self, c: int, pts) -> np.ndarray:
        if self.ncomp == 1:
            raise SpaceError("divergence undefined for a scalar space")
        g = self.tabulate_grad(c, pts)
        return np.trace(g, axis1=2, axis2=3)


class _HDivSpace(_ElementSpace):
    """Shared machinery of BDM_k and RT_0: per-cell vector polynomial
    basis dual to globally oriented edge-moment (+ interior) functionals."""

    n_edge_dofs: int
    nloc: int
    n_interior: int

    def __init__(self, mesh: Mesh, dirichlet_tags=(TAG_WALL,)):
        super().__init__(mesh)
        frep = self.facet_rep
        frs = np.unique(frep)
        self._fid = {int(r): i for i, r in enumerate(frs)}
        ne = self.n_edge_dofs
        n_facet_total = len(frs) * ne
        nd = n_facet_total + mesh.n_cells * self.n_interior
        self._n_facet_total = n_facet_total

        cell_to_global = []
        coeffs = []
        for c in range(mesh.n_cells):
            dofs = []
            for le in range(3):
                f = mesh.cell_facets[c, le]
                base = self._fid[int(frep[f])] * ne
                dofs.extend(range(base, base + ne))
            base = n_facet_total + c * self.n_interior
            dofs.extend(range(base, base + self.n_interior))
            cell_to_global.append(np.array(dofs, dtype=int))
            V = self._functional_matrix(c)
            cond = np.linalg.cond(V)
            if not np.isfinite(cond) or cond > 1e12:
                raise SpaceError(f"degenerate DOF functionals on cell {c}")
            coeffs.append(np.linalg.inv(V))
        self.coeffs = coeffs

        dmask = np.zeros(nd, bool)
        for f in range(mesh.n_facets):
            if mesh.boundary_tags[f] in dirichlet_tags:
                base = self._fid[int(frep[f])] * ne
                dmask[base : base + ne] = True
        cmask = np.zeros(nd, bool)
        cmask[n_facet_total:] = True

        self.dofmap = DofMap(
            n_dofs=nd,
            cell_to_global=cell_to_global,
            facet_to_global=[
                np.arange(self._fid[int(frep[f])] * ne, self._fid[int(frep[f])] * ne + ne)
                for f in range(mesh.n_facets)
            ],
            dirichlet_mask=dmask,
            periodic_alias={
                int(f): int(r) for f, r in enumerate(frep) if r != f
            },
            condensable_mask=cmask,
        )

    # vector monomial j = 2*m + comp over scalar monomials m
    def _vec_mono_eval(self, c: int, pts) -> np.ndarray:
        phi = mono_eval(self.exps, self._scaled(c, pts))
        nq, nm = phi.shape
        out = np.zeros((nq, 2 * nm, 2))
        out[:, 0::2, 0] = phi
        out[:, 1::2, 1] = phi
        return out

    def _vec_mono_grad(self, c: int, pts) -> np.ndarray:
        g = mono_grad(self.exps, self._scaled(c, pts)) / self.hscale[c]
        nq, nm, _ = g.shape
        out = np.zeros((nq, 2 * nm, 2, 2))
        out[:, 0::2, 0, :] = g
        out[:, 1::2, 1, :] = g
        return out

    def edge_functionals_applied(self, c: int, f: int, fn) -> np.ndarray:
        """Edge moments (1/|e|) int (fn . n_g) P~_m ds over facet f."""
        p0, p1, _, n, L = facet_frame(self.mesh, f)
        pts, w = physical_facet_rule(p0, p1, 2 * self.order + 2)
        s = facet_param(self.mesh, f, pts)
        leg = legendre_values(self.n_edge_dofs - 1, s)
        vn = np.asarray(fn(pts)) @ n
        return (leg * (vn * w)[:, None]).sum(axis=0) / L

    def _functional_matrix(self, c: int) -> np.ndarray:
        """V[i, j] = functional_i(vector monomial j) on cell c."""
        mesh = self.mesh
        nloc = self.nloc
        V = np.empty((nloc, nloc))
        row = 0
        for le in range(3):
            f = mesh.cell_facets[c, le]
            p0, p1, _, n, L = facet_frame(mesh, f)
            pts, w = physical_facet_rule(p0, p1, 2 * self.order + 2)
            s = facet_param(mesh, f, pts)
            leg = legendre_values(self.n_edge_dofs - 1, s)
            vals = self._vec_mono_eval(c, pts)  # (nq, nloc, 2)
            vn = vals @ n
            V[row : row + self.n_edge_dofs] = (
                np.einsum("qm,qj,q->mj", leg, vn, w) / L
            )
            row += self.n_edge_dofs
        if self.n_interior:
            V[row:] = self._interior_functionals(c)
        return V

    def _interior_functionals(self, c: int) -> np.ndarray:
        raise NotImplementedError

    @tab_memo
    def tabulate(self, c: int, pts) -> np.ndarray:
        return np.einsum("qjd,ji->qid", self._vec_mono_eval(c, pts), self.coeffs[c])

    @tab_memo
    def tabulate_grad(self, c: int, pts) -> np.ndarray:
        return np.einsum(
            "qjde,ji->qide", self._vec_mono_grad(c, pts), self.coeffs[c]
        )

    @tab_memo
    def tabulate_div(self, c: int, pts) -> np.ndarray:
        g = self.tabulate_grad(c, pts)
        return np.trace(g, axis1=2, axis2=3)

    def facet_dofs(self, f: int) -> np.ndarray:
        return self.dofmap.facet_to_global[f]


class BDMSpace(_HDivSpace):
    """BDM_k: full [P_k]^2 per cell, dim (k+1)(k+2); k+1 normal moments
    per edge plus k^2-1 interior functionals (gradient moments and
    bubble-curl moments, the classical unisolvent set)."""

    kind = "hdiv_bdm"

    def __init__(self, mesh: Mesh, order: int, dirichlet_tags=(TAG_WALL,)):
        if not 1 <= order <= MAX_ORDER:
            raise SpaceError(f"hdiv_bdm order {order} unsupported (1..{MAX_ORDER})")
        self.order = order
        k = order
        self.exps = mono_exponents(k)
        self.n_edge_dofs = k + 1
        self.nloc = (k + 1) * (k + 2)
        self.n_interior = k * k - 1
        super().__init__(mesh, dirichlet_tags)

    def _barycentric(self, c: int):
        """Coefficient rows (3, 3): lam_i(x, y) = a + b x + c y (scaled coords)."""
        pts = self._scaled(c, self.mesh.vertices[self.mesh.cells[c]])
        A = np.column_stack([np.ones(3), pts])
        return np.linalg.inv(A).T  # row i: coefficients of lam_i

    def _interior_functionals(self, c: int) -> np.ndarray:
        """Moments (1/A) int v . w dx against w in
        {grad q : q in P_{k-1}, deg q >= 1} u {curl(b q) : q in P_{k-2}}."""
        k = self.order
        mesh = self.mesh
        area = mesh.cell_area(c)
        pts, w = physical_cell_rule(
            mesh.vertices[mesh.cells[c]], 2 * k + 2
        )
        sp = self._scaled(c, pts)
        h = self.hscale[c]

        fields = []
        exps_km1 = mono_exponents(k - 1)[1:]  # drop the constant
        gq = mono_grad(exps_km1, sp) / h  # (nq, nm, 2)
        for j in range(gq.shape[1]):
            fields.append(gq[:, j, :])
        if k >= 2:
            lam = self._barycentric(c)
            lam_exps = mono_exponents(1)  # 1, x, y
            lv = mono_eval(lam_exps, sp) @ lam.T  # (nq, 3) barycentric values
            lg = np.einsum(
                "qmd,im->qid", mono_grad(lam_exps, sp) / h, lam
            )  # (nq, 3, 2)
            b = lv[:, 0] * lv[:, 1] * lv[:, 2]
            gb = (
                lg[:, 0] * (lv[:, 1] * lv[:, 2])[:, None]
                + lg[:, 1] * (lv[:, 0] * lv[:, 2])[:, None]
                + lg[:, 2] * (lv[:, 0] * lv[:, 1])[:, None]
            )
            exps_km2 = mono_exponents(k - 2)
            qv = mono_eval(exps_km2, sp)
            qg = mono_grad(exps_km2, sp) / h
            for j in range(qv.shape[1]):
                gw = gb * qv[:, j : j + 1] + b[:, None] * qg[:, j, :]
                curl = np.column_stack([gw[:, 1], -gw[:, 0]])
                fields.append(curl)

        vals = self._vec_mono_eval(c, pts)  # (nq, nloc, 2)
        rows = [
            np.einsum("qjd,qd,q->j", vals, fld, w) / area for fld in fields
        ]
        return np.array(rows)

    def interior_functionals_applied(self, c: int, fn) -> np.ndarray:
        """Interior functionals applied to an analytic vector field."""
        if not self.n_interior:
            return np.zeros(0)
        k = self.order
        mesh = self.mesh
        area = mesh.cell_area(c)
        pts, w = physical_cell_rule(mesh.vertices[mesh.cells[c]], 2 * k + 4)
        vals = np.asarray(fn(pts))
        sp = self._scaled(c, pts)
        h = self.hscale[c]
        fields = []
        exps_km1 = mono_exponents(k - 1)[1:]
        gq = mono_grad(exps_km1, sp) / h
        for j in range(gq.shape[1]):
            fields.append(gq[:, j, :])
        if k >= 2:
            lam = self._barycentric(c)
            lam_exps = mono_exponents(1)
            lv = mono_eval(lam_exps, sp) @ lam.T
            lg = np.einsum("qmd,im->qid", mono_grad(lam_exps, sp) / h, lam)
            b = lv[:, 0] * lv[:, 1] * lv[:, 2]
            gb = (
                lg[:, 0] * (lv[:, 1] * lv[:, 2])[:, None]
                + lg[:, 1] * (lv[:, 0] * lv[:, 2])[:, None]
                + lg[:, 2] * (lv[:, 0] * lv[:, 1])[:, None]
            )
            exps_km2 = mono_exponents(k - 2)
            qv = mono_eval(exps_km2, sp)
            qg = mono_grad(exps_km2, sp) / h
            for j in range(qv.shape[1]):
                gw = gb * qv[:, j : j + 1] + b[:, None] * qg[:, j, :]
                fields.append(np.column_stack([gw[:, 1], -gw[:, 0]]))
        return np.array(
            [np.einsum("qd,qd,q->", vals, fld, w) / area for fld in fields]
        )


class RTSpace(_HDivSpace):
    """RT_0: span{(1,0), (0,1), (x,y)} per cell, one normal moment per
    edge; 2D dimension (p+1)(p+3) = 3 at p = 0."""

    kind = "hdiv_rt"

    def __init__(self, mesh: Mesh, dirichlet_tags=(TAG_WALL,)):
        self.order = 1  # trace degree used for quadrature sizing
        self.n_edge_dofs = 1
        self.nloc = 3
        self.n_interior = 0
        super().__init__(mesh, dirichlet_tags)

    def _vec_mono_eval(self, c: int, pts) -> np.ndarray:
        sp = self._scaled(c, pts)
        nq = len(sp)
        out = np.zeros((nq, 3, 2))
        out[:, 0, 0] = 1.0
        out[:, 1, 1] = 1.0
        out[:, 2, :] = sp
        return out

    def _vec_mono_grad(self, c: int, pts) -> np.ndarray:
        nq = len(np.asarray(pts))
        out = np.zeros((nq, 3, 2, 2))
        out[:, 2, 0, 0] = 1.0 / self.hscale[c]
        out[:, 2, 1, 1] = 1.0 / self.hscale[c]
        return out


class FacetSpace:
    """Scalar trace space on the skeleton: k+1 Legendre modes per facet
    in the global facet parameter.  Tangential variant multiplies by the
    global unit tangent."""

    def __init__(self, mesh: Mesh, order: int, tangential: bool, dirichlet_tags=(TAG_WALL,)):
        if not 0 <= order <= MAX_ORDER:
            raise SpaceError(f"facet space order {order} unsupported (0..{MAX_ORDER})")
        self.mesh = mesh
        self.order = order
        self.tangential = tangential
        self.kind = "facet_tangential" if tangential else "facet_scalar"
        self.facet_rep = _facet_alias(mesh)
        frs = np.unique(self.facet_rep)
        self._fid = {int(r): i for i, r in enumerate(frs)}
        ne = order + 1
        self.n_facet_dofs = ne
        nd = len(frs) * ne
        f2g = [
            np.arange(
                self._fid[int(self.facet_rep[f])] * ne,
                self._fid[int(self.facet_rep[f])] * ne + ne,
            )
            for f in range(mesh.n_facets)
        ]
        c2g = [
            np.concatenate([f2g[mesh.cell_facets[c, le]] for le in range(3)])
            for c in range(mesh.n_cells)
        ]
        dmask = np.zeros(nd, bool)
        for f in range(mesh.n_facets):
            if mesh.boundary_tags[f] in dirichlet_tags:
                dmask[f2g[f]] = True
        self.dofmap = DofMap(
            n_dofs=nd,
            cell_to_global=c2g,
            facet_to_global=f2g,
            dirichlet_mask=dmask,
            periodic_alias={
                int(f): int(r) for f, r in enumerate(self.facet_rep) if r != f
            },
            condensable_mask=np.zeros(nd, bool),
        )

    @property
    def ndof(self) -> int:
        return self.dofmap.n_dofs

    @property
    def dirichlet(self) -> np.ndarray:
        return self.dofmap.dirichlet_mask

    def facet_dofs(self, f: int) -> np.ndarray:
        return self.dofmap.facet_to_global[f]

    def cell_dofs(self, c: int) -> np.ndarray:
        return self.dofmap.cell_to_global[c]

    @tab_memo
    def tabulate_facet(self, f: int, pts) -> np.ndarray:
        """Values at points on facet f: scalar (nq, k+1) or
        tangential (nq, k+1, 2)."""
        s = facet_param(self.mesh, f, np.asarray(pts, float))
        leg = legendre_values(self.order, s)
        if not self.tangential:
            return leg
        _, _, t, _, _ = facet_frame(self.mesh, f)
        return leg[:, :, None] * t[None, None, :]


class DGScalarSpace(_ElementSpace):
    """Discontinuous P_k with a per-cell L2-orthonormal basis."""

    kind = "dg_scalar"

    def __init__(self, mesh: Mesh, order: int, condensable: bool = False):
        if not 0 <= order <= MAX_ORDER:
            raise SpaceError(f"dg_scalar order {order} unsupported (0..{MAX_ORDER})")
        super().__init__(mesh)
        self.order = order
        self.exps = mono_exponents(order)
        self.nloc = (order + 1) * (order + 2) // 2
        coeffs = []
        for c in range(mesh.n_cells):
            pts, w = physical_cell_rule(mesh.vertices[mesh.cells[c]], 2 * order + 1)
            phi = mono_eval(self.exps, self._scaled(c, pts))
            G = np.einsum("qi,qj,q->ij", phi, phi, w)
            L = np.linalg.cholesky(G)
            coeffs.append(np.linalg.inv(L).T)  # columns: orthonormal basis
        self.coeffs = coeffs
        nd = mesh.n_cells * self.nloc
        self.dofmap = DofMap(
            n_dofs=nd,
            cell_to_global=[
                np.arange(c * self.nloc, (c + 1) * self.nloc)
                for c in range(mesh.n_cells)
            ],
            facet_to_global=None,
            dirichlet_mask=np.zeros(nd, bool),
            periodic_alias={},
            condensable_mask=np.full(nd, condensable),
        )

    @tab_memo
    def tabulate(self, c: int, pts) -> np.ndarray:
        return mono_eval(self.exps, self._scaled(c, pts)) @ self.coeffs[c]

    @tab_memo
    def tabulate_grad(self, c: int, pts) -> np.ndarray:
        g = mono_grad(self.exps, self._scaled(c, pts)) / self.hscale[c]
        return np.einsum("qmd,ml->qld", g, self.coeffs[c])


class DGSymTensorSpace:
    """Discontinuous symmetric 2x2 tensors with an orthonormal basis in
    the Frobenius inner product, so the mass matrix is the identity."""

    kind = "dg_sym_tensor"
    # component templates: xx, yy, symmetrized xy (unit Frobenius norm)
    _templates = np.array(
        [
            [[1.0, 0.0], [0.0, 0.0]],
            [[0.0, 0.0], [0.0, 1.0]],
            [[0.0, 1.0 / np.sqrt(2.0)], [1.0 / np.sqrt(2.0), 0.0]],
        ]
    )

    def __init__(self, mesh: Mesh, order: int):
        self.mesh = mesh
        self.order = order
        self.scalar = DGScalarSpace(mesh, order)
        self.nloc = 3 * self.scalar.nloc
        nd = mesh.n_cells * self.nloc
        self.dofmap = DofMap(
            n_dofs=nd,
            cell_to_global=[
                np.arange(c * self.nloc, (c + 1) * self.nloc)
                for c in range(mesh.n_cells)
            ],
            facet_to_global=None,
            dirichlet_mask=np.zeros(nd, bool),
            periodic_alias={},
            condensable_mask=np.zeros(nd, bool),
        )

    @property
    def ndof(self) -> int:
        return self.dofmap.n_dofs

    def cell_dofs(self, c: int) -> np.ndarray:
        return self.dofmap.cell_to_global[c]

    @tab_memo
    def tabulate(self, c: int, pts) -> np.ndarray:
        """Tensor basis values (nq, nloc, 2, 2); local index l = 3*m + t
        over scalar modes m and component templates t."""
        phi = self.scalar.tabulate(c, pts)  # (nq, ns)
        return np.einsum("qm,tij->qmtij", phi, self._templates).reshape(
            len(phi), self.nloc, 2, 2
        )


# ---------------------------------------------------------------------------
# public constructors / operations


def make_space(mesh: Mesh, desc: FESpaceDesc, dirichlet_tags=(TAG_WALL,)):
    """Build the described space; returns (space, DofMap)."""
    kind = desc.kind
    if kind == "h1_lagrange":
        sp = LagrangeSpace(mesh, desc.order, desc.ncomp, dirichlet_tags)
    elif kind == "hdiv_bdm":
        sp = BDMSpace(mesh, desc.order, dirichlet_tags)
    elif kind == "hdiv_rt":
        if desc.order != 0:
            raise SpaceError("hdiv_rt supports order 0 only")
        sp = RTSpace(mesh, dirichlet_tags)
    elif kind == "facet_tangential":
        sp = FacetSpace(mesh, desc.order, tangential=True, dirichlet_tags=dirichlet_tags)
    elif kind == "facet_scalar":
        sp = FacetSpace(mesh, desc.order, tangential=False, dirichlet_tags=dirichlet_tags)
    elif kind == "dg_scalar":
        sp = DGScalarSpace(mesh, desc.order)
    elif kind == "dg_sym_tensor":
        sp = DGSymTensorSpace(mesh, desc.order)
    else:
        raise SpaceError(f"unknown space kind {kind!r}")
    return sp, sp.dofmap


def build_dofmap(space, mesh: Mesh, periodic_pairs=None, dirichlet_tags=None) -> DofMap:
    """DOF map of a built space (aliasing applied before Dirichlet).

    Spaces resolve aliasing/Dirichlet at construction; this accessor
    validates the request against the mesh the space was built on.
    """
    if space.mesh is not mesh:
        raise SpaceError("space was built on a different mesh")
    if dirichlet_tags:
        for f in range(mesh.n_facets):
            tag = mesh.boundary_tags[f]
            if tag in dirichlet_tags and any(
                f in p for p in mesh.periodic_pairs
            ):
                raise SpaceError(f"facet {f} is both Dirichlet and periodic")
    return space.dofmap


def eval_basis(space, cell: int, ref_point):
    """Basis (values, gradients, divergences) at a reference point of
    `cell`; reference coords are barycentric with respect to vertices
    (1-x-y, x, y) on the unit triangle."""
    r = np.atleast_2d(np.asarray(ref_point, float))
    if np.any(r < -1e-12) or np.any(r.sum(axis=1) > 1.0 + 1e-12):
        raise SpaceError(f"reference point {ref_point} outside the unit triangle")
    v = space.mesh.vertices[space.mesh.cells[cell]]
    pts = v[0] + r @ np.stack([v[1] - v[0], v[2] - v[0]])
    vals = space.tabulate(cell, pts)
    grads = space.tabulate_grad(cell, pts) if hasattr(space, "tabulate_grad") else None
    vector_valued = hasattr(space, "tabulate_div") and getattr(space, "ncomp", 2) == 2
    divs = space.tabulate_div(cell, pts) if vector_valued else None
    return vals, grads, divs


def interpolate(space, fn) -> np.ndarray:
    """Apply the space's DOF functionals to an analytic field.

    `fn(points) -> values` with points (n, 2); values (n,) for scalar
    spaces, (n, 2) for vector spaces, (n, 2, 2) for tensor spaces.
    """
    mesh = space.mesh
    u = np.zeros(space.ndof)
    if isinstance(space, LagrangeSpace):
        vals = np.asarray(fn(space.node_coords))
        if space.ncomp == 1:
            return vals.astype(float)
        return vals.reshape(-1).astype(float)
    if isinstance(space, _HDivSpace):
        done = set()
        for f in range(mesh.n_facets):
            r = int(space.facet_rep[f])
            if r in done:
                continue
            done.add(r)
            u[space.facet_dofs(r)] = space.edge_functionals_applied(0, r, fn)
        if getattr(space, "n_interior", 0):
            for c in range(mesh.n_cells):
                dofs = space.cell_dofs(c)[-space.n_interior :]
                u[dofs] = space.interior_functionals_applied(c, fn)
        return u
    if isinstance(space, FacetSpace):
        done = set()
        for f in range(mesh.n_facets):
            r = int(space.facet_rep[f])
            if r in done:
                continue
            done.add(r)
            p0, p1, t, _, L = facet_frame(mesh, r)
            pts, w = physical_facet_rule(p0, p1, 2 * space.order + 2)
            s = facet_param(mesh, r, pts)
            leg = legendre_values(space.order, s)
            vals = np.asarray(fn(pts))
            comp = vals @ t if space.tangential else vals
            u[space.facet_dofs(r)] = (leg * (comp * w)[:, None]).sum(axis=0) / L
        return u
    if isinstance(space, DGScalarSpace):
        for c in range(mesh.n_cells):
            pts, w = physical_cell_rule(
                mesh.vertices[mesh.cells[c]], 2 * space.order + 3
            )
            phi = space.tabulate(c, pts)
            u[space.cell_dofs(c)] = np.einsum("q,ql,q->l", np.asarray(fn(pts)), phi, w)
        return u
    if isinstance(space, DGSymTensorSpace):
        for c in range(mesh.n_cells):
            pts, w = physical_cell_rule(
                mesh.vertices[mesh.cells[c]], 2 * space.order + 3
            )
            phi = space.tabulate(c, pts)
            vals = np.asarray(fn(pts))
            u[space.cell_dofs(c)] = np.einsum("qij,qlij,q->l", vals, phi, w)
        return u
    raise SpaceError(f"interpolate does not support {type(space).__name__}")
