"""Finite element space oracles: dimensions, duality, continuity,
divergence exactness, interpolation and periodic aliasing."""

import numpy as np
import pytest

from divfree_flow.fe_spaces import (
    BDMSpace,
    DGScalarSpace,
    DGSymTensorSpace,
    FacetSpace,
    FESpaceDesc,
    LagrangeSpace,
    RTSpace,
    SpaceError,
    build_dofmap,
    eval_basis,
    facet_frame,
    facet_param,
    interpolate,
    legendre_values,
    make_space,
)
from divfree_flow.mesh import (
    TAG_INTERIOR,
    GradingSpec,
    build_channel_mesh,
    build_rect_mesh,
    mesh_from_cells,
)
from divfree_flow.quadrature import physical_cell_rule, physical_facet_rule


def single_triangle():
    return mesh_from_cells([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])


def skewed_triangle():
    return mesh_from_cells([[0.2, 0.1], [1.3, 0.4], [0.5, 1.7]], [[0, 1, 2]])


def two_cell_square():
    return mesh_from_cells(
        [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], [[0, 1, 2], [0, 2, 3]]
    )


def channel(nx=2, n=2, ratio=1.0, Lx=1.0, Ly=1.0):
    return build_channel_mesh(Lx, Ly, nx, GradingSpec(n, ratio))


class TestDimensions:
    @pytest.mark.parametrize("k,dim", [(1, 6), (2, 12), (3, 20)])
    def test_bdm_cell_dim(self, k, dim):
        sp = BDMSpace(single_triangle(), k)
        assert sp.nloc == dim == (k + 1) * (k + 2)
        assert sp.ndof == dim  # single cell: all DOFs belong to it

    def test_rt0_cell_dim(self):
        sp = RTSpace(single_triangle())
        assert sp.nloc == 3  # (p+1)(p+3) at p=0
        assert sp.ndof == 3

    def test_dg_pressure_not_shared(self):
        m = two_cell_square()
        sp = DGScalarSpace(m, 1)
        assert sp.nloc == 3
        assert set(sp.cell_dofs(0)) & set(sp.cell_dofs(1)) == set()

    @pytest.mark.parametrize("k,nloc", [(1, 3), (2, 6), (3, 10)])
    def test_lagrange_dims(self, k, nloc):
        sp = LagrangeSpace(single_triangle(), k)
        assert sp.nloc_scalar == nloc

    def test_make_space_dispatch(self):
        m = two_cell_square()
        for desc, cls in [
            (FESpaceDesc("h1_lagrange", 2, 2), LagrangeSpace),
            (FESpaceDesc("hdiv_bdm", 2), BDMSpace),
            (FESpaceDesc("hdiv_rt", 0), RTSpace),
            (FESpaceDesc("facet_tangential", 2), FacetSpace),
            (FESpaceDesc("facet_scalar", 1), FacetSpace),
            (FESpaceDesc("dg_scalar", 1), DGScalarSpace),
            (FESpaceDesc("dg_sym_tensor", 1), DGSymTensorSpace),
        ]:
            sp, dm = make_space(m, desc)
            assert isinstance(sp, cls)
            assert dm.n_dofs == sp.ndof

    def test_unsupported(self):
        m = single_triangle()
        with pytest.raises(SpaceError):
            make_space(m, FESpaceDesc("hdiv_bdm", 4))
        with pytest.raises(SpaceError):
            make_space(m, FESpaceDesc("hdiv_rt", 1))
        with pytest.raises(SpaceError):
            make_space(m, FESpaceDesc("nurbs", 2))


class TestDuality:
    """Basis functions are dual to their DOF functionals."""

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_bdm_edge_moments(self, k, mesh=None):
        m = mesh or skewed_triangle()
        sp = BDMSpace(m, k)
        for i in range(sp.nloc):
            coef = np.zeros(sp.ndof)
            coef[i] = 1.0
            moments = []
            for f in range(m.n_facets):
                moments.extend(
                    sp.edge_functionals_applied(
                        0, f, lambda pts: sp.tabulate(0, pts)[:, i, :]
                    )
                )
            expected = np.zeros(sp.nloc)
            expected[i] = 1.0 if i < 3 * (k + 1) else 0.0
            assert np.allclose(moments, expected[: 3 * (k + 1)], atol=1e-12)

    def test_rt0_normal_moments(self):
        m = skewed_triangle()
        sp = RTSpace(m)
        for i in range(3):
            moments = [
                sp.edge_functionals_applied(
                    0, f, lambda pts: sp.tabulate(0, pts)[:, i, :]
                )[0]
                for f in range(3)
            ]
            expected = np.zeros(3)
            expected[i] = 1.0
            assert np.allclose(moments, expected, atol=1e-13)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_lagrange_nodal(self, k):
        m = skewed_triangle()
        sp = LagrangeSpace(m, k)
        vals = sp.tabulate_scalar(0, sp.node_coords[sp.cell_nodes[0]])
        assert np.allclose(vals, np.eye(sp.nloc_scalar), atol=1e-12)


class TestPartitionOfUnity:
    def test_p1_partition(self):
        sp = LagrangeSpace(skewed_triangle(), 1)
        pts = np.array([[0.5, 0.5], [0.7, 0.3], [0.4, 0.9]])
        vals = sp.tabulate_scalar(0, pts)
        assert np.allclose(vals.sum(axis=1), 1.0, atol=1e-13)

    def test_p3_partition(self):
        sp = LagrangeSpace(skewed_triangle(), 3)
        pts = np.array([[0.6, 0.5], [0.5, 0.4]])
        vals = sp.tabulate_scalar(0, pts)
        assert np.allclose(vals.sum(axis=1), 1.0, atol=1e-12)


class TestHDivProperties:
    def test_bdm1_edge_bubble_divergence_free(self):
        """The curl-type edge mode of BDM1 has zero divergence; since
        constants also have zero divergence, each edge carries at least
        one divergence-free combination of its two modes."""
        sp = BDMSpace(skewed_triangle(), 1)
        pts = np.array([[0.55, 0.45], [0.7, 0.5], [0.45, 0.8]])
        div = sp.tabulate_div(0, pts)  # (nq, 6)
        # divergence of every BDM1 function is constant (P0); moreover the
        # six basis functions span two div-free directions per edge pair
        assert np.allclose(div - div[0:1, :], 0.0, atol=1e-11)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_divergence_in_dg_km1(self, k):
        """div BDM_k lies in P_{k-1}: projecting onto DG(k-1) leaves no
        residual at random interior points."""
        m = skewed_triangle()
        sp = BDMSpace(m, k)
        dg = DGScalarSpace(m, k - 1)
        pts_q, w = physical_cell_rule(m.vertices[m.cells[0]], 2 * k + 2)
        rng = np.random.default_rng(7)
        test_pts = m.vertices[m.cells[0]][0] + rng.random((5, 1)) * 0.2 + 0.1
        for i in range(sp.nloc):
            div_q = sp.tabulate_div(0, pts_q)[:, i]
            phi_q = dg.tabulate(0, pts_q)
            coef = np.einsum("q,ql,q->l", div_q, phi_q, w)  # orthonormal basis
            recon = dg.tabulate(0, test_pts) @ coef
            direct = sp.tabulate_div(0, test_pts)[:, i]
            assert np.allclose(recon, direct, atol=1e-10)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_normal_trace_continuity(self, k):
        """Random coefficient vector: u.n jumps across interior facets
        vanish at facet quadrature points."""
        m = channel(nx=2, n=2, ratio=1.2)
        sp = BDMSpace(m, k)
        rng = np.random.default_rng(3)
        u = rng.standard_normal(sp.ndof)
        for f in range(m.n_facets):
            c0, c1 = m.facet_cells[f]
            if c1 == -1:
                continue
            pts, _ = physical_facet_rule(*m.vertices[m.facets[f]], degree=2 * k)
            n = m.facet_normals[f]
            un0 = np.einsum(
                "qid,d,i->q", sp.tabulate(c0, pts), n, u[sp.cell_dofs(c0)]
            )
            un1 = np.einsum(
                "qid,d,i->q", sp.tabulate(c1, pts), n, u[sp.cell_dofs(c1)]
            )
            assert np.max(np.abs(un0 - un1)) <= 1e-12 * max(1.0, np.abs(u).max())

    def test_periodic_normal_trace_continuity(self):
        """Across the periodic cut the shared facet DOFs give matching
        normal traces after translation."""
        m = channel(nx=3, n=2)
        sp = BDMSpace(m, 2)
        rng = np.random.default_rng(5)
        u = rng.standard_normal(sp.ndof)
        for (fa, fb), shift in zip(m.periodic_pairs, m.periodic_shifts):
            ca, cb = m.facet_cells[fa, 0], m.facet_cells[fb, 0]
            pts_a, _ = physical_facet_rule(*m.vertices[m.facets[fa]], degree=4)
            pts_b = pts_a + shift
            _, _, _, ng, _ = facet_frame(m, fa)
            una = np.einsum(
                "qid,d,i->q", sp.tabulate(ca, pts_a), ng, u[sp.cell_dofs(ca)]
            )
            unb = np.einsum(
                "qid,d,i->q", sp.tabulate(cb, pts_b), ng, u[sp.cell_dofs(cb)]
            )
            assert np.max(np.abs(una - unb)) <= 1e-11


class TestEvalBasis:
    def test_bdm1_divfree_combination(self):
        # the pure edge bubble (Legendre mode 1 on an edge) is div-free
        sp = BDMSpace(single_triangle(), 1)
        vals, grads, divs = eval_basis(sp, 0, [0.25, 0.25])
        assert divs.shape == (1, 6)
        # odd moments pair with the div-free bubble: total div of each
        # edge's mode-1 function is zero
        for e in range(3):
            assert abs(divs[0, 2 * e + 1]) <= 1e-11

    def test_outside_reference(self):
        sp = LagrangeSpace(single_triangle(), 1)
        with pytest.raises(SpaceError):
            eval_basis(sp, 0, [0.8, 0.8])

    def test_p1_partition_of_unity(self):
        sp = LagrangeSpace(single_triangle(), 1)
        vals, _, _ = eval_basis(sp, 0, [0.3, 0.3])
        assert vals.sum() == pytest.approx(1.0, abs=1e-14)


class TestInterpolation:
    def test_constant_in_bdm1(self):
        sp = BDMSpace(skewed_triangle(), 1)
        u = interpolate(sp, lambda p: np.tile([1.0, 0.0], (len(p), 1)))
        pts = np.array([[0.6, 0.5], [0.8, 0.7]])
        vals = np.einsum("qid,i->qd", sp.tabulate(0, pts), u)
        assert np.allclose(vals, [1.0, 0.0], atol=1e-12)

    def test_parabola_in_bdm2(self):
        m = channel(nx=2, n=2)
        sp = BDMSpace(m, 2)
        fn = lambda p: np.column_stack([p[:, 1] * (1.0 - p[:, 1]), 0.0 * p[:, 0]])
        u = interpolate(sp, fn)
        rng = np.random.default_rng(0)
        pts = rng.random((20, 2))
        for c in range(m.n_cells):
            vals = np.einsum("qid,i->qd", sp.tabulate(c, pts), u[sp.cell_dofs(c)])
            assert np.allclose(vals, fn(pts), atol=1e-12)

    def test_sin_nodal_p1(self):
        m = channel(nx=2, n=2)
        sp = LagrangeSpace(m, 1)
        fn = lambda p: np.sin(p[:, 0] + 2.0 * p[:, 1])
        u = interpolate(sp, fn)
        # exact at the nodes by construction
        assert np.allclose(u, fn(sp.node_coords), atol=1e-15)

    def test_facet_tangential_roundtrip(self):
        m = two_cell_square()
        sp = FacetSpace(m, 2, tangential=True)
        fn = lambda p: np.column_stack([p[:, 0] + p[:, 1] ** 2, p[:, 0] ** 2])
        u = interpolate(sp, fn)
        for f in range(m.n_facets):
            p0, p1, t, _, _ = facet_frame(m, f)
            pts, _ = physical_facet_rule(p0, p1, 4)
            vals = np.einsum("qid,i->qd", sp.tabulate_facet(f, pts), u[sp.facet_dofs(f)])
            tangential_part = (np.asarray(fn(pts)) @ t)[:, None] * t[None, :]
            assert np.allclose(vals, tangential_part, atol=1e-12)

    def test_dg_projection_exact_for_polys(self):
        m = two_cell_square()
        sp = DGScalarSpace(m, 2)
        fn = lambda p: 1.0 + p[:, 0] - 3.0 * p[:, 1] + p[:, 0] * p[:, 1]
        u = interpolate(sp, fn)
        pts = np.array([[0.6, 0.2], [0.8, 0.5]])
        vals = sp.tabulate(0, pts) @ u[sp.cell_dofs(0)]
        assert np.allclose(vals, fn(pts), atol=1e-12)


class TestPeriodicAliasing:
    def test_facet_tangential_aliased(self):
        m = build_rect_mesh(1.0, 1.0, 2, np.array([0.0, 1.0]))
        sp = FacetSpace(m, 2, tangential=True)
        (fa, fb) = m.periodic_pairs[0]
        assert np.array_equal(sp.facet_dofs(fa), sp.facet_dofs(fb))

    def test_lagrange_vertex_aliasing(self):
        m = channel(nx=2, n=1)
        sp = LagrangeSpace(m, 1)
        # periodic field sampled at aliased nodes must be single-valued:
        # interpolation of sin(2 pi x) has equal values on both sides
        fn = lambda p: np.sin(2.0 * np.pi * p[:, 0]) + p[:, 1]
        u = interpolate(sp, fn)
        # continuity at the cut: evaluate along x=0 and x=1 rows
        left = [v for v in range(m.n_vertices) if m.vertices[v][0] == 0.0]
        right = [v for v in range(m.n_vertices) if m.vertices[v][0] == 1.0]
        assert len(left) == len(right)
        # all right vertices alias to left reps
        for v in right:
            assert sp.vertex_rep[v] != v

    def test_dirichlet_mask_walls(self):
        m = channel(nx=2, n=2)
        sp = BDMSpace(m, 2)
        for f in range(m.n_facets):
            if m.boundary_tags[f] == "wall":
                assert sp.dirichlet[sp.facet_dofs(f)].all()
            elif m.boundary_tags[f] == TAG_INTERIOR:
                assert not sp.dirichlet[sp.facet_dofs(f)].any()

    def test_condensable_partition(self):
        m = channel(nx=2, n=2)
        sp = BDMSpace(m, 2)
        dm = build_dofmap(sp, m)
        assert dm.n_condensable == 3 * m.n_cells  # k^2-1 = 3 per cell for k=2
        assert dm.n_retained == dm.n_dofs - dm.n_condensable
        # condensable DOFs appear in exactly one cell
        counts = np.zeros(dm.n_dofs, int)
        for c in range(m.n_cells):
            counts[sp.cell_dofs(c)] += 1
        assert np.all(counts[dm.condensable_mask] == 1)


class TestOrthonormalTensorBasis:
    def test_mass_identity(self):
        m = two_cell_square()
        sp = DGSymTensorSpace(m, 1)
        for c in range(m.n_cells):
            pts, w = physical_cell_rule(m.vertices[m.cells[c]], 4)
            phi = sp.tabulate(c, pts)  # (nq, nloc, 2, 2)
            M = np.einsum("qaij,qbij,q->ab", phi, phi, w)
            assert np.allclose(M, np.eye(sp.nloc), atol=1e-13)

    def test_symmetry(self):
        sp = DGSymTensorSpace(two_cell_square(), 1)
        pts = np.array([[0.5, 0.25]])
        phi = sp.tabulate(0, pts)
        assert np.allclose(phi, np.swapaxes(phi, -1, -2), atol=1e-15)


class TestLegendre:
    def test_orthonormality(self):
        s, w = np.polynomial.legendre.leggauss(8)
        vals = legendre_values(3, s)
        G = np.einsum("qi,qj,q->ij", vals, vals, 0.5 * w)
        assert np.allclose(G, np.eye(4), atol=1e-13)

    def test_facet_param_endpoints(self):
        m = two_cell_square()
        for f in range(m.n_facets):
            p0, p1, _, _, _ = facet_frame(m, f)
            s = facet_param(m, f, np.array([p0, p1, 0.5 * (p0 + p1)]))
            assert np.allclose(s, [-1.0, 1.0, 0.0], atol=1e-13)
