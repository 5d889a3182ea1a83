"""Structured triangle meshes of rectangular channel domains.

Contains:
    GradingSpec        -- wall-normal geometric grading description
    Mesh               -- immutable triangulation with facet skeleton
    build_channel_mesh -- periodic-in-x channel mesh (walls top/bottom)
    build_rect_mesh    -- general rectangle mesh, periodicity per axis
    periodic_pairs     -- geometric matching of periodic facets
    wall_distance      -- distance to the nearest wall
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PAIR_TOL = 1e-12

TAG_INTERIOR = "interior"
TAG_WALL = "wall"
TAG_PERIODIC_IN = "periodic_in"
TAG_PERIODIC_OUT = "periodic_out"
TAG_PERIODIC_IN_Y = "periodic_in_y"
TAG_PERIODIC_OUT_Y = "periodic_out_y"


class MeshError(ValueError):
    """Raised for invalid mesh construction requests."""


def _cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


@dataclass(frozen=True)
class GradingSpec:
    """Wall-normal grading: geometric stretching from both walls.

    n_wall_normal cells per half-height, each a factor `ratio` taller
    than its wall-side neighbour.  target_first_cell is an optional
    wall-adjacent cell height in wall units (dimensionless y+); it is
    validated in build_channel_mesh when a wall unit length is known.
    """

    n_wall_normal: int
    ratio: float = 1.0
    target_first_cell: float | None = None

    def __post_init__(self):
        if self.n_wall_normal < 1:
            raise MeshError(f"n_wall_normal must be >= 1, got {self.n_wall_normal}")
        if self.ratio < 1.0:
            raise MeshError(f"grading ratio must be >= 1, got {self.ratio}")

    def first_cell_height(self, Ly: float) -> float:
        """Height of the wall-adjacent cell for channel height Ly."""
        n, r = self.n_wall_normal, self.ratio
        half = 0.5 * Ly
        if r == 1.0:
            return half / n
        return half * (r - 1.0) / (r**n - 1.0)

    def heights(self, Ly: float) -> np.ndarray:
        """Cell heights from y=0 to y=Ly, symmetric about the centerline."""
        n, r = self.n_wall_normal, self.ratio
        h0 = self.first_cell_height(Ly)
        lower = h0 * r ** np.arange(n)
        hs = np.concatenate([lower, lower[::-1]])
        # Remove closure drift so the heights sum to Ly exactly.
        hs *= Ly / hs.sum()
        return hs

    @staticmethod
    def solve_ratio(Ly: float, n: int, h0: float) -> float:
        """Ratio r >= 1 such that n geometrically stretched cells of first
        height h0 fill the half-height Ly/2.  Requires h0 <= Ly/(2n)."""
        half = 0.5 * Ly
        if not 0.0 < h0 <= half / n:
            raise MeshError(
                f"first cell height {h0} not reachable: need 0 < h0 <= {half / n}"
            )
        if abs(h0 - half / n) < 1e-15 * half:
            return 1.0

        def closure(r):
            return h0 * (r**n - 1.0) / (r - 1.0) - half

        lo, hi = 1.0 + 1e-12, 2.0
        while closure(hi) < 0.0:
            hi *= 2.0
        from scipy.optimize import brentq

        return float(brentq(closure, lo, hi, xtol=1e-15, rtol=1e-15))


@dataclass(frozen=True)
class Mesh:
    """Immutable 2D triangulation with facet skeleton and boundary tags.

    Facet normals point from facet_cells[f, 0] to facet_cells[f, 1]
    (outward on the boundary, where facet_cells[f, 1] == -1).
    """

    vertices: np.ndarray  # (nv, 2)
    cells: np.ndarray  # (nc, 3) CCW vertex triples
    facets: np.ndarray  # (nf, 2) vertex pairs
    facet_cells: np.ndarray  # (nf, 2), -1 marks boundary
    facet_normals: np.ndarray  # (nf, 2) unit normals
    cell_facets: np.ndarray  # (nc, 3); local edge j joins cell vertices j, j+1
    boundary_tags: np.ndarray  # (nf,) strings
    periodic_pairs: list = field(default_factory=list)  # [(f_in, f_out)]
    periodic_shifts: list = field(default_factory=list)  # translation per pair
    extent: tuple = (0.0, 0.0)  # (Lx, Ly)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_facets(self) -> int:
        return len(self.facets)

    def cell_area(self, c: int) -> float:
        v = self.vertices[self.cells[c]]
        return 0.5 * abs(_cross2(v[1] - v[0], v[2] - v[0]))

    def cell_areas(self) -> np.ndarray:
        v = self.vertices[self.cells]
        return 0.5 * np.abs(_cross2(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]))

    def facet_length(self, f: int) -> float:
        a, b = self.vertices[self.facets[f]]
        return float(np.hypot(*(b - a)))

    def facet_midpoint(self, f: int) -> np.ndarray:
        a, b = self.vertices[self.facets[f]]
        return 0.5 * (a + b)

    def dump(self, path) -> None:
        """Plain-text dump: `v x y`, `c i j k`, `f i j tag` lines."""
        with open(path, "w") as fh:
            for x, y in self.vertices:
                fh.write(f"v {x!r} {y!r}\n")
            for i, j, k in self.cells:
                fh.write(f"c {i} {j} {k}\n")
            for (i, j), tag in zip(self.facets, self.boundary_tags):
                fh.write(f"f {i} {j} {tag}\n")


def _grid_y(Ly: float, grading: GradingSpec) -> np.ndarray:
    ys = np.concatenate([[0.0], np.cumsum(grading.heights(Ly))])
    ys[-1] = Ly
    return ys


def build_rect_mesh(
    Lx: float,
    Ly: float,
    nx: int,
    y_coords: np.ndarray,
    periodic_x: bool = True,
    periodic_y: bool = False,
) -> Mesh:
    """Structured mesh of [0,Lx]x[0,Ly]: nx columns, rows at y_coords,
    each quad split along its lower-left/upper-right diagonal.

    Non-periodic sides are tagged wall.
    """
    if Lx <= 0.0 or Ly <= 0.0:
        raise MeshError(f"domain dimensions must be positive, got Lx={Lx}, Ly={Ly}")
    if nx < 1:
        raise MeshError(f"nx must be >= 1, got {nx}")
    y = np.asarray(y_coords, dtype=float)
    ny = len(y) - 1
    x = np.linspace(0.0, Lx, nx + 1)

    nvx, nvy = nx + 1, ny + 1
    vid = lambda i, j: j * nvx + i
    verts = np.empty((nvx * nvy, 2))
    for j in range(nvy):
        for i in range(nvx):
            verts[vid(i, j)] = (x[i], y[j])

    cells = []
    for j in range(ny):
        for i in range(nx):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            cells.append((a, b, c))  # lower-right triangle
            cells.append((a, c, d))  # upper-left triangle
    cells = np.array(cells, dtype=int)

    # Facet skeleton: unique edges, adjacency in cell order.
    edge_of = {}
    facets, facet_cells, cell_facets = [], [], np.full((len(cells), 3), -1, int)
    for c, tri in enumerate(cells):
        for le in range(3):
            a, b = tri[le], tri[(le + 1) % 3]
            key = (min(a, b), max(a, b))
            if key not in edge_of:
                edge_of[key] = len(facets)
                facets.append((a, b))
                facet_cells.append([c, -1])
            else:
                facet_cells[edge_of[key]][1] = c
            cell_facets[c, le] = edge_of[key]
    facets = np.array(facets, dtype=int)
    facet_cells = np.array(facet_cells, dtype=int)

    # Normals point from the first adjacent cell outward across the facet.
    normals = np.empty((len(facets), 2))
    for f, (a, b) in enumerate(facets):
        t = verts[b] - verts[a]
        n = np.array([t[1], -t[0]])
        n /= np.hypot(*n)
        c0 = facet_cells[f, 0]
        centroid = verts[cells[c0]].mean(axis=0)
        mid = 0.5 * (verts[a] + verts[b])
        if np.dot(n, mid - centroid) < 0.0:
            n = -n
        normals[f] = n

    tags = np.full(len(facets), TAG_INTERIOR, dtype=object)
    for f, (a, b) in enumerate(facets):
        if facet_cells[f, 1] != -1:
            continue
        ma, mb = verts[a], verts[b]
        mid = 0.5 * (ma + mb)
        if abs(mid[0] - 0.0) < PAIR_TOL and abs(ma[0]) < PAIR_TOL:
            tags[f] = TAG_PERIODIC_IN if periodic_x else TAG_WALL
        elif abs(mid[0] - Lx) < PAIR_TOL:
            tags[f] = TAG_PERIODIC_OUT if periodic_x else TAG_WALL
        elif abs(mid[1] - 0.0) < PAIR_TOL:
            tags[f] = TAG_PERIODIC_IN_Y if periodic_y else TAG_WALL
        elif abs(mid[1] - Ly) < PAIR_TOL:
            tags[f] = TAG_PERIODIC_OUT_Y if periodic_y else TAG_WALL
        else:  # pragma: no cover - structured generator never hits this
            raise MeshError(f"boundary facet {f} not on the rectangle boundary")

    mesh = Mesh(
        vertices=verts,
        cells=cells,
        facets=facets,
        facet_cells=facet_cells,
        facet_normals=normals,
        cell_facets=cell_facets,
        boundary_tags=tags,
        extent=(Lx, Ly),
    )

    pairs, shifts = [], []
    if periodic_x:
        px = periodic_pairs(mesh, axis=0, period=Lx)
        pairs += px
        shifts += [np.array([Lx, 0.0])] * len(px)
    if periodic_y:
        py = periodic_pairs(mesh, axis=1, period=Ly)
        pairs += py
        shifts += [np.array([0.0, Ly])] * len(py)
    mesh.periodic_pairs.extend(pairs)
    mesh.periodic_shifts.extend(shifts)
    return mesh


def build_channel_mesh(
    Lx: float,
    Ly: float,
    nx: int,
    grading: GradingSpec,
    wall_unit: float | None = None,
) -> Mesh:
    """Channel mesh: periodic in x, walls at y=0 and y=Ly, graded rows.

    When the grading carries a target_first_cell (in wall units) and a
    wall unit length is supplied, the achieved first cell height must be
    within a factor 2 of the target or construction fails.
    """
    if Lx <= 0.0 or Ly <= 0.0:
        raise MeshError(f"domain dimensions must be positive, got Lx={Lx}, Ly={Ly}")
    if grading.target_first_cell is not None and wall_unit is not None:
        h_target = grading.target_first_cell * wall_unit
        h0 = grading.first_cell_height(Ly)
        if not h_target / 2.0 <= h0 <= 2.0 * h_target:
            raise MeshError(
                f"grading gives first cell height {h0:.4e}, target "
                f"{h_target:.4e} (Dy+={grading.target_first_cell}) "
                "not reachable within factor 2 at this ratio/count"
            )
    return build_rect_mesh(Lx, Ly, nx, _grid_y(Ly, grading), periodic_x=True)


def mesh_from_cells(vertices, cells, boundary_tag: str = TAG_WALL) -> Mesh:
    """Mesh from explicit vertices/cells; boundary facets get one tag.

    Cells with negative orientation are flipped.  No periodicity.
    """
    verts = np.asarray(vertices, dtype=float)
    cells = np.asarray(cells, dtype=int).copy()
    for c, tri in enumerate(cells):
        v = verts[tri]
        if _cross2(v[1] - v[0], v[2] - v[0]) < 0.0:
            cells[c] = tri[[0, 2, 1]]
    edge_of = {}
    facets, facet_cells, cell_facets = [], [], np.full((len(cells), 3), -1, int)
    for c, tri in enumerate(cells):
        for le in range(3):
            a, b = tri[le], tri[(le + 1) % 3]
            key = (min(a, b), max(a, b))
            if key not in edge_of:
                edge_of[key] = len(facets)
                facets.append((a, b))
                facet_cells.append([c, -1])
            else:
                facet_cells[edge_of[key]][1] = c
            cell_facets[c, le] = edge_of[key]
    facets = np.array(facets, dtype=int)
    facet_cells = np.array(facet_cells, dtype=int)
    normals = np.empty((len(facets), 2))
    for f, (a, b) in enumerate(facets):
        t = verts[b] - verts[a]
        n = np.array([t[1], -t[0]])
        n /= np.hypot(*n)
        c0 = facet_cells[f, 0]
        centroid = verts[cells[c0]].mean(axis=0)
        mid = 0.5 * (verts[a] + verts[b])
        if np.dot(n, mid - centroid) < 0.0:
            n = -n
        normals[f] = n
    tags = np.array(
        [
            TAG_INTERIOR if facet_cells[f, 1] != -1 else boundary_tag
            for f in range(len(facets))
        ],
        dtype=object,
    )
    lo, hi = verts.min(axis=0), verts.max(axis=0)
    return Mesh(
        vertices=verts,
        cells=cells,
        facets=facets,
        facet_cells=facet_cells,
        facet_normals=normals,
        cell_facets=cell_facets,
        boundary_tags=tags,
        extent=(hi[0] - lo[0], hi[1] - lo[1]),
    )


def periodic_pairs(mesh: Mesh, axis: int, period: float) -> list:
    """Match periodic facets across `axis` by midpoint translation.

    Returns [(f_in, f_out)] sorted by the transverse coordinate; raises
    MeshError when any tagged facet has no translate.
    """
    tin = TAG_PERIODIC_IN if axis == 0 else TAG_PERIODIC_IN_Y
    tout = TAG_PERIODIC_OUT if axis == 0 else TAG_PERIODIC_OUT_Y
    fin = [f for f in range(mesh.n_facets) if mesh.boundary_tags[f] == tin]
    fout = [f for f in range(mesh.n_facets) if mesh.boundary_tags[f] == tout]
    if not fin or not fout:
        raise MeshError(f"no periodic facets tagged along axis {axis}")
    shift = np.zeros(2)
    shift[axis] = period
    out_mid = {f: mesh.facet_midpoint(f) for f in fout}
    pairs = []
    for f in fin:
        target = mesh.facet_midpoint(f) + shift
        match = [
            g for g, m in out_mid.items() if np.max(np.abs(m - target)) <= PAIR_TOL
        ]
        if len(match) != 1:
            raise MeshError(
                f"periodic facet {f} has {len(match)} translates at distance "
                f"{period} along axis {axis}"
            )
        pairs.append((f, match[0]))
        del out_mid[match[0]]
    if out_mid:
        raise MeshError(f"unmatched periodic facets: {sorted(out_mid)}")
    pairs.sort(key=lambda p: mesh.facet_midpoint(p[0])[1 - axis])
    return pairs


def wall_distance(mesh: Mesh, point) -> float:
    """Distance from `point` to the nearest wall (y=0 or y=Ly)."""
    x, y = point
    Lx, Ly = mesh.extent
    tol = 1e-12 * max(Lx, Ly)
    if not (-tol <= x <= Lx + tol and -tol <= y <= Ly + tol):
        raise MeshError(f"point {point} outside domain [0,{Lx}]x[0,{Ly}]")
    return float(min(y, Ly - y))
