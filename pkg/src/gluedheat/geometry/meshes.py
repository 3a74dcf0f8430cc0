"""Simplicial piece meshes and reference builders.

A piece is a flat simplicial mesh of intrinsic dimension 1 or 2 embedded in a
common ambient space.  Pieces are immutable after construction; the glued
complex refers to them by index.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.spatial import Delaunay

from ..errors import InvalidParameterError


def simplex_volumes(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Unsigned d-volume of each simplex, for cells embedded in any ambient dim.

    Uses the Gram determinant of the edge matrix, so it works for segments in
    R^3, triangles in R^3, etc.
    """
    v = vertices[cells]                     # (nc, d+1, amb)
    e = v[:, 1:, :] - v[:, :1, :]           # (nc, d, amb)
    gram = np.einsum("cik,cjk->cij", e, e)  # (nc, d, d)
    d = cells.shape[1] - 1
    det = np.linalg.det(gram)
    det = np.maximum(det, 0.0)
    fact = 1.0
    for i in range(2, d + 1):
        fact *= i
    return np.sqrt(det) / fact


class PieceMesh:
    """A single simplicial mesh piece.

    Parameters
    ----------
    name : str
        Identifier used in configs, glue maps and reports.
    dim : int
        Intrinsic dimension (1 or 2).
    vertices : (nv, ambient) float array
    cells : (nc, dim+1) int array
    boundary_flags : (nv,) bool array, optional
        Defaults to the vertices on a facet incident to exactly one cell.
        Explicit flags must be consistent with cell incidence: every flagged
        vertex has to lie on such a facet.

    The constructor validates non-degeneracy, index ranges, absence of orphan
    vertices and connectivity of the cell graph.
    """

    def __init__(self, name: str, dim: int, vertices, cells, boundary_flags=None):
        vertices = np.asarray(vertices, dtype=float)
        cells = np.asarray(cells, dtype=np.int64)
        if vertices.ndim != 2:
            raise InvalidParameterError(f"piece {name!r}: vertices must be 2-d")
        if dim not in (1, 2):
            raise InvalidParameterError(f"piece {name!r}: dim must be 1 or 2, got {dim}")
        if cells.ndim != 2 or cells.shape[1] != dim + 1:
            raise InvalidParameterError(
                f"piece {name!r}: cells must have shape (nc, {dim + 1})"
            )
        if cells.shape[0] == 0:
            raise InvalidParameterError(f"piece {name!r}: empty mesh")
        if vertices.shape[1] < dim:
            raise InvalidParameterError(
                f"piece {name!r}: ambient dim {vertices.shape[1]} < intrinsic dim {dim}"
            )
        nv = vertices.shape[0]
        if cells.min() < 0 or cells.max() >= nv:
            raise InvalidParameterError(f"piece {name!r}: cell index out of range")
        for c in range(cells.shape[0]):
            if len(set(cells[c])) != dim + 1:
                raise InvalidParameterError(
                    f"piece {name!r}: cell {c} repeats a vertex"
                )

        self.name = name
        self.dim = int(dim)
        self.vertices = vertices
        self.cells = cells
        self.n_vertices = nv
        self.n_cells = cells.shape[0]
        self.ambient_dim = vertices.shape[1]

        self.cell_volumes = simplex_volumes(vertices, cells)
        scale = max(self.diameter(), 1e-300)
        bad = np.nonzero(self.cell_volumes <= 1e-12 * scale**self.dim)[0]
        if bad.size:
            raise InvalidParameterError(
                f"piece {name!r}: degenerate cell(s) {bad[:8].tolist()} "
                f"(volume <= 1e-12 * scale^dim)"
            )

        used = np.zeros(nv, dtype=bool)
        used[cells.ravel()] = True
        if not used.all():
            orphans = np.nonzero(~used)[0]
            raise InvalidParameterError(
                f"piece {name!r}: orphan vertices {orphans[:8].tolist()}"
            )

        incident = self._boundary_vertices()
        if boundary_flags is None:
            self.boundary_vertices = incident
        else:
            flags = np.asarray(boundary_flags, dtype=bool)
            if flags.shape != (nv,):
                raise InvalidParameterError(
                    f"piece {name!r}: boundary flags must have one entry per vertex"
                )
            stray = np.nonzero(flags & ~incident)[0]
            if stray.size:
                raise InvalidParameterError(
                    f"piece {name!r}: vertices {stray[:8].tolist()} are flagged "
                    "boundary but lie on no boundary facet"
                )
            self.boundary_vertices = flags
        self._check_connected()

    # -- derived structure -------------------------------------------------

    def edges(self) -> np.ndarray:
        """Unique undirected edges as a sorted (ne, 2) int array."""
        d = self.dim
        pairs = []
        for a, b in itertools.combinations(range(d + 1), 2):
            pairs.append(self.cells[:, [a, b]])
        e = np.vstack(pairs)
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def metric_pairs(self, hops: int = 3) -> np.ndarray:
        """Vertex pairs within `hops` mesh edges, as a unique (P, 2) array.

        These carry the piece's path metric: pure mesh-edge shortest paths
        overshoot straight-line distance by a direction-dependent factor that
        does not shrink under refinement (about 5-8% on the disk lattice), so
        the metric graph adds straight chords between near neighbors, which
        brings the overshoot under about half a percent at three hops.
        Chords assume the straight segment stays inside the piece (exact for
        convex pieces; imported non-convex meshes may cut corners by O(h)).
        """
        if getattr(self, "_metric_pairs", None) is None:
            from scipy.sparse import csr_matrix

            e = self.edges()
            ones = np.ones(2 * len(e))
            adj = csr_matrix(
                (
                    ones,
                    (
                        np.concatenate([e[:, 0], e[:, 1]]),
                        np.concatenate([e[:, 1], e[:, 0]]),
                    ),
                ),
                shape=(self.n_vertices, self.n_vertices),
            )
            adj.data[:] = 1.0
            reach = adj.copy()
            acc = adj.copy()
            for _ in range(hops - 1):
                reach = (reach @ adj).tocsr()
                reach.data[:] = 1.0
                acc = (acc + reach).tocsr()
            coo = acc.tocoo()
            keep = coo.row < coo.col
            self._metric_pairs = np.column_stack([coo.row[keep], coo.col[keep]]).astype(
                np.int64
            )
        return self._metric_pairs

    def edge_graph(self):
        """Piece-local metric graph: chord-augmented, Euclidean weights."""
        if getattr(self, "_edge_graph", None) is None:
            from scipy.sparse import csr_matrix

            e = self.metric_pairs()
            lengths = np.linalg.norm(
                self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1
            )
            r = np.concatenate([e[:, 0], e[:, 1]])
            c = np.concatenate([e[:, 1], e[:, 0]])
            w = np.concatenate([lengths, lengths])
            self._edge_graph = csr_matrix(
                (w, (r, c)), shape=(self.n_vertices, self.n_vertices)
            )
        return self._edge_graph

    def facets(self):
        """All (dim-1)-facets with incidence counts.

        Returns a dict mapping the sorted vertex tuple of the facet to the
        list of cell indices containing it.  For dim 1 the facets are single
        vertices.
        """
        inc: dict[tuple, list[int]] = {}
        d = self.dim
        for c in range(self.n_cells):
            cell = self.cells[c]
            for drop in range(d + 1):
                fac = tuple(sorted(np.delete(cell, drop)))
                inc.setdefault(fac, []).append(c)
        return inc

    def _boundary_vertices(self) -> np.ndarray:
        bnd = np.zeros(self.n_vertices, dtype=bool)
        for fac, cells in self.facets().items():
            if len(cells) == 1:
                for v in fac:
                    bnd[v] = True
        return bnd

    def _check_connected(self):
        # union-find over vertices through cells
        parent = np.arange(self.n_vertices)

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for cell in self.cells:
            r0 = find(cell[0])
            for v in cell[1:]:
                parent[find(v)] = r0
        roots = {find(v) for v in range(self.n_vertices)}
        if len(roots) != 1:
            raise InvalidParameterError(
                f"piece {self.name!r}: cell graph has {len(roots)} components; "
                "model disconnected spaces as separate pieces"
            )

    def diameter(self) -> float:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def max_cell_diameter(self) -> float:
        v = self.vertices[self.cells]
        d = 0.0
        for a, b in itertools.combinations(range(self.dim + 1), 2):
            d = max(d, float(np.linalg.norm(v[:, a] - v[:, b], axis=1).max()))
        return d

    def __repr__(self):
        return (
            f"PieceMesh({self.name!r}, dim={self.dim}, nv={self.n_vertices}, "
            f"nc={self.n_cells}, ambient={self.ambient_dim})"
        )


# -- builders ---------------------------------------------------------------


def _unit(v, what):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if not np.isfinite(n) or n == 0.0:
        raise InvalidParameterError(f"{what} must be a nonzero finite vector")
    return v / n


def build_segment_piece(
    length: float,
    n_cells: int,
    origin=None,
    direction=None,
    name: str = "segment",
) -> PieceMesh:
    """Uniform 1-d mesh of a segment.

    Vertices run from `origin` to `origin + length * direction` with
    `n_cells` equal cells.  Defaults embed the segment on the x-axis of R^1.
    """
    if not (length > 0) or not np.isfinite(length):
        raise InvalidParameterError("segment length must be positive and finite")
    if n_cells < 1:
        raise InvalidParameterError("segment needs at least one cell")
    if origin is None and direction is None:
        origin = np.array([0.0])
        direction = np.array([1.0])
    elif origin is None or direction is None:
        raise InvalidParameterError("give both origin and direction or neither")
    origin = np.asarray(origin, dtype=float)
    direction = _unit(direction, "segment direction")
    if origin.shape != direction.shape:
        raise InvalidParameterError("origin and direction dims differ")
    t = np.linspace(0.0, length, n_cells + 1)
    verts = origin[None, :] + t[:, None] * direction[None, :]
    cells = np.column_stack([np.arange(n_cells), np.arange(1, n_cells + 1)])
    return PieceMesh(name, 1, verts, cells)


def build_rect_piece(
    x_coords,
    y_coords,
    origin=None,
    x_axis=None,
    y_axis=None,
    name: str = "rect",
) -> PieceMesh:
    """Triangulated structured rectangle over given grid lines.

    `x_coords` and `y_coords` are strictly increasing 1-d arrays of grid
    lines; each grid quad is split into two triangles.  Defaults embed the
    rectangle in R^2; with `origin`/`x_axis`/`y_axis` it is placed on the
    affine frame origin + x*x_axis + y*y_axis (axes need not be unit but must
    be linearly independent).
    """
    xs = np.asarray(x_coords, dtype=float)
    ys = np.asarray(y_coords, dtype=float)
    if xs.ndim != 1 or ys.ndim != 1 or xs.size < 2 or ys.size < 2:
        raise InvalidParameterError("rect needs >= 2 grid lines per direction")
    if np.any(np.diff(xs) <= 0) or np.any(np.diff(ys) <= 0):
        raise InvalidParameterError("rect grid lines must be strictly increasing")
    nx, ny = xs.size, ys.size
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts2 = np.column_stack([gx.ravel(), gy.ravel()])

    def vid(i, j):
        return i * ny + j

    cells = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            cells.append([a, b, c])
            cells.append([a, c, d])
    cells = np.asarray(cells, dtype=np.int64)

    if origin is None and x_axis is None and y_axis is None:
        verts = pts2
    elif origin is None or x_axis is None or y_axis is None:
        raise InvalidParameterError("give origin, x_axis and y_axis together or not at all")
    else:
        origin = np.asarray(origin, dtype=float)
        ex = np.asarray(x_axis, dtype=float)
        ey = np.asarray(y_axis, dtype=float)
        if not (origin.shape == ex.shape == ey.shape):
            raise InvalidParameterError("rect frame vectors must share one dimension")
        cross = np.linalg.norm(ex) * np.linalg.norm(ey)
        if cross == 0 or abs(np.dot(ex, ey)) >= (1 - 1e-12) * cross:
            raise InvalidParameterError("rect axes must be linearly independent")
        verts = origin[None, :] + pts2[:, :1] * ex[None, :] + pts2[:, 1:] * ey[None, :]
    return PieceMesh(name, 2, verts, cells)


def _disk_frame(axis):
    """Deterministic orthonormal (e1, e2) spanning the plane normal to axis."""
    n = _unit(axis, "disk axis")
    # pick the coordinate direction least aligned with the axis
    k = int(np.argmin(np.abs(n)))
    h = np.zeros_like(n)
    h[k] = 1.0
    e1 = h - np.dot(h, n) * n
    e1 /= np.linalg.norm(e1)
    if n.shape[0] == 3:
        e2 = np.cross(n, e1)
    else:
        raise InvalidParameterError("disk axis placement needs ambient dim 3")
    return e1, e2


def disk_lattice(radius: float, refinement: int) -> np.ndarray:
    """Polar lattice: center plus rings m=1..refinement, 8m vertices on ring m.

    Ring m sits at radius m*radius/refinement.  Eight vertices per ring step
    keeps the inscribed polygon area within 15% of the disk already at
    refinement 1, and puts lattice vertices exactly on both coordinate axes
    of the disk plane at every ring (so diameters are resolved by mesh edges).
    """
    pts = [np.zeros((1, 2))]
    for m in range(1, refinement + 1):
        r = radius * m / refinement
        ang = 2.0 * np.pi * np.arange(8 * m) / (8 * m)
        pts.append(np.column_stack([r * np.cos(ang), r * np.sin(ang)]))
    return np.vstack(pts)


def build_disk_piece(
    radius: float,
    refinement: int,
    origin=None,
    axis=None,
    name: str = "disk",
) -> PieceMesh:
    """Triangulated flat disk.

    The mesh is the Delaunay triangulation of a hexagonal polar lattice with
    `refinement` concentric rings; the maximum cell diameter is bounded by
    1.5 * radius / refinement.  With `origin`/`axis` given, the disk is placed
    in the plane through `origin` orthogonal to `axis` (ambient R^3);
    otherwise it lives in R^2.
    """
    if not (radius > 0) or not np.isfinite(radius):
        raise InvalidParameterError("disk radius must be positive and finite")
    if refinement < 1:
        raise InvalidParameterError("disk refinement must be >= 1")
    pts2 = disk_lattice(radius, refinement)
    tri = Delaunay(pts2)
    cells = tri.simplices.astype(np.int64)
    # drop slivers qhull may emit on co-circular rings, keep orientation CCW
    v = pts2[cells]
    area2 = (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1]) - (
        v[:, 1, 1] - v[:, 0, 1]
    ) * (v[:, 2, 0] - v[:, 0, 0])
    keep = np.abs(area2) > 1e-12 * radius**2
    cells = cells[keep]
    flip = area2[keep] < 0
    cells[flip] = cells[flip][:, [0, 2, 1]]

    if origin is None and axis is None:
        verts = pts2
    elif origin is None or axis is None:
        raise InvalidParameterError("give both origin and axis or neither")
    else:
        origin = np.asarray(origin, dtype=float)
        if origin.shape != (3,):
            raise InvalidParameterError("disk placement needs a 3-d origin")
        e1, e2 = _disk_frame(np.asarray(axis, dtype=float))
        verts = origin[None, :] + pts2[:, :1] * e1[None, :] + pts2[:, 1:] * e2[None, :]
    return PieceMesh(name, 2, verts, cells)


# -- plain-text mesh import/export -------------------------------------------
#
# Format (one item per line, '#' comments allowed):
#   dim D
#   ambient A
#   vertices N        followed by N lines of A floats
#   cells M           followed by M lines of D+1 ints
#   boundary B        followed by B lines of flagged vertex indices (optional;
#                     omitted means flags are computed from cell incidence)
#


def parse_mesh_text(text: str, name: str = "mesh") -> PieceMesh:
    tokens: list[list[str]] = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            tokens.append(line.split())
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(tokens):
            raise InvalidParameterError(f"mesh {name!r}: truncated file")
        t = tokens[pos]
        pos += 1
        return t

    def keyword(word):
        t = take()
        if t[0] != word or len(t) != 2:
            raise InvalidParameterError(
                f"mesh {name!r}: expected '{word} <int>', got {' '.join(t)!r}"
            )
        try:
            return int(t[1])
        except ValueError:
            raise InvalidParameterError(f"mesh {name!r}: bad integer in '{word}'")

    dim = keyword("dim")
    ambient = keyword("ambient")
    nv = keyword("vertices")
    verts = np.empty((nv, ambient))
    for i in range(nv):
        t = take()
        if len(t) != ambient:
            raise InvalidParameterError(
                f"mesh {name!r}: vertex {i} needs {ambient} coordinates"
            )
        verts[i] = [float(x) for x in t]
    nc = keyword("cells")
    cells = np.empty((nc, dim + 1), dtype=np.int64)
    for i in range(nc):
        t = take()
        if len(t) != dim + 1:
            raise InvalidParameterError(
                f"mesh {name!r}: cell {i} needs {dim + 1} vertex indices"
            )
        cells[i] = [int(x) for x in t]
    flags = None
    if pos < len(tokens) and tokens[pos][0] == "boundary":
        nb = keyword("boundary")
        flags = np.zeros(nv, dtype=bool)
        for i in range(nb):
            t = take()
            if len(t) != 1:
                raise InvalidParameterError(
                    f"mesh {name!r}: boundary line {i} must hold one vertex index"
                )
            v = int(t[0])
            if not (0 <= v < nv):
                raise InvalidParameterError(
                    f"mesh {name!r}: boundary vertex index {v} out of range"
                )
            flags[v] = True
    if pos != len(tokens):
        raise InvalidParameterError(f"mesh {name!r}: trailing content")
    return PieceMesh(name, dim, verts, cells, boundary_flags=flags)


def mesh_to_text(piece: PieceMesh) -> str:
    out = [
        f"dim {piece.dim}",
        f"ambient {piece.ambient_dim}",
        f"vertices {piece.n_vertices}",
    ]
    for v in piece.vertices:
        out.append(" ".join(repr(float(x)) for x in v))
    out.append(f"cells {piece.n_cells}")
    for c in piece.cells:
        out.append(" ".join(str(int(i)) for i in c))
    flagged = np.nonzero(piece.boundary_vertices)[0]
    out.append(f"boundary {flagged.size}")
    for v in flagged:
        out.append(str(int(v)))
    return "\n".join(out) + "\n"


def load_mesh_piece(path, name=None) -> PieceMesh:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_mesh_text(text, name or str(path))
