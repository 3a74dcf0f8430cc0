"""Vertex identification across pieces and the glued complex.

Vertices of different pieces that coincide in ambient coordinates (within a
tolerance) become a single global DOF.  Identified DOFs are grouped into
intersection components; each component gets a GlueMap recording the pairs,
the two pieces it joins, and the inferred intrinsic dimension k of the
identified subcomplex (0: isolated vertex, 1: path or cycle of edges shared
by both pieces).

Structural hypotheses enforced here:

* identified vertices must be interior in every piece that carries them;
* an intersection joins exactly two pieces, and distinct intersections are
  vertex-disjoint (a cluster touching three pieces violates this);
* the identified set must not contain a full cell of either piece (such an
  intersection has positive measure in that piece, resp. dimension >= 2).
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from ..errors import (
    BoundaryIntersectionError,
    GlueAmbiguityError,
    HypothesisViolationError,
    InvalidParameterError,
    UnsupportedIntersectionError,
)
from .meshes import PieceMesh

DEFAULT_GLUE_RTOL = 1e-9


class GlueMap:
    """One connected intersection component between two pieces."""

    def __init__(self, intersection_id, piece_a, piece_b, pairs, k, dofs, edges, tolerance):
        self.intersection_id = intersection_id
        self.piece_a = piece_a
        self.piece_b = piece_b
        self.pairs = pairs          # list of (piece_a, vertex_a, piece_b, vertex_b)
        self.k = k
        self.dofs = dofs            # sorted global DOF indices of the component
        self.edges = edges          # global DOF pairs of the identified subcomplex
        self.tolerance = tolerance

    def local_vertices(self, piece: int) -> list[int]:
        """Local vertex indices of this intersection within one of its pieces."""
        if piece == self.piece_a:
            return [va for _, va, _, _ in self.pairs]
        if piece == self.piece_b:
            return [vb for _, _, _, vb in self.pairs]
        raise InvalidParameterError(
            f"intersection {self.intersection_id!r} does not involve piece {piece}"
        )

    def __repr__(self):
        return (
            f"GlueMap({self.intersection_id!r}, pieces=({self.piece_a}, "
            f"{self.piece_b}), k={self.k}, vertices={len(self.dofs)})"
        )


class GluedComplex:
    """Immutable glued union of piece meshes over global DOFs."""

    def __init__(self, pieces, glue_maps, global_of, dof_coords, tolerance):
        self.pieces = list(pieces)
        self.glue_maps = list(glue_maps)
        self.global_of = global_of            # per piece: local vertex -> global DOF
        self.dof_coords = dof_coords
        self.n_dofs = dof_coords.shape[0]
        self.tolerance = tolerance

        npieces = len(self.pieces)
        member = np.zeros((self.n_dofs, npieces), dtype=bool)
        for p in range(npieces):
            member[global_of[p], p] = True
        self.dof_membership = member

        def dedup_global(pair_lists):
            chunks = []
            for p, pairs in enumerate(pair_lists):
                g = global_of[p]
                gp = g[pairs]
                gp.sort(axis=1)
                chunks.append(gp)
            allp = np.vstack(chunks)
            keys = allp[:, 0] * np.int64(self.n_dofs) + allp[:, 1]
            _, idx = np.unique(keys, return_index=True)
            return allp[idx]

        self.mesh_edges = dedup_global([p.edges() for p in self.pieces])
        metric_pairs = dedup_global([p.metric_pairs() for p in self.pieces])
        lens = np.linalg.norm(
            dof_coords[metric_pairs[:, 0]] - dof_coords[metric_pairs[:, 1]], axis=1
        )
        r = np.concatenate([metric_pairs[:, 0], metric_pairs[:, 1]])
        c = np.concatenate([metric_pairs[:, 1], metric_pairs[:, 0]])
        w = np.concatenate([lens, lens])
        self.edge_graph = csr_matrix((w, (r, c)), shape=(self.n_dofs, self.n_dofs))
        self.n_components, self.component_labels = connected_components(
            self.edge_graph, directed=False
        )

        mesh_lens = np.linalg.norm(
            dof_coords[self.mesh_edges[:, 0]] - dof_coords[self.mesh_edges[:, 1]],
            axis=1,
        )
        tot = np.zeros(self.n_dofs)
        cnt = np.zeros(self.n_dofs)
        for side in (0, 1):
            np.add.at(tot, self.mesh_edges[:, side], mesh_lens)
            np.add.at(cnt, self.mesh_edges[:, side], 1.0)
        self.dof_spacing = tot / np.maximum(cnt, 1.0)

    # -- lookups -------------------------------------------------------------

    def piece_index(self, name: str) -> int:
        for i, p in enumerate(self.pieces):
            if p.name == name:
                return i
        raise InvalidParameterError(f"unknown piece {name!r}")

    def intersection(self, intersection_id: str) -> GlueMap:
        for gm in self.glue_maps:
            if gm.intersection_id == intersection_id:
                return gm
        raise InvalidParameterError(f"unknown intersection {intersection_id!r}")

    def dof_of_vertex(self, piece: int | str, vertex: int) -> int:
        if isinstance(piece, str):
            piece = self.piece_index(piece)
        return int(self.global_of[piece][vertex])

    def nearest_dof(self, point) -> int:
        point = np.asarray(point, dtype=float)
        d = np.linalg.norm(self.dof_coords - point[None, :], axis=1)
        return int(np.argmin(d))

    def shared_dofs(self) -> np.ndarray:
        """Global DOFs carried by more than one piece."""
        return np.nonzero(self.dof_membership.sum(axis=1) > 1)[0]

    def exclusive_piece(self) -> np.ndarray:
        """Per DOF: owning piece index, or -1 for shared DOFs."""
        count = self.dof_membership.sum(axis=1)
        owner = np.argmax(self.dof_membership, axis=1)
        owner[count != 1] = -1
        return owner

    def diameter(self) -> float:
        lo = self.dof_coords.min(axis=0)
        hi = self.dof_coords.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def summary(self) -> dict:
        return {
            "n_pieces": len(self.pieces),
            "pieces": [
                {
                    "name": p.name,
                    "dim": p.dim,
                    "n_vertices": p.n_vertices,
                    "n_cells": p.n_cells,
                }
                for p in self.pieces
            ],
            "n_dofs": self.n_dofs,
            "n_components": int(self.n_components),
            "intersections": [
                {
                    "id": gm.intersection_id,
                    "pieces": [
                        self.pieces[gm.piece_a].name,
                        self.pieces[gm.piece_b].name,
                    ],
                    "k": gm.k,
                    "n_vertices": len(gm.dofs),
                }
                for gm in self.glue_maps
            ],
            "glue_tolerance": self.tolerance,
        }

    def __repr__(self):
        return (
            f"GluedComplex(pieces={len(self.pieces)}, dofs={self.n_dofs}, "
            f"intersections={len(self.glue_maps)}, components={self.n_components})"
        )


def _union_diameter(pieces) -> float:
    lo = np.min([p.vertices.min(axis=0) for p in pieces], axis=0)
    hi = np.max([p.vertices.max(axis=0) for p in pieces], axis=0)
    return float(np.linalg.norm(hi - lo))


def glue(pieces, tolerance: float | None = None) -> GluedComplex:
    """Identify coincident vertices across pieces into a glued complex.

    `tolerance` is an absolute coordinate tolerance; by default it is
    1e-9 times the diameter of the union.
    """
    pieces = list(pieces)
    if not pieces:
        raise InvalidParameterError("glue needs at least one piece")
    amb = pieces[0].ambient_dim
    names = set()
    for p in pieces:
        if p.ambient_dim != amb:
            raise InvalidParameterError(
                f"ambient dims differ: {p.name!r} has {p.ambient_dim}, expected {amb}"
            )
        if p.name in names:
            raise InvalidParameterError(f"duplicate piece name {p.name!r}")
        names.add(p.name)

    diam = max(_union_diameter(pieces), 1e-300)
    if tolerance is None:
        tol = DEFAULT_GLUE_RTOL * diam
    else:
        if not (tolerance > 0):
            raise InvalidParameterError("glue tolerance must be positive")
        tol = float(tolerance)

    # within-piece near-duplicates mean the tolerance exceeds the mesh scale
    for p in pieces:
        t = cKDTree(p.vertices)
        close = t.query_pairs(tol)
        if close:
            a, b = next(iter(close))
            raise GlueAmbiguityError(
                f"tolerance {tol:g} identifies vertices {a} and {b} within "
                f"piece {p.name!r}; tolerance too coarse for the mesh"
            )

    offsets = np.cumsum([0] + [p.n_vertices for p in pieces])
    total = offsets[-1]
    parent = np.arange(total)

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return int(a)

    def union(a: int, b: int):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    trees = [cKDTree(p.vertices) for p in pieces]
    for i in range(len(pieces)):
        for j in range(i + 1, len(pieces)):
            matches = trees[j].query_ball_point(pieces[i].vertices, tol)
            hit_by = {}
            for vi, ms in enumerate(matches):
                if not ms:
                    continue
                if len(ms) > 1:
                    raise GlueAmbiguityError(
                        f"vertex {vi} of piece {pieces[i].name!r} matches "
                        f"{len(ms)} vertices of piece {pieces[j].name!r} "
                        f"within tolerance {tol:g}"
                    )
                vj = ms[0]
                if vj in hit_by:
                    raise GlueAmbiguityError(
                        f"vertices {hit_by[vj]} and {vi} of piece "
                        f"{pieces[i].name!r} both match vertex {vj} of piece "
                        f"{pieces[j].name!r} within tolerance {tol:g}"
                    )
                hit_by[vj] = vi
                union(offsets[i] + vi, offsets[j] + vj)

    # clusters keyed by root
    clusters: dict[int, list[int]] = {}
    for a in range(total):
        clusters.setdefault(find(a), []).append(a)

    def locate(a: int):
        p = int(np.searchsorted(offsets, a, side="right") - 1)
        return p, int(a - offsets[p])

    for root, members in clusters.items():
        if len(members) < 2:
            continue
        where = [locate(m) for m in members]
        ps = [p for p, _ in where]
        if len(set(ps)) != len(ps):
            dup = [p for p in set(ps) if ps.count(p) > 1][0]
            raise GlueAmbiguityError(
                f"transitive identification collapses two vertices of piece "
                f"{pieces[dup].name!r}; tolerance {tol:g} too coarse"
            )
        if len(ps) > 2:
            names3 = [pieces[p].name for p in ps]
            raise HypothesisViolationError(
                "three or more pieces meet at one point "
                f"({', '.join(sorted(names3))}); pairwise intersections must "
                "be disjoint"
            )
        for p, v in where:
            if pieces[p].boundary_vertices[v]:
                raise BoundaryIntersectionError(
                    f"identified vertex {v} of piece {pieces[p].name!r} is a "
                    "boundary vertex; intersections must be interior"
                )

    # deterministic global numbering: first occurrence in piece-major order
    global_id = -np.ones(total, dtype=np.int64)
    next_id = 0
    for a in range(total):
        r = find(a)
        if global_id[r] < 0:
            global_id[r] = next_id
            next_id += 1
        global_id[a] = global_id[r]
    n_dofs = next_id

    global_of = []
    for p in range(len(pieces)):
        global_of.append(global_id[offsets[p] : offsets[p + 1]].copy())

    coords = np.empty((n_dofs, amb))
    for p in range(len(pieces) - 1, -1, -1):
        coords[global_of[p]] = pieces[p].vertices

    # identified DOFs and their clusters
    ident_clusters = {
        find(ms[0]): ms for ms in (v for v in clusters.values() if len(v) >= 2)
    }
    ident_dofs = sorted(int(global_id[r]) for r in ident_clusters)
    ident_set = set(ident_dofs)

    # shared edges: present (as global pairs) in both pieces of a cluster pair
    piece_edges_global = []
    for p, piece in enumerate(pieces):
        g = global_of[p]
        es = set()
        for a, b in piece.edges():
            ga, gb = int(g[a]), int(g[b])
            if ga in ident_set and gb in ident_set:
                es.add((min(ga, gb), max(ga, gb)))
        piece_edges_global.append(es)

    shared_edges = set()
    for i in range(len(pieces)):
        for j in range(i + 1, len(pieces)):
            shared_edges |= piece_edges_global[i] & piece_edges_global[j]

    # connected components of the identified set under shared edges
    comp_parent = {d: d for d in ident_dofs}

    def cfind(d):
        while comp_parent[d] != d:
            comp_parent[d] = comp_parent[comp_parent[d]]
            d = comp_parent[d]
        return d

    for a, b in shared_edges:
        ra, rb = cfind(a), cfind(b)
        if ra != rb:
            comp_parent[max(ra, rb)] = min(ra, rb)

    comps: dict[int, list[int]] = {}
    for d in ident_dofs:
        comps.setdefault(cfind(d), []).append(d)

    dof_cluster = {int(global_id[r]): ms for r, ms in ident_clusters.items()}

    glue_maps = []
    for root in sorted(comps):
        dofs = sorted(comps[root])
        pair = None
        pairs = []
        for d in dofs:
            members = dof_cluster[d]
            where = sorted(locate(m) for m in members)
            (pa, va), (pb, vb) = where
            if pair is None:
                pair = (pa, pb)
            elif pair != (pa, pb):
                raise HypothesisViolationError(
                    "one intersection component spans different piece pairs; "
                    "pairwise intersections must be disjoint"
                )
            pairs.append((pa, va, pb, vb))

        comp_set = set(dofs)
        comp_edges = {e for e in shared_edges if e[0] in comp_set and e[1] in comp_set}
        if not comp_edges:
            k = 0
        else:
            deg = {d: 0 for d in dofs}
            for a, b in comp_edges:
                deg[a] += 1
                deg[b] += 1
            if max(deg.values()) > 2:
                raise UnsupportedIntersectionError(
                    "identified subcomplex branches (vertex degree > 2); only "
                    "intersection dimensions k in {0, 1} are supported"
                )
            k = 1

        # a full cell inside the identified set means the intersection has
        # interior in that piece (positive measure) or dimension >= 2
        for p in pair:
            piece = pieces[p]
            g = global_of[p]
            for c in range(piece.n_cells):
                cell_g = [int(g[v]) for v in piece.cells[c]]
                if not all(cg in comp_set for cg in cell_g):
                    continue
                edges_of_cell = {
                    (min(a, b), max(a, b))
                    for ai, a in enumerate(cell_g)
                    for b in cell_g[ai + 1 :]
                }
                if edges_of_cell <= shared_edges:
                    if piece.dim == 1:
                        raise HypothesisViolationError(
                            f"intersection contains a whole cell of 1-d piece "
                            f"{piece.name!r}: it has positive measure there "
                            "(intersections must be null sets)"
                        )
                    raise UnsupportedIntersectionError(
                        f"identified subcomplex contains a full {piece.dim}-d "
                        f"cell of piece {piece.name!r}; only k in {{0, 1}} "
                        "is supported"
                    )

        glue_maps.append(
            GlueMap(
                intersection_id=f"J{len(glue_maps)}",
                piece_a=pair[0],
                piece_b=pair[1],
                pairs=pairs,
                k=k,
                dofs=dofs,
                edges=sorted(comp_edges),
                tolerance=tol,
            )
        )

    return GluedComplex(pieces, glue_maps, global_of, coords, tol)
