"""Weight attachment: per-cell quadrature tables for omega and 1/omega.

A weight lives on one piece.  Kinds:

* ``constant``: omega = c > 0;
* ``power``: omega = dist(., anchor)^(-exponent), the anchor being a declared
  intersection of the complex or an explicit point snapped to a mesh vertex;
  admissible exponents are the open interval (-(n-k), n-k) where n is the
  piece dimension and k the anchor dimension;
* ``tabulated``: omega is the P1 interpolant of positive per-vertex values.

The attached tables drive mass lumping, stiffness weighting and all measure
diagnostics; see the quadrature module for the cell rules.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidParameterError, NonIntegrableWeightError
from ..geometry import GluedComplex
from . import quadrature as quad

WEIGHT_KINDS = ("constant", "power", "tabulated")


@dataclass(frozen=True)
class WeightSpec:
    """Declaration of one piece's weight."""

    piece: str
    kind: str = "constant"
    constant: float = 1.0
    exponent: float = 0.0
    anchor: object = None          # intersection id or ambient point (power kind)
    table: object = None           # per-vertex positive values (tabulated kind)

    def describe(self) -> dict:
        out = {"piece": self.piece, "kind": self.kind}
        if self.kind == "constant":
            out["constant"] = self.constant
        elif self.kind == "power":
            out["exponent"] = self.exponent
            out["anchor"] = (
                self.anchor
                if isinstance(self.anchor, str)
                else [float(x) for x in np.atleast_1d(self.anchor)]
            )
        elif self.kind == "tabulated":
            out["table_len"] = int(len(self.table)) if self.table is not None else 0
        return out


class AnchorGeometry:
    """Resolved anchor of a power weight inside one piece.

    Holds the local vertices lying on the anchor, its dimension k, and an
    ambient distance function (exact for points and straight or polygonal
    paths; pieces are flat so the in-piece distance agrees with it).
    """

    def __init__(self, label, k, local_vertices, point=None, segments=None):
        self.label = label
        self.k = int(k)
        self.local_vertices = np.asarray(sorted(local_vertices), dtype=np.int64)
        self.point = point
        self.segments = segments   # (S, 2, amb) for k = 1

    def distance(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.k == 0:
            return np.linalg.norm(points - self.point[None, :], axis=1)
        a = self.segments[:, 0, :]                      # (S, amb)
        ab = self.segments[:, 1, :] - a                 # (S, amb)
        denom = np.einsum("se,se->s", ab, ab)
        ap = points[:, None, :] - a[None, :, :]         # (P, S, amb)
        t = np.einsum("pse,se->ps", ap, ab) / denom[None, :]
        t = np.clip(t, 0.0, 1.0)
        feet = a[None, :, :] + t[..., None] * ab[None, :, :]
        d = np.linalg.norm(points[:, None, :] - feet, axis=2)
        return d.min(axis=1)


def _resolve_anchor(complex: GluedComplex, piece_idx: int, anchor) -> AnchorGeometry:
    piece = complex.pieces[piece_idx]
    if isinstance(anchor, str):
        gm = complex.intersection(anchor)
        if piece_idx not in (gm.piece_a, gm.piece_b):
            raise InvalidParameterError(
                f"intersection {anchor!r} does not touch piece {piece.name!r}"
            )
        locs = gm.local_vertices(piece_idx)
        if gm.k == 0:
            return AnchorGeometry(
                anchor, 0, locs, point=complex.dof_coords[gm.dofs[0]].copy()
            )
        segs = np.array(
            [[complex.dof_coords[a], complex.dof_coords[b]] for a, b in gm.edges]
        )
        return AnchorGeometry(anchor, 1, locs, segments=segs)

    if isinstance(anchor, dict):
        keys = set(anchor)
        if keys == {"segments"}:
            segs = np.asarray(anchor["segments"], dtype=float)
            if segs.ndim != 3 or segs.shape[1:] != (2, piece.ambient_dim):
                raise InvalidParameterError(
                    "segments anchor must be an (S, 2, ambient) array"
                )
            geom = AnchorGeometry("explicit-path", 1, [], segments=segs)
            d = geom.distance(piece.vertices)
            snap = max(complex.tolerance, 1e-12 * max(piece.diameter(), 1.0))
            geom.local_vertices = np.nonzero(d <= snap)[0].astype(np.int64)
            if geom.local_vertices.size < 2:
                raise InvalidParameterError(
                    "segments anchor must pass through at least two mesh vertices"
                )
            return geom
        if keys != {"point"}:
            raise InvalidParameterError(
                "anchor dict must have exactly one of the keys 'point' or 'segments'"
            )
        anchor = anchor["point"]

    point = np.asarray(anchor, dtype=float)
    if point.ndim != 1 or point.shape[0] != piece.ambient_dim:
        raise InvalidParameterError(
            f"anchor point needs {piece.ambient_dim} coordinates"
        )
    d = np.linalg.norm(piece.vertices - point[None, :], axis=1)
    v = int(np.argmin(d))
    if d[v] > max(complex.tolerance, 1e-12 * max(piece.diameter(), 1.0)):
        raise InvalidParameterError(
            f"anchor point {point.tolist()} is not a vertex of piece "
            f"{piece.name!r} (nearest vertex is {d[v]:g} away); singular "
            "weights must be anchored at mesh vertices"
        )
    return AnchorGeometry(tuple(point.tolist()), 0, [v], point=piece.vertices[v].copy())


class AttachedWeight:
    """Quadrature tables of one piece's weight.

    Arrays over cells: ``w0`` (cell mass), ``hats`` (per-vertex weighted hat
    integrals, rows sum to w0), and the same for the reciprocal weight
    (``inv_w0``, ``inv_hats``).
    """

    def __init__(self, spec, piece, anchor, w0, hats, inv_w0, inv_hats):
        self.spec = spec
        self.piece = piece
        self.anchor = anchor
        self.w0 = w0
        self.hats = hats
        self.inv_w0 = inv_w0
        self.inv_hats = inv_hats

    def lumped(self, which: str = "mass") -> np.ndarray:
        """Per-local-vertex lumped integrals: 'mass' (omega), 'inv', or 'vol'."""
        piece = self.piece
        out = np.zeros(piece.n_vertices)
        if which == "mass":
            src = self.hats
        elif which == "inv":
            src = self.inv_hats
        elif which == "vol":
            src = np.repeat(
                piece.cell_volumes[:, None] / (piece.dim + 1), piece.dim + 1, axis=1
            )
        else:
            raise InvalidParameterError(f"unknown lumped table {which!r}")
        np.add.at(out, piece.cells.ravel(), src.ravel())
        return out

    def total(self) -> float:
        return float(self.w0.sum())


class WeightedComplex:
    """A glued complex plus attached weights (one per piece, immutable)."""

    def __init__(self, complex: GluedComplex, weights: dict[int, AttachedWeight]):
        self.complex = complex
        self.weights = dict(weights)

    def weight_of(self, piece: int | str) -> AttachedWeight:
        idx = piece if isinstance(piece, int) else self.complex.piece_index(piece)
        if idx not in self.weights:
            raise InvalidParameterError(
                f"piece {self.complex.pieces[idx].name!r} has no attached weight"
            )
        return self.weights[idx]

    def is_complete(self) -> bool:
        return len(self.weights) == len(self.complex.pieces)

    def with_default_weights(self) -> "WeightedComplex":
        """Attach constant weight 1 to every piece still missing one."""
        wc = self
        for i, p in enumerate(self.complex.pieces):
            if i not in wc.weights:
                wc = attach_weight(wc, WeightSpec(piece=p.name))
        return wc

    def lumped_global(self, which: str = "mass") -> np.ndarray:
        """Per-DOF lumped integrals summed over pieces ('mass'/'inv'/'vol')."""
        out = np.zeros(self.complex.n_dofs)
        for i in range(len(self.complex.pieces)):
            aw = self.weight_of(i)
            np.add.at(out, self.complex.global_of[i], aw.lumped(which))
        return out

    def total_mass(self) -> float:
        return float(sum(self.weight_of(i).total() for i in self.weights))

    def describe(self) -> list[dict]:
        return [
            {"piece": self.complex.pieces[i].name, **aw.spec.describe()}
            for i, aw in sorted(self.weights.items())
        ]


def _power_tables(piece, anchor: AnchorGeometry, alpha: float):
    nv, nc, dim = piece.n_vertices, piece.n_cells, piece.dim
    on_anchor = np.zeros(nv, dtype=bool)
    on_anchor[anchor.local_vertices] = True
    cell_touch = on_anchor[piece.cells]            # (nc, dim+1)
    n_touch = cell_touch.sum(axis=1)

    hats = np.zeros((nc, dim + 1))
    smooth = np.nonzero(n_touch == 0)[0]
    if smooth.size:
        if dim == 1:
            t, w = quad.gauss01(8)
            a = piece.vertices[piece.cells[smooth, 0]]
            b = piece.vertices[piece.cells[smooth, 1]]
            pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
            d = anchor.distance(pts.reshape(-1, pts.shape[-1])).reshape(len(smooth), -1)
            vals = d ** (-alpha)
            h = piece.cell_volumes[smooth]
            hats[smooth, 0] = h * np.einsum("q,cq->c", w * (1.0 - t), vals)
            hats[smooth, 1] = h * np.einsum("q,cq->c", w * t, vals)
        else:
            bary, wts = quad.triangle_rule()
            verts = piece.vertices[piece.cells[smooth]]        # (c, 3, amb)
            pts = np.einsum("qj,cja->cqa", bary, verts)
            d = anchor.distance(pts.reshape(-1, pts.shape[-1])).reshape(len(smooth), -1)
            vals = d ** (-alpha)
            area = piece.cell_volumes[smooth]
            hats[smooth] = area[:, None] * np.einsum("q,qi,cq->ci", wts, bary, vals)

    anchor_edges = set()
    if anchor.k == 1:
        locs = set(int(v) for v in anchor.local_vertices)
        for a, b in piece.edges():
            if int(a) in locs and int(b) in locs:
                # the glued shared-path edges are exactly the piece edges
                # between consecutive anchor vertices
                anchor_edges.add((min(int(a), int(b)), max(int(a), int(b))))

    for c in np.nonzero(n_touch > 0)[0]:
        cell = piece.cells[c]
        touched = cell_touch[c]
        vol = float(piece.cell_volumes[c])
        if dim == 1:
            i_anchor = int(np.nonzero(touched)[0][0])
            i_far = 1 - i_anchor
            d_far = float(
                anchor.distance(piece.vertices[cell[i_far]][None, :])[0]
            )
            _, h2 = quad.seg_anchor_hats(vol, d_far, alpha)
            hats[c, i_anchor] = h2[0]
            hats[c, i_far] = h2[1]
            continue
        if int(n_touch[c]) == 1:
            i_anchor = int(np.nonzero(touched)[0][0])
            others = [i for i in range(3) if i != i_anchor]
            V = piece.vertices[cell[i_anchor]]
            B = piece.vertices[cell[others[0]]]
            C = piece.vertices[cell[others[1]]]
            _, h3 = quad.tri_vertex_anchor_hats(V, B, C, vol, alpha, anchor.distance)
            hats[c, i_anchor] = h3[0]
            hats[c, others[0]] = h3[1]
            hats[c, others[1]] = h3[2]
            continue
        if int(n_touch[c]) == 2:
            on = np.nonzero(touched)[0]
            key = (
                min(int(cell[on[0]]), int(cell[on[1]])),
                max(int(cell[on[0]]), int(cell[on[1]])),
            )
            if key not in anchor_edges:
                raise InvalidParameterError(
                    f"piece {piece.name!r}: cell {c} touches the anchor at two "
                    "vertices without sharing an anchor edge; refine the mesh"
                )
            i_off = int(np.nonzero(~touched)[0][0])
            A = piece.vertices[cell[on[0]]]
            Bv = piece.vertices[cell[on[1]]]
            Cv = piece.vertices[cell[i_off]]
            e = Bv - A
            e = e / np.linalg.norm(e)
            perp = (Cv - A) - np.dot(Cv - A, e) * e
            d_off = float(np.linalg.norm(perp))
            _, h3 = quad.tri_edge_anchor_hats(vol, d_off, alpha)
            hats[c, on[0]] = h3[0]
            hats[c, on[1]] = h3[1]
            hats[c, i_off] = h3[2]
            continue
        raise InvalidParameterError(
            f"piece {piece.name!r}: cell {c} lies entirely on the anchor"
        )
    return hats.sum(axis=1), hats


def attach_weight(target, spec: WeightSpec) -> WeightedComplex:
    """Attach one piece's weight, returning a new weighted complex."""
    if isinstance(target, WeightedComplex):
        complex, weights = target.complex, dict(target.weights)
    elif isinstance(target, GluedComplex):
        complex, weights = target, {}
    else:
        raise InvalidParameterError("attach_weight needs a (weighted) complex")

    idx = complex.piece_index(spec.piece)
    if idx in weights:
        raise InvalidParameterError(f"piece {spec.piece!r} already has a weight")
    piece = complex.pieces[idx]
    if spec.kind not in WEIGHT_KINDS:
        raise InvalidParameterError(
            f"unknown weight kind {spec.kind!r}; expected one of {WEIGHT_KINDS}"
        )

    nc, dim = piece.n_cells, piece.dim
    anchor = None
    if spec.kind == "constant":
        c = float(spec.constant)
        if not (c > 0) or not np.isfinite(c):
            raise InvalidParameterError("constant weight must be positive and finite")
        w0 = c * piece.cell_volumes
        hats = np.repeat(w0[:, None] / (dim + 1), dim + 1, axis=1)
        inv_w0 = piece.cell_volumes / c
        inv_hats = np.repeat(inv_w0[:, None] / (dim + 1), dim + 1, axis=1)
    elif spec.kind == "tabulated":
        table = np.asarray(spec.table, dtype=float)
        if table.shape != (piece.n_vertices,):
            raise InvalidParameterError(
                f"tabulated weight needs one value per vertex of {spec.piece!r}"
            )
        if not np.all(np.isfinite(table)) or np.any(table <= 0):
            raise InvalidParameterError("tabulated weight values must be positive")
        hats = np.zeros((nc, dim + 1))
        inv_hats = np.zeros((nc, dim + 1))
        for c in range(nc):
            tcell = table[piece.cells[c]]
            vol = float(piece.cell_volumes[c])
            _, hats[c] = quad.p1_interp_hats(vol, dim, tcell)
            if dim == 1:
                _, inv_hats[c] = quad.seg_recip_hats(vol, tcell[0], tcell[1])
            else:
                _, inv_hats[c] = quad.tri_recip_hats(vol, tcell)
        w0 = hats.sum(axis=1)
        inv_w0 = inv_hats.sum(axis=1)
    else:
        alpha = float(spec.exponent)
        if spec.anchor is None:
            raise InvalidParameterError("power weight needs an anchor")
        anchor = _resolve_anchor(complex, idx, spec.anchor)
        width = piece.dim - anchor.k
        if not (-width < alpha < width):
            raise NonIntegrableWeightError(
                f"power weight exponent {alpha:g} on piece {spec.piece!r} lies "
                f"outside the admissible open interval ({-width:g}, {width:g}) "
                f"for n = {piece.dim}, k = {anchor.k}"
            )
        w0, hats = _power_tables(piece, anchor, alpha)
        inv_w0, inv_hats = _power_tables(piece, anchor, -alpha)

    if not np.all(np.isfinite(hats)) or np.any(w0 <= 0):
        raise NonIntegrableWeightError(
            f"weight on piece {spec.piece!r} produced non-finite or non-positive "
            "cell masses"
        )
    weights[idx] = AttachedWeight(spec, piece, anchor, w0, hats, inv_w0, inv_hats)
    return WeightedComplex(complex, weights)
