"""Cellwise quadrature of weighted hat-function integrals.

Every cell gets the three tables

    w0        = integral of omega over the cell
    hats[v]   = integral of phi_v * omega            (lumped weighted mass)
    inv_hats  = the same for 1/omega

For power weights omega = dist(., anchor)^(-alpha), cells touching the anchor
use exact integration in the radial coordinate (the weight is singular there
and point sampling is meaningless); everything else uses fixed Gauss rules.
The radial formulas assume dist grows linearly along rays from the touching
vertex (true for point anchors and locally straight path anchors) and are
documented to first order otherwise.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss01(order: int):
    """Gauss-Legendre nodes/weights moved to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


# degree-5 symmetric 7-point triangle rule (barycentric coords, weights sum 1)
_TRI7_W0 = 9.0 / 40.0
_TRI7_WA = (155.0 - np.sqrt(15.0)) / 1200.0
_TRI7_WB = (155.0 + np.sqrt(15.0)) / 1200.0
_TRI7_A = (6.0 - np.sqrt(15.0)) / 21.0
_TRI7_B = (6.0 + np.sqrt(15.0)) / 21.0


@lru_cache(maxsize=None)
def triangle_rule():
    bary = [(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)]
    wts = [_TRI7_W0]
    for a, w in ((_TRI7_A, _TRI7_WA), (_TRI7_B, _TRI7_WB)):
        b = 1.0 - 2.0 * a
        bary += [(b, a, a), (a, b, a), (a, a, b)]
        wts += [w, w, w]
    return np.asarray(bary), np.asarray(wts)


def seg_smooth_hats(a, b, wfun, order: int = 8):
    """(w0, hats) for a straight 1-cell with a smooth positive weight."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    h = float(np.linalg.norm(b - a))
    t, w = gauss01(order)
    pts = a[None, :] + t[:, None] * (b - a)[None, :]
    vals = wfun(pts)
    hats = np.array(
        [h * np.sum(w * (1.0 - t) * vals), h * np.sum(w * t * vals)]
    )
    return float(hats.sum()), hats


def seg_anchor_hats(h: float, d_far: float, alpha: float):
    """(w0, hats) for a 1-cell whose first endpoint lies on the anchor.

    dist rises linearly from 0 to d_far along the cell; omega = dist^(-alpha),
    alpha < 1.  hats[0] belongs to the anchored endpoint.
    """
    s = d_far ** (-alpha)
    hat0 = h * s * (1.0 / (1.0 - alpha) - 1.0 / (2.0 - alpha))
    hat1 = h * s / (2.0 - alpha)
    return hat0 + hat1, np.array([hat0, hat1])


def tri_smooth_hats(verts, area: float, wfun):
    """(w0, hats) for a triangle with a smooth positive weight."""
    bary, wts = triangle_rule()
    pts = bary @ np.asarray(verts, float)
    vals = wfun(pts)
    hats = np.array(
        [2.0 * area * 0.5 * np.sum(wts * bary[:, i] * vals) for i in range(3)]
    )
    # 2*area*0.5 = area: rule weights integrate to 1 over the reference triangle
    return float(hats.sum()), hats


def tri_vertex_anchor_hats(V, B, C, area: float, alpha: float, distfun, order: int = 12):
    """(w0, hats) for a triangle whose vertex V lies on the anchor set.

    Duffy coordinates x = V + u*((B-V) + v*(C-B)) concentrate the u-integral
    radially; with dist(V + u*w) = u*dist(V + w) the u-part is exact for
    omega = dist^(-alpha), alpha < 2.  hats ordered (V, B, C).
    """
    V = np.asarray(V, float)
    B = np.asarray(B, float)
    C = np.asarray(C, float)
    v, w = gauss01(order)
    chord = (B - V)[None, :] + v[:, None] * (C - B)[None, :]
    g = distfun(V[None, :] + chord)
    ga = np.sum(w * g ** (-alpha))
    gb = np.sum(w * (1.0 - v) * g ** (-alpha))
    gc = np.sum(w * v * g ** (-alpha))
    u_anchor = 1.0 / (2.0 - alpha) - 1.0 / (3.0 - alpha)
    u_far = 1.0 / (3.0 - alpha)
    hats = 2.0 * area * np.array([u_anchor * ga, u_far * gb, u_far * gc])
    return float(hats.sum()), hats


def tri_edge_anchor_hats(area: float, d_off: float, alpha: float):
    """(w0, hats) for a triangle with one full edge on a straight anchor path.

    dist is the perpendicular distance to the edge's line, linear in the
    barycentric coordinate of the off vertex; exact for alpha < 1.  hats
    ordered (on-edge, on-edge, off).
    """
    s = d_off ** (-alpha)
    on = area * s * (
        1.0 / (1.0 - alpha) - 2.0 / (2.0 - alpha) + 1.0 / (3.0 - alpha)
    )
    off = 2.0 * area * s * (1.0 / (2.0 - alpha) - 1.0 / (3.0 - alpha))
    return 2.0 * on + off, np.array([on, on, off])


def seg_recip_hats(h: float, ta: float, tb: float, order: int = 8):
    """(w0, hats) for 1/omega on a 1-cell, omega the P1 interpolant (ta, tb)."""
    t, w = gauss01(order)
    vals = 1.0 / ((1.0 - t) * ta + t * tb)
    hats = np.array([h * np.sum(w * (1.0 - t) * vals), h * np.sum(w * t * vals)])
    return float(hats.sum()), hats


def tri_recip_hats(area: float, tcell, order_unused: int = 0):
    """(w0, hats) for 1/omega on a triangle, omega the P1 interpolant tcell."""
    bary, wts = triangle_rule()
    vals = 1.0 / (bary @ np.asarray(tcell, float))
    hats = np.array([area * np.sum(wts * bary[:, i] * vals) for i in range(3)])
    return float(hats.sum()), hats


def p1_interp_hats(verts_or_area, dim: int, table):
    """(w0, hats) when omega is the P1 interpolant of per-vertex values.

    Exact: integral of phi_i * Sum_j t_j phi_j uses the P1 mass matrix
    |T| (1 + delta_ij) / ((d+1)(d+2)).
    """
    table = np.asarray(table, float)
    area = float(verts_or_area)
    npv = dim + 1
    scale = area / ((npv) * (npv + 1))
    hats = scale * (table + table.sum())
    return float(hats.sum()), hats
