"""Measure diagnostics: balls, doubling profile, A2 and near-set Muckenhoupt.

All verdicts here are sampled heuristics, not proofs: they report observed
trends of the discrete measure (envelopes, slopes, bands) and label them as
such in the output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import dijkstra

from ..errors import InvalidParameterError
from ..geometry import GluedComplex
from .weights import AnchorGeometry, WeightedComplex, _resolve_anchor


def _lumped_cached(wc: WeightedComplex, which: str) -> np.ndarray:
    cache = getattr(wc, "_lumped_cache", None)
    if cache is None:
        cache = {}
        object.__setattr__(wc, "_lumped_cache", cache)
    if which not in cache:
        cache[which] = wc.lumped_global(which)
    return cache[which]


def ball_coverage(complex: GluedComplex, dist: np.ndarray, r: float) -> np.ndarray:
    """Per-DOF covered fraction of the ball {distance <= r}.

    A linear ramp over the local mesh spacing smooths the shell so the
    measure has no first-order boundary bias; DOFs whose whole mesh star is
    inside count fully (this keeps r >= diameter exact at the domain rim).
    Monotone in r.
    """
    c = np.clip(0.5 + (r - dist) / complex.dof_spacing, 0.0, 1.0)
    star_max = dist.copy()
    e = complex.mesh_edges
    np.maximum.at(star_max, e[:, 0], dist[e[:, 1]])
    np.maximum.at(star_max, e[:, 1], dist[e[:, 0]])
    c[(dist <= r) & (star_max <= r)] = 1.0
    return c


def _ball_distances(complex: GluedComplex, center: int, r: float) -> np.ndarray:
    margin = 2.0 * float(complex.dof_spacing.max())
    return dijkstra(
        complex.edge_graph, directed=False, indices=center, limit=r + margin
    )


def mu_ball(wc: WeightedComplex, center, r: float) -> float:
    """Measure of the metric ball: coverage-weighted lumped masses.

    Cells crossed by the shell contribute their hat masses scaled by the
    covered fraction of their vertices (see ball_coverage).
    """
    if not (r > 0):
        raise InvalidParameterError("mu_ball needs r > 0")
    complex = wc.complex
    if isinstance(center, (int, np.integer)):
        c = int(center)
    else:
        c = complex.nearest_dof(center)
    dist = _ball_distances(complex, c, r)
    lum = _lumped_cached(wc, "mass")
    return float(np.dot(ball_coverage(complex, dist, r), lum))


# -- A2 ----------------------------------------------------------------------


@dataclass
class A2Report:
    piece: str
    estimate: float
    rows: list = field(default_factory=list)   # (center_vertex, r, product)
    flag: bool = False
    flag_reason: str = ""
    threshold: float = 0.0

    def csv_rows(self):
        return [("center", "r", "a2_product")] + [
            (c, f"{r:.17g}", f"{v:.17g}") for c, r, v in self.rows
        ]

    def verdict_block(self):
        return {
            "diagnostic": "a2",
            "piece": self.piece,
            "estimate": self.estimate,
            "flag": self.flag,
            "flag_reason": self.flag_reason,
            "threshold": self.threshold,
            "note": "sampled heuristic, not a proof",
        }


def check_a2(
    wc: WeightedComplex,
    piece,
    sample,
    threshold: float = 25.0,
    growth_factor: float = 4.0,
) -> A2Report:
    """Sampled A2 products (mean of omega times mean of 1/omega) over balls.

    Balls live in the piece's own edge graph.  The flag is raised when the
    largest product exceeds `threshold`, or when the product grows by at
    least `growth_factor` monotonically as the radius shrinks at one center.
    Each product is at least 1 (Cauchy-Schwarz).
    """
    if not sample:
        raise InvalidParameterError("check_a2 needs a nonempty ball sample")
    idx = piece if isinstance(piece, int) else wc.complex.piece_index(piece)
    p = wc.complex.pieces[idx]
    aw = wc.weight_of(idx)
    lm = aw.lumped("mass")
    li = aw.lumped("inv")
    lv = aw.lumped("vol")
    graph = p.edge_graph()

    rows = []
    per_center: dict[int, list] = {}
    for center, r in sample:
        if isinstance(center, (int, np.integer)):
            v = int(center)
            if not (0 <= v < p.n_vertices):
                raise InvalidParameterError(f"vertex {v} outside piece {p.name!r}")
        else:
            point = np.asarray(center, dtype=float)
            v = int(np.argmin(np.linalg.norm(p.vertices - point[None, :], axis=1)))
        if not (r > 0):
            raise InvalidParameterError("ball radii must be positive")
        dist = dijkstra(graph, directed=False, indices=v, limit=float(r))
        inside = dist <= r
        vol = lv[inside].sum()
        if vol <= 0:
            continue
        product = float(lm[inside].sum() * li[inside].sum() / vol**2)
        rows.append((v, float(r), product))
        per_center.setdefault(v, []).append((float(r), product))

    if not rows:
        raise InvalidParameterError("no sampled ball had positive volume")
    estimate = max(v for _, _, v in rows)
    flag = False
    reason = ""
    if estimate > threshold:
        flag = True
        reason = f"product {estimate:.3g} exceeds threshold {threshold:g}"
    else:
        for v, pairs in per_center.items():
            pairs.sort(key=lambda t: -t[0])         # shrinking radii
            vals = [x for _, x in pairs]
            if len(vals) >= 3 and all(b > a for a, b in zip(vals, vals[1:])):
                if vals[-1] >= growth_factor * vals[0]:
                    flag = True
                    reason = (
                        f"product grows monotonically by {vals[-1] / vals[0]:.3g}x "
                        f"along shrinking balls at vertex {v}"
                    )
                    break
    rows.sort(key=lambda t: (t[0], t[1]))
    return A2Report(
        piece=p.name,
        estimate=estimate,
        rows=rows,
        flag=flag,
        flag_reason=reason,
        threshold=threshold,
    )


# -- N-doubling ---------------------------------------------------------------


@dataclass
class MeasureProfile:
    ball_table: list = field(default_factory=list)       # (center, r, mu)
    doubling_table: list = field(default_factory=list)   # (r, max ratio)
    n_fit: list = field(default_factory=list)            # (rho = 2r, envelope)
    integral_estimate: float = float("nan")
    verdict: str = ""
    comparison_table: list = field(default_factory=list)  # (center, r, min/max)
    flags: list = field(default_factory=list)

    def csv_rows(self):
        return [("r", "doubling_ratio")] + [
            (f"{r:.17g}", f"{v:.17g}") for r, v in self.doubling_table
        ]

    def verdict_block(self):
        return {
            "diagnostic": "n_doubling",
            "verdict": self.verdict,
            "integral_estimate": self.integral_estimate,
            "flags": self.flags,
            "note": "sampled heuristic envelope, not a proof",
        }


def check_n_doubling(wc: WeightedComplex, centers, radii) -> MeasureProfile:
    """Observed doubling ratios mu(B_3r)/mu(B_r) and their envelope.

    The envelope value observed at radius r is recorded against rho = 2r
    (the scale at which the doubling function is evaluated); the envelope is
    the pointwise max over centers.  The verdict integrates the envelope by
    trapezoid and slope-tests its small-radius tail: "integrable" needs a
    log-log slope above -1.  Centers carried by two pieces also get the
    cross-piece ball-mass comparison; a vanishing trend is flagged.
    """
    radii = sorted(float(r) for r in radii)
    if not radii or radii[0] <= 0:
        raise InvalidParameterError("radii must be positive")
    complex = wc.complex
    lum = _lumped_cached(wc, "mass")

    piece_lumped = {}
    for i in range(len(complex.pieces)):
        v = np.zeros(complex.n_dofs)
        np.add.at(v, complex.global_of[i], wc.weight_of(i).lumped("mass"))
        piece_lumped[i] = v

    profile = MeasureProfile()
    ratio_rows: dict[float, float] = {}
    for center in centers:
        c = int(center) if isinstance(center, (int, np.integer)) else complex.nearest_dof(center)
        dist = _ball_distances(complex, c, 3.0 * radii[-1])
        owners = np.nonzero(complex.dof_membership[c])[0]
        for r in radii:
            cov1 = ball_coverage(complex, dist, r)
            m1 = float(np.dot(cov1, lum))
            m3 = float(np.dot(ball_coverage(complex, dist, 3.0 * r), lum))
            profile.ball_table.append((c, r, m1))
            if m1 > 0:
                ratio = m3 / m1
                ratio_rows[r] = max(ratio_rows.get(r, 1.0), ratio)
            if len(owners) >= 2:
                per_piece = [float(np.dot(cov1, piece_lumped[p])) for p in owners]
                hi = max(per_piece)
                if hi > 0:
                    profile.comparison_table.append((c, r, min(per_piece) / hi))

    profile.ball_table.sort(key=lambda t: (t[0], t[1]))
    profile.doubling_table = sorted(ratio_rows.items())
    profile.n_fit = [(2.0 * r, v) for r, v in profile.doubling_table]

    if len(profile.n_fit) >= 2:
        rho = np.array([x for x, _ in profile.n_fit])
        env = np.array([v for _, v in profile.n_fit])
        profile.integral_estimate = float(np.trapezoid(env, rho) + rho[0] * env[0])
        tail = min(3, len(rho))
        slope = np.polyfit(np.log(rho[:tail]), np.log(env[:tail]), 1)[0]
        profile.verdict = "integrable" if slope > -1.0 else "divergent-looking"
    elif profile.n_fit:
        rho0, env0 = profile.n_fit[0]
        profile.integral_estimate = rho0 * env0
        profile.verdict = "integrable"
    else:
        profile.verdict = "empty"

    profile.comparison_table.sort(key=lambda t: (t[0], t[1]))
    by_center: dict[int, list] = {}
    for c, r, q in profile.comparison_table:
        by_center.setdefault(c, []).append((r, q))
    for c, pairs in by_center.items():
        if len(pairs) >= 2:
            qs = [q for _, q in pairs]
            if qs[0] < 0.25 * qs[-1]:
                profile.flags.append(
                    f"piece-mass comparison at DOF {c} degenerates: "
                    f"min/max ratio falls to {qs[0]:.3g} at r = {pairs[0][0]:g}"
                )
    return profile


# -- near-set Muckenhoupt ------------------------------------------------------


@dataclass
class TubeReport:
    piece: str
    anchor: str
    width: int                                   # n - k
    rows: list = field(default_factory=list)     # (R, normalized product)
    verdict: str = ""
    slope: float = float("nan")
    band: float = float("nan")

    def csv_rows(self):
        return [("R", "normalized_product")] + [
            (f"{r:.17g}", f"{v:.17g}") for r, v in self.rows
        ]

    def verdict_block(self):
        return {
            "diagnostic": "near_set_muckenhoupt",
            "piece": self.piece,
            "anchor": self.anchor,
            "verdict": self.verdict,
            "slope": self.slope,
            "band": self.band,
            "note": "sampled heuristic, not a proof",
        }


def check_l_muckenhoupt(
    wc: WeightedComplex,
    piece,
    anchor,
    r_sweep,
    slope_tol: float = 0.15,
    band_tol: float = 2.5,
) -> TubeReport:
    """Tube products around an intersection, normalized by R^(2(n-k)).

    For each R in the sweep: integral of omega over the tube of width R
    around the anchor times the integral of 1/omega, divided by R^(2(n-k)).
    "satisfied" needs the sweep to stay in a bounded band (max/min below
    `band_tol`) without a systematic log-log drift beyond `slope_tol`.
    """
    idx = piece if isinstance(piece, int) else wc.complex.piece_index(piece)
    p = wc.complex.pieces[idx]
    aw = wc.weight_of(idx)
    geom = anchor if isinstance(anchor, AnchorGeometry) else _resolve_anchor(
        wc.complex, idx, anchor
    )
    width = p.dim - geom.k
    dist_v = geom.distance(p.vertices)
    lm = aw.lumped("mass")
    li = aw.lumped("inv")

    rows = []
    for R in sorted(float(r) for r in r_sweep):
        if R <= 0:
            raise InvalidParameterError("tube widths must be positive")
        inside = dist_v <= R
        m = lm[inside].sum()
        i = li[inside].sum()
        rows.append((R, float(m * i / R ** (2 * width))))

    vals = np.array([v for _, v in rows])
    rs = np.array([r for r, _ in rows])
    band = float(vals.max() / vals.min()) if np.all(vals > 0) else float("inf")
    slope = (
        float(np.polyfit(np.log(rs), np.log(vals), 1)[0]) if len(rows) >= 2 else 0.0
    )
    ok = band <= band_tol and abs(slope) <= slope_tol
    return TubeReport(
        piece=p.name,
        anchor=str(geom.label),
        width=width,
        rows=rows,
        verdict="satisfied" if ok else "violated",
        slope=slope,
        band=band,
    )
