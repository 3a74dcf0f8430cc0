"""Relative (2,mu)-capacities: equilibrium potentials and bound integrals.

The discrete capacity of a condenser (K_set, Omega) is the energy of the
harmonic equilibrium potential, solved as an equality-constrained linear
system (u = 1 on K_set, u = 0 outside Omega).  On meshes whose stiffness is
an M-matrix the maximum principle keeps the potential in [0,1], which is
certified after every solve rather than enforced by an obstacle solver.

The bound integrals around an intersection L are evaluated in two routes:
the measure route with integrand N(rho) * rho / mu_i(L_rho), and the weight
route with integrand rho^-(2n_i-2k-1) * int_{L_rho} 1/omega.  For power
weights dist^-alpha both have small-rho slope 1-(n_i-k)+alpha, so the
integral converges exactly when alpha > n_i-k-2; that analytic exponent
decides the verdict when available, and a log-log slope fit over the mesh-
resolved window decides it for tabulated weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse.linalg import splu

from .dirichlet import DirichletSystem, assemble
from .errors import InvalidParameterError, NumericError
from .geometry import GluedComplex, distances_from, glue
from .ladders import reciprocal_affine_fit
from .measure import WeightedComplex, attach_weight
from .measure.weights import _resolve_anchor

SOLVE_RTOL = 1e-10


@dataclass
class CapacityResult:
    value: float
    potential: np.ndarray
    K_set: np.ndarray
    Omega: np.ndarray
    residual: float


def _l_dofs(complex: GluedComplex, L) -> np.ndarray:
    if isinstance(L, str):
        return np.asarray(complex.intersection(L).dofs, dtype=np.int64)
    L = np.unique(np.asarray(L, dtype=np.int64))
    if L.size == 0:
        raise InvalidParameterError("L must be a nonempty DOF set")
    if L.min() < 0 or L.max() >= complex.n_dofs:
        raise InvalidParameterError("L contains out-of-range DOF indices")
    return L


def tube(complex: GluedComplex, L, r: float) -> np.ndarray:
    """DOFs at glued distance <= r from the intersection's DOFs."""
    if not (r > 0):
        raise InvalidParameterError("tube radius must be positive")
    sources = _l_dofs(complex, L)
    d = distances_from(complex, sources)
    return np.nonzero(d <= r * (1 + 1e-12))[0]


def relative_capacity(system: DirichletSystem, K_set, Omega) -> CapacityResult:
    """Discrete Cap(K, Omega): min u.K.u with u=1 on K, u=0 off Omega."""
    n = system.n_dofs
    K_set = np.unique(np.asarray(K_set, dtype=np.int64))
    Omega = np.unique(np.asarray(Omega, dtype=np.int64))
    if K_set.size == 0:
        raise InvalidParameterError("K_set must be nonempty")
    for name, s in (("K_set", K_set), ("Omega", Omega)):
        if s.size and (s.min() < 0 or s.max() >= n):
            raise InvalidParameterError(f"{name} contains out-of-range DOF indices")
    in_omega = np.zeros(n, dtype=bool)
    in_omega[Omega] = True
    if not in_omega[K_set].all():
        raise InvalidParameterError(
            "K_set touches the complement of Omega: the condenser is degenerate"
        )

    u = np.zeros(n)
    u[K_set] = 1.0
    is_k = np.zeros(n, dtype=bool)
    is_k[K_set] = True
    free = in_omega & ~is_k

    # components not meeting K float at their energy-0 value: 1 if all-K-free
    # interior of Omega never occurs there, so 0; components fully inside
    # Omega containing K take the constant 1.
    labels = system.complex.component_labels
    for c in np.unique(labels):
        sel = labels == c
        if not is_k[sel].any():
            free[sel] = False          # stays 0
        elif in_omega[sel].all():
            u[sel] = 1.0               # no outer plate in this component
            free[sel] = False

    fidx = np.nonzero(free)[0]
    residual = 0.0
    if fidx.size:
        Kff = system.K[fidx][:, fidx].tocsc()
        rhs = -(system.K[fidx] @ u)
        try:
            uf = splu(Kff).solve(rhs)
        except RuntimeError as exc:
            raise NumericError(f"capacity solve failed: {exc}") from exc
        res = float(np.linalg.norm(Kff @ uf - rhs))
        scale = max(float(np.linalg.norm(rhs)), 1e-300)
        if res > SOLVE_RTOL * scale:
            raise NumericError(
                f"capacity solver residual {res:g} exceeds {SOLVE_RTOL:g} "
                "relative tolerance"
            )
        residual = res / scale
        u[fidx] = uf

    if system.mmatrix_report["compliant"]:
        if u.min() < -1e-9 or u.max() > 1 + 1e-9:
            raise NumericError(
                f"equilibrium potential left [0,1] on a compliant mesh: "
                f"range [{u.min():g}, {u.max():g}]"
            )
    value = float(u @ (system.K @ u))
    return CapacityResult(max(value, 0.0), u, K_set, Omega, residual)


@dataclass
class BoundEvaluation:
    lower: float
    upper: float
    integrand_table: list            # rows: (rho, N(rho), mu_i(L_rho) per piece)
    verdict: str                     # finite | divergent
    per_piece: dict = field(default_factory=dict)
    comparability: float = float("nan")   # observed lower/upper

    def to_dict(self):
        return {
            "lower": self.lower,
            "upper": self.upper,
            "verdict": self.verdict,
            "comparability": self.comparability,
            "per_piece": self.per_piece,
        }

    def csv_rows(self):
        npieces = (len(self.integrand_table[0]) - 2) if self.integrand_table else 0
        head = ["rho", "N"] + [f"mu_piece{i}" for i in range(npieces)]
        rows = [tuple(head)]
        for row in self.integrand_table:
            rows.append(tuple(f"{x:.17g}" for x in row))
        return rows


def _tube_masses(wc: WeightedComplex, d: np.ndarray, grid: np.ndarray):
    """Per-piece (mass, reciprocal-mass) of {d <= rho} for each grid rho."""
    gc = wc.complex
    nρ, npieces = len(grid), len(gc.pieces)
    mu = np.zeros((nρ, npieces))
    inv = np.zeros((nρ, npieces))
    vecs = []
    for p in range(npieces):
        m = np.zeros(gc.n_dofs)
        v = np.zeros(gc.n_dofs)
        np.add.at(m, gc.global_of[p], wc.weight_of(p).lumped("mass"))
        np.add.at(v, gc.global_of[p], wc.weight_of(p).lumped("inv"))
        vecs.append((m, v))
    order = np.argsort(d)
    ds = d[order]
    for p, (m, v) in enumerate(vecs):
        cm = np.cumsum(m[order])
        cv = np.cumsum(v[order])
        idx = np.searchsorted(ds, grid * (1 + 1e-12), side="right")
        mu[:, p] = np.where(idx > 0, cm[np.maximum(idx - 1, 0)], 0.0)
        inv[:, p] = np.where(idx > 0, cv[np.maximum(idx - 1, 0)], 0.0)
    return mu, inv


def capacity_bounds(wc: WeightedComplex, L: str, R: float,
                    rho_grid=None, slope_band: float = 0.12) -> BoundEvaluation:
    """Evaluate the capacity lower/upper bound integrals around L."""
    gc = wc.complex
    if not isinstance(L, str):
        raise InvalidParameterError("capacity bounds need an intersection id")
    gm = gc.intersection(L)
    if not (R > 0):
        raise InvalidParameterError("R must be positive")
    if rho_grid is None:
        rho_grid = R * np.geomspace(1e-3, 1.0, 49)
    grid = np.asarray(sorted(float(r) for r in rho_grid))
    if grid[0] <= 0 or grid[-1] > R * (1 + 1e-12):
        raise InvalidParameterError("rho grid must lie in (0, R]")

    sources = np.asarray(gm.dofs, dtype=np.int64)
    d = distances_from(gc, sources)
    mu, inv = _tube_masses(wc, d, grid)
    mu_tot = mu.sum(axis=1)

    # doubling envelope N(rho) = mu(L_{3 rho/2}) / mu(L_{rho/2})
    half, thrice = _tube_masses(wc, d, grid * 0.5)[0].sum(axis=1), \
        _tube_masses(wc, d, grid * 1.5)[0].sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        Nrho = np.where(half > 0, thrice / np.maximum(half, 1e-300), np.inf)

    # resolved window: above the local mesh scale at L, below R/2
    hL = float(np.mean(gc.dof_spacing[sources]))
    window = (grid >= 4 * hL) & (grid <= 0.5 * R)

    per_piece = {}
    lowers = []
    verdicts = []
    for p, piece in enumerate(gc.pieces):
        if p not in (gm.piece_a, gm.piece_b):
            continue
        n_k = piece.dim - gm.k
        spec = wc.weight_of(p).spec
        alpha = {"power": spec.exponent, "constant": 0.0}.get(spec.kind)

        mu_p = mu[:, p]
        inv_p = inv[:, p]
        with np.errstate(divide="ignore"):
            f_mu = Nrho * grid / np.maximum(mu_p, 1e-300)
            f_w = grid ** (-(2 * piece.dim - 2 * gm.k - 1)) * inv_p

        # verdicts: analytic exponent when the weight is a power of the
        # anchor distance, otherwise the fitted small-rho slope
        s_analytic = (1.0 - n_k + alpha) if alpha is not None else None
        s_fit = float("nan")
        ok = window & (f_w > 0) & np.isfinite(f_w)
        if ok.sum() >= 4:
            A = np.vstack([np.ones(ok.sum()), np.log(grid[ok])]).T
            (_, s_fit), *_ = np.linalg.lstsq(A, np.log(f_w[ok]), rcond=None)
            s_fit = float(s_fit)
        if s_analytic is not None:
            divergent = s_analytic <= -1.0
        elif np.isfinite(s_fit):
            divergent = s_fit <= -1.0 + slope_band
        else:
            raise NumericError(
                f"piece {piece.name!r}: tube grid has no mesh-resolved window "
                "to classify the bound integral; refine the mesh or enlarge R"
            )

        boundary_mu = Nrho[-1] * R**2 / max(mu_p[-1], 1e-300)
        int_mu = float(np.trapezoid(f_mu, grid))
        lower_mu = 0.0 if divergent else 1.0 / (boundary_mu + int_mu)
        boundary_w = R ** (-2 * (n_k - 1)) * inv_p[-1]
        int_w = 2 * (n_k - 1) * float(np.trapezoid(f_w, grid))
        lower_w = 0.0 if divergent else 1.0 / max(boundary_w + int_w, 1e-300)

        per_piece[piece.name] = {
            "n_minus_k": n_k,
            "alpha": alpha,
            "slope_analytic": s_analytic,
            "slope_fit": s_fit,
            "divergent": bool(divergent),
            "lower_measure_route": lower_mu,
            "lower_weight_route": lower_w,
        }
        lowers.append(lower_w)
        verdicts.append(divergent)

    verdict = "divergent" if any(verdicts) else "finite"
    lower = 0.0 if verdict == "divergent" else float(min(lowers))
    upper = float(mu_tot[-1] / R**2)   # linear competitor 1 - d/R on L_R
    comp = lower / upper if upper > 0 else float("nan")
    table = [
        (float(g), float(N), *[float(x) for x in mu[i]])
        for i, (g, N) in enumerate(zip(grid, Nrho))
    ]
    return BoundEvaluation(lower, upper, table, verdict, per_piece, comp)


@dataclass
class EquivalenceReport:
    """Per-piece restricted capacities of L along a refinement ladder."""

    intersection: str
    R: float
    levels: list
    side_values: dict                # piece name -> list of capacities
    side_fits: dict                  # piece name -> LadderFit dict
    side_status: dict                # piece name -> positive | vanishing | unclear
    both_positive: bool
    mismatch: bool
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "intersection": self.intersection,
            "R": self.R,
            "levels": list(self.levels),
            "side_values": self.side_values,
            "side_fits": self.side_fits,
            "side_status": self.side_status,
            "both_positive": self.both_positive,
            "mismatch": self.mismatch,
            "notes": list(self.notes),
        }


def _restricted_anchor(gc: GluedComplex, gm) -> dict:
    if gm.k == 0:
        return {"point": gc.dof_coords[gm.dofs[0]].tolist()}
    return {"segments": [[gc.dof_coords[a].tolist(), gc.dof_coords[b].tolist()]
                         for a, b in gm.edges]}


def restricted_capacity(wc: WeightedComplex, intersection: str, piece_idx: int,
                        R: float) -> CapacityResult:
    """Capacity of L inside piece `piece_idx` alone, condenser (L, L_R)."""
    gc = wc.complex
    gm = gc.intersection(intersection)
    if piece_idx not in (gm.piece_a, gm.piece_b):
        raise InvalidParameterError("piece does not touch the intersection")
    piece = gc.pieces[piece_idx]
    single = glue([piece])
    spec = wc.weight_of(piece_idx).spec
    if isinstance(spec.anchor, str):
        spec = replace(spec, anchor=_restricted_anchor(gc, gm))
    swc = attach_weight(single, spec)
    system = assemble(swc)
    locs = gm.local_vertices(piece_idx)
    d = distances_from(single, locs)
    omega = np.nonzero(d <= R * (1 + 1e-12))[0]
    return relative_capacity(system, locs, omega)


def capacity_equivalence_check(builder, intersection: str, ladder,
                               R: float | None = None,
                               slope_tol: float = 0.1) -> EquivalenceReport:
    """Check L's capacity stays positive in both glued pieces under refinement.

    `builder(level)` must return a weighted complex containing `intersection`.
    Each side's ladder of restricted capacities is classified by the
    reciprocal-affine fit; a side whose reciprocal grows is flagged vanishing.
    """
    ladder = [int(x) for x in ladder]
    if len(ladder) < 3:
        raise InvalidParameterError("equivalence check needs >= 3 ladder levels")
    values = {}
    names = None
    radius = R
    for lev in ladder:
        wc = builder(lev)
        gc = wc.complex
        gm = gc.intersection(intersection)
        if radius is None:
            dmax = []
            for p in (gm.piece_a, gm.piece_b):
                anchor = _resolve_anchor(gc, p, intersection)
                dmax.append(float(anchor.distance(gc.pieces[p].vertices).max()))
            radius = 0.45 * min(dmax)
        pair = (gm.piece_a, gm.piece_b)
        if names is None:
            names = [gc.pieces[p].name for p in pair]
            for nm in names:
                values[nm] = []
        for p, nm in zip(pair, names):
            values[nm].append(restricted_capacity(wc, intersection, p, radius).value)

    fits, status, notes = {}, {}, []
    for nm in names:
        fit = reciprocal_affine_fit(ladder, values[nm], slope_tol=slope_tol)
        fits[nm] = fit.to_dict()
        if np.isfinite(fit.limit) and fit.limit > 0:
            status[nm] = "positive"
        elif fit.limit == 0.0:
            status[nm] = "vanishing"
        else:
            status[nm] = "unclear"
        notes.append(f"{nm}: {fit.note}")
    stats = set(status.values())
    both = stats == {"positive"}
    mismatch = "positive" in stats and "vanishing" in stats
    return EquivalenceReport(intersection, float(radius), ladder, values, fits,
                             status, both, mismatch, notes)
