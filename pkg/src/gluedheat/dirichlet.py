"""Discrete Dirichlet form: weighted P1 stiffness, lumped mass, heat stepping.

The energy of the glued space is assembled piece by piece: each cell
contributes (grad phi_i . grad phi_j) times its weighted volume (P1 gradients
are cellwise constant, so the weight enters only through the cell mass, which
the measure module integrates exactly near singular anchors).  The mass
vector is the lumped weighted measure.  Boundary conditions are natural
(Neumann): nothing is imposed anywhere.

Time stepping is implicit Euler, (M + tau K) u+ = M u: unconditionally
stable, mass-conservative, energy-dissipating, and (on meshes whose stiffness
is an M-matrix) order-preserving.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import cg as _cg
from scipy.sparse.linalg import splu

from .errors import InvalidParameterError, NumericError
from .measure import WeightedComplex

SOLVE_RTOL = 1e-10


@dataclass
class HeatState:
    """One snapshot of the discrete heat flow."""

    values: np.ndarray
    time: float = 0.0
    energy_density: np.ndarray | None = None   # per-cell |grad u|^2 omega, stacked

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise InvalidParameterError("heat state values must be finite")
        if self.time < 0:
            raise InvalidParameterError("heat state time must be nonnegative")


class DirichletSystem:
    """Assembled stiffness K, lumped mass M and solver caches."""

    def __init__(self, wc: WeightedComplex, K: csr_matrix, M: np.ndarray, grads):
        self.wc = wc
        self.complex = wc.complex
        self.K = K
        self.M = M
        self.n_dofs = self.complex.n_dofs
        self.piece_membership = self.complex.dof_membership
        self._grads = grads            # per piece: (nc, dim+1, amb) hat gradients
        self._factors: dict = {}

        diag = K.diagonal()
        self.lambda_scale = float(np.max(diag / M)) if self.n_dofs else 0.0

        off = K.copy()
        off.setdiag(0.0)
        off.eliminate_zeros()
        pos = off.data > 1e-12 * max(float(np.abs(K.data).max()), 1e-300)
        worst = []
        if pos.any():
            coo = off.tocoo()
            sel = np.nonzero(pos)[0]
            order = sel[np.argsort(-off.data[sel])][:8]
            worst = [
                (int(coo.row[i]), int(coo.col[i]), float(coo.data[i])) for i in order
            ]
        self.mmatrix_report = {
            "compliant": not bool(pos.any()),
            "n_positive_offdiagonal": int(pos.sum()),
            "max_positive_offdiagonal": float(off.data[pos].max()) if pos.any() else 0.0,
            "worst_entries": worst,
        }

    # -- form queries --------------------------------------------------------

    def energy(self, u: np.ndarray) -> float:
        return float(u @ (self.K @ u))

    def inner_mu(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.sum(self.M * u * v))

    def norm_mu(self, u: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner_mu(u, u), 0.0)))

    def total_mass(self, u: np.ndarray) -> float:
        return float(np.sum(self.M * u))

    def mean_mu(self, u: np.ndarray) -> float:
        return self.total_mass(u) / float(np.sum(self.M))

    def energy_density(self, u: np.ndarray) -> np.ndarray:
        """Per-cell |grad u|^2 times the cell-average weight, pieces stacked."""
        out = []
        for p, piece in enumerate(self.complex.pieces):
            g = self._grads[p]
            vals = u[self.complex.global_of[p][piece.cells]]     # (nc, d+1)
            grad = np.einsum("cia,ci->ca", g, vals)
            w_avg = self.wc.weight_of(p).w0 / piece.cell_volumes
            out.append(np.einsum("ca,ca->c", grad, grad) * w_avg)
        return np.concatenate(out)

    def export_triplets(self) -> str:
        """Stiffness in a plain triplet text format.

        First line: ``matrix N N NNZ``; then one ``row col value`` line per
        stored entry (0-based indices, %.17g values, row-major order).
        """
        coo = self.K.tocoo()
        order = np.lexsort((coo.col, coo.row))
        lines = [f"matrix {self.n_dofs} {self.n_dofs} {coo.nnz}"]
        for i in order:
            lines.append(f"{coo.row[i]} {coo.col[i]} {coo.data[i]:.17g}")
        return "\n".join(lines) + "\n"

    # -- linear solves ---------------------------------------------------------

    def _operator(self, tau_key):
        """(M + c K) as CSC for factorization; tau_key = ('res',) or ('heat', tau)."""
        c = 1.0 if tau_key[0] == "res" else tau_key[1]
        A = self.K.multiply(c).tocsc()
        A = A + csr_matrix(
            (self.M, (np.arange(self.n_dofs), np.arange(self.n_dofs))),
            shape=A.shape,
        ).tocsc()
        return A

    def solve_shifted(self, tau_key, b: np.ndarray, method: str = "direct") -> np.ndarray:
        """Solve (M + c K) u = b with the relative-residual contract 1e-10."""
        A = None
        if method == "direct":
            fac = self._factors.get(tau_key)
            if fac is None:
                A = self._operator(tau_key)
                try:
                    fac = splu(A)
                except RuntimeError as exc:
                    raise NumericError(f"sparse factorization failed: {exc}") from exc
                self._factors[tau_key] = (fac, A)
            fac, A = self._factors[tau_key]
            u = fac.solve(b)
        elif method == "cg":
            A = self._operator(tau_key)
            pre = 1.0 / A.diagonal()
            from scipy.sparse.linalg import LinearOperator

            P = LinearOperator(A.shape, matvec=lambda x: pre * x)
            u, info = _cg(A, b, rtol=SOLVE_RTOL * 0.1, atol=0.0, M=P, maxiter=20 * self.n_dofs)
            if info != 0:
                res = float(np.linalg.norm(A @ u - b))
                raise NumericError(
                    f"conjugate gradient did not converge (info={info}, "
                    f"residual={res:g})"
                )
        else:
            raise InvalidParameterError(f"unknown solve method {method!r}")

        bnorm = float(np.linalg.norm(b))
        res = float(np.linalg.norm(A @ u - b))
        if res > SOLVE_RTOL * max(bnorm, 1e-300):
            raise NumericError(
                f"solver residual {res:g} exceeds {SOLVE_RTOL:g} * |b| = "
                f"{SOLVE_RTOL * bnorm:g}"
            )
        return u


def assemble(wc: WeightedComplex) -> DirichletSystem:
    """Assemble the weighted P1 system over global DOFs."""
    if not isinstance(wc, WeightedComplex):
        raise InvalidParameterError("assemble needs a weighted complex")
    if not wc.is_complete():
        missing = [
            p.name for i, p in enumerate(wc.complex.pieces) if i not in wc.weights
        ]
        raise InvalidParameterError(f"pieces without weights: {missing}")

    complex = wc.complex
    n = complex.n_dofs
    rows, cols, vals = [], [], []
    grads = []
    for p, piece in enumerate(complex.pieces):
        aw = wc.weight_of(p)
        verts = piece.vertices[piece.cells]                   # (nc, d+1, amb)
        e = verts[:, 1:, :] - verts[:, :1, :]                 # (nc, d, amb)
        gram = np.einsum("cik,cjk->cij", e, e)
        bad = np.nonzero(np.linalg.det(gram) <= 0)[0]
        if bad.size:
            raise InvalidParameterError(
                f"piece {piece.name!r}: degenerate cell {int(bad[0])} in assembly"
            )
        ginv = np.linalg.inv(gram)
        grad_far = np.einsum("cij,cja->cia", ginv, e)         # grad of lambda_1..d
        grad0 = -grad_far.sum(axis=1, keepdims=True)
        grad = np.concatenate([grad0, grad_far], axis=1)      # (nc, d+1, amb)
        grads.append(grad)

        kloc = np.einsum("cia,cja->cij", grad, grad) * aw.w0[:, None, None]
        gidx = complex.global_of[p][piece.cells]              # (nc, d+1)
        d1 = piece.dim + 1
        rows.append(np.repeat(gidx, d1, axis=1).ravel())
        cols.append(np.tile(gidx, (1, d1)).ravel())
        vals.append(kloc.ravel())

    K = csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    K.sum_duplicates()
    M = wc.lumped_global("mass")
    if np.any(M <= 0) or not np.all(np.isfinite(M)):
        raise NumericError("lumped mass must be positive and finite everywhere")

    scale = float(np.abs(K.data).max()) if K.nnz else 1.0
    asym = float(np.abs((K - K.T).data).max()) if (K - K.T).nnz else 0.0
    if asym > 1e-12 * scale:
        raise NumericError(f"stiffness asymmetry {asym:g} exceeds tolerance")
    drift = float(np.abs(K @ np.ones(n)).max())
    if drift > 1e-10 * scale:
        raise NumericError(
            f"constants are not in the stiffness kernel (|K 1| = {drift:g})"
        )
    return DirichletSystem(wc, K, M, grads)


def apply_resolvent(system: DirichletSystem, f: np.ndarray, method: str = "direct") -> np.ndarray:
    """Solve (M + K) u = M f; a mu-contraction fixing constants."""
    f = np.asarray(f, dtype=float)
    if f.shape != (system.n_dofs,):
        raise InvalidParameterError("resolvent input has wrong length")
    return system.solve_shifted(("res",), system.M * f, method=method)


def heat_step(system: DirichletSystem, state: HeatState, tau: float,
              method: str = "direct", with_density: bool = False) -> HeatState:
    """One implicit Euler step of size tau."""
    if not (tau > 0) or not np.isfinite(tau):
        raise InvalidParameterError("time step must be positive and finite")
    u = system.solve_shifted(("heat", float(tau)), system.M * state.values, method=method)
    dens = system.energy_density(u) if with_density else None
    return HeatState(values=u, time=state.time + tau, energy_density=dens)


@dataclass
class Trajectory:
    """Heat trajectory with per-step conserved/dissipated quantities."""

    states: list = field(default_factory=list)
    rows: list = field(default_factory=list)   # (time, mass, energy, min, max, l2_dev)

    def csv_rows(self):
        return [("time", "mass", "energy", "min", "max", "l2_deviation")] + [
            tuple(f"{x:.17g}" for x in row) for row in self.rows
        ]

    @property
    def final(self) -> HeatState:
        return self.states[-1]


def evolve(system: DirichletSystem, f0, T: float | None = None,
           tau_schedule=None, method: str = "direct",
           keep_states: bool = True) -> Trajectory:
    """Run implicit Euler over a step schedule, recording diagnostics.

    Either give `tau_schedule` explicitly, or `T` with a uniform 64-step
    schedule.  Energy must not increase along the trajectory (dissipation is
    structural for implicit Euler; a violation raises a numeric error).
    """
    if tau_schedule is None:
        if T is None or not (T > 0):
            raise InvalidParameterError("evolve needs T > 0 or a step schedule")
        tau_schedule = [T / 64.0] * 64
    tau_schedule = [float(t) for t in tau_schedule]
    if any(t <= 0 for t in tau_schedule):
        raise InvalidParameterError("all steps must be positive")
    if T is not None and abs(sum(tau_schedule) - T) > 1e-9 * max(T, 1.0):
        raise InvalidParameterError("step schedule does not sum to the horizon")

    state = HeatState(values=np.asarray(f0, dtype=float), time=0.0)
    traj = Trajectory()
    mean = system.mean_mu(state.values)

    def record(st: HeatState):
        if keep_states:
            traj.states.append(st)
        dev = st.values - mean
        traj.rows.append(
            (
                st.time,
                system.total_mass(st.values),
                system.energy(st.values),
                float(st.values.min()),
                float(st.values.max()),
                system.norm_mu(dev),
            )
        )

    record(state)
    prev_energy = system.energy(state.values)
    for tau in tau_schedule:
        state = heat_step(system, state, tau, method=method)
        en = system.energy(state.values)
        if en > prev_energy * (1.0 + 1e-9) + 1e-14 * system.lambda_scale:
            raise NumericError(
                f"energy increased along the heat flow at t={state.time:g}: "
                f"{prev_energy:g} -> {en:g}"
            )
        prev_energy = en
        record(state)
    if not keep_states:
        traj.states.append(state)
    return traj
