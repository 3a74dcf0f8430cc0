"""Task runners: one validated config in, a report dict plus files out.

Every runner is deterministic given (config, seed): reports round-trip
through `canonical_json` byte-identically, and nothing time- or
machine-dependent is allowed into the report body (the caller records
timestamps in its own metadata, not here).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import capacity as cap
from . import excess as exc
from . import spectral, stochastic
from .config import (
    ExperimentConfig, RegionConfig, SpaceConfig, config_hash, resolved_config,
)
from .dirichlet import DirichletSystem, assemble
from .errors import ConfigError, InvalidParameterError
from .geometry import (
    GluedComplex, build_disk_piece, build_segment_piece, glue, load_mesh_piece,
)
from .geometry.metric import distances_from
from .measure import WeightSpec, WeightedComplex, attach_weight
from .measure.diagnostics import check_a2, check_l_muckenhoupt, check_n_doubling


@dataclass
class TaskResult:
    report: dict
    files: dict = field(default_factory=dict)     # name -> text content


def _csv(rows) -> str:
    return "\n".join(",".join(str(c) for c in row) for row in rows) + "\n"


# -- space construction ----------------------------------------------------------


def _scaled(base: int, level: int, base_level: int, what: str) -> int:
    v = base * level / base_level
    if abs(v - round(v)) > 1e-9:
        raise ConfigError(
            f"ladder level {level} scales {what} to the non-integer {v:g} "
            f"(declared {base} at base level {base_level})"
        )
    return int(round(v))


def build_space(space: SpaceConfig, level: int | None = None,
                base_level: int | None = None,
                config_dir: str = ".") -> WeightedComplex:
    """Construct and weight the glued complex a config describes.

    For ladder tasks the declared piece resolutions correspond to the first
    ladder entry; `level` scales them proportionally.
    """
    pieces = []
    for pc in space.pieces:
        if pc.kind == "segment":
            n = pc.n_cells
            if level is not None:
                n = _scaled(n, level, base_level, f"{pc.name!r} n_cells")
            if pc.origin is None and pc.direction is None:
                pieces.append(build_segment_piece(pc.length, n, name=pc.name))
            else:
                pieces.append(build_segment_piece(
                    pc.length, n, origin=pc.origin, direction=pc.direction,
                    name=pc.name))
        elif pc.kind == "disk":
            r = pc.refinement
            if level is not None:
                r = _scaled(r, level, base_level, f"{pc.name!r} refinement")
            if pc.origin is None and pc.axis is None:
                pieces.append(build_disk_piece(pc.radius, r, name=pc.name))
            else:
                pieces.append(build_disk_piece(
                    pc.radius, r, origin=pc.origin, axis=pc.axis, name=pc.name))
        else:
            path = pc.path
            if not os.path.isabs(path):
                path = os.path.join(config_dir, path)
            pieces.append(load_mesh_piece(path, name=pc.name))

    gc = glue(pieces, tolerance=space.tolerance)

    if space.intersections is not None:
        found = {
            gm.intersection_id: gm for gm in gc.glue_maps
        }
        if len(space.intersections) != len(gc.glue_maps):
            raise ConfigError(
                f"declared {len(space.intersections)} intersections but the "
                f"glued complex has {len(gc.glue_maps)}"
            )
        for decl in space.intersections:
            gm = found.get(decl.id)
            if gm is None:
                raise ConfigError(
                    f"declared intersection {decl.id!r} not found; complex has "
                    f"{sorted(found)}"
                )
            names = {gc.pieces[gm.piece_a].name, gc.pieces[gm.piece_b].name}
            if names != set(decl.pieces):
                raise ConfigError(
                    f"intersection {decl.id!r} joins {sorted(names)}, config "
                    f"declares {sorted(decl.pieces)}"
                )
            if gm.k != decl.k:
                raise ConfigError(
                    f"intersection {decl.id!r} has k={gm.k}, config declares "
                    f"k={decl.k}"
                )

    declared = {w.piece: w for w in space.weights}
    wc: WeightedComplex | GluedComplex = gc
    for pc in space.pieces:
        w = declared.get(pc.name)
        if w is None:
            spec = WeightSpec(pc.name)
        elif w.kind == "constant":
            spec = WeightSpec(pc.name, "constant", constant=w.constant)
        elif w.kind == "power":
            anchor = w.anchor
            if not isinstance(anchor, str):
                anchor = np.asarray(anchor, dtype=float)
            spec = WeightSpec(pc.name, "power", exponent=w.exponent,
                              anchor=anchor)
        else:
            spec = WeightSpec(pc.name, "tabulated", table=list(w.table))
        wc = attach_weight(wc, spec)
    return wc


def resolve_region(wc: WeightedComplex, region: RegionConfig) -> np.ndarray:
    """Region selector -> sorted global DOF indices."""
    gc = wc.complex
    if region.all:
        return np.arange(gc.n_dofs, dtype=np.int64)
    if region.intersection is not None:
        return np.asarray(gc.intersection(region.intersection).dofs,
                          dtype=np.int64)
    if region.piece is not None:
        return np.sort(gc.global_of[gc.piece_index(region.piece)]).astype(np.int64)
    if region.tube is not None:
        gm = gc.intersection(region.tube.intersection)
        d = distances_from(gc, np.asarray(gm.dofs, dtype=np.int64))
        return np.nonzero(d <= region.tube.radius * (1 + 1e-12))[0]
    if region.ball is not None:
        c = gc.nearest_dof(np.asarray(region.ball.center, dtype=float))
        d = distances_from(gc, [c])
        return np.nonzero(d <= region.ball.radius * (1 + 1e-12))[0]
    hs = region.halfspace
    normal = np.asarray(hs.normal, dtype=float)
    if normal.shape != (gc.dof_coords.shape[1],):
        raise ConfigError(
            f"halfspace normal has {normal.size} components, ambient dimension "
            f"is {gc.dof_coords.shape[1]}"
        )
    side = gc.dof_coords @ normal
    return np.nonzero(side <= hs.offset + 1e-12 * max(1.0, abs(hs.offset)))[0]


def _resolve_x0(system: DirichletSystem, x0) -> int:
    gc = system.complex
    if x0 is None:
        return int(np.argmax(system.M))
    if isinstance(x0, int):
        if not (0 <= x0 < gc.n_dofs):
            raise ConfigError(f"x0 DOF {x0} out of range")
        return x0
    return gc.nearest_dof(np.asarray(x0, dtype=float))


# -- per-task runners --------------------------------------------------------------


def _space_summary(wc: WeightedComplex) -> dict:
    gc = wc.complex
    return {
        "pieces": [
            {
                "name": p.name,
                "dim": p.dim,
                "ambient": p.ambient_dim,
                "n_vertices": p.n_vertices,
                "n_cells": p.n_cells,
            }
            for p in gc.pieces
        ],
        "n_dofs": gc.n_dofs,
        "n_components": gc.n_components,
        "n_intersections": len(gc.glue_maps),
        "intersections": [
            {
                "id": gm.intersection_id,
                "pieces": sorted([gc.pieces[gm.piece_a].name,
                                  gc.pieces[gm.piece_b].name]),
                "k": gm.k,
                "n_dofs": len(gm.dofs),
            }
            for gm in gc.glue_maps
        ],
        "weights": [wc.weight_of(i).spec.describe()
                    for i in range(len(gc.pieces))],
        "mesh_scale": exc.mesh_scale(wc),
    }


def _task_build(wc: WeightedComplex, params) -> TaskResult:
    gc = wc.complex
    report = _space_summary(wc)
    files = {}
    coords_rows = [("dof",) + tuple(f"x{i}" for i in range(gc.dof_coords.shape[1]))]
    for i, row in enumerate(gc.dof_coords):
        coords_rows.append((i,) + tuple(f"{v:.17g}" for v in row))
    files["dofs.csv"] = _csv(coords_rows)
    if params.dump_matrices:
        system = assemble(wc)
        files["stiffness.txt"] = system.export_triplets()
        mass_lines = [f"matrix {gc.n_dofs} {gc.n_dofs} {gc.n_dofs}"]
        for i, v in enumerate(system.M):
            mass_lines.append(f"{i} {i} {v:.17g}")
        files["mass.txt"] = "\n".join(mass_lines) + "\n"
        report["mmatrix"] = system.mmatrix_report
        report["lambda_scale"] = system.lambda_scale
    return TaskResult(report, files)


def _task_check_weights(wc: WeightedComplex, params) -> TaskResult:
    gc = wc.complex
    diam = gc.diameter()
    radii = params.radii or list(np.geomspace(diam / 64, diam / 4, 5))
    sweep = params.tube_sweep or list(np.geomspace(diam / 64, diam / 8, 6))
    files = {}
    report = {"space": _space_summary(wc), "diagnostics": []}

    centers = [int(gm.dofs[0]) for gm in gc.glue_maps]
    for p in range(len(gc.pieces)):
        centroid = gc.pieces[p].vertices.mean(axis=0)
        centers.append(gc.nearest_dof(centroid))
    centers = sorted(set(centers))

    for p, piece in enumerate(gc.pieces):
        sample = [(piece.vertices.mean(axis=0), r) for r in radii]
        for gm in gc.glue_maps:
            if p in (gm.piece_a, gm.piece_b):
                v0 = gm.local_vertices(p)[0]
                sample += [(piece.vertices[v0], r) for r in radii]
        rep = check_a2(wc, p, sample, threshold=params.a2_threshold)
        report["diagnostics"].append(rep.verdict_block())
        files[f"a2_{piece.name}.csv"] = _csv(rep.csv_rows())

    profile = check_n_doubling(wc, centers, radii)
    report["diagnostics"].append(profile.verdict_block())
    files["doubling.csv"] = _csv(profile.csv_rows())

    for gm in gc.glue_maps:
        for p in (gm.piece_a, gm.piece_b):
            rep = check_l_muckenhoupt(wc, p, gm.intersection_id, sweep)
            block = rep.verdict_block()
            block["intersection"] = gm.intersection_id
            report["diagnostics"].append(block)
            name = f"tube_{gc.pieces[p].name}_{gm.intersection_id}.csv"
            files[name] = _csv(rep.csv_rows())
    return TaskResult(report, files)


def _task_spectrum(wc: WeightedComplex, params) -> TaskResult:
    system = assemble(wc)
    rep = spectral.eigen(system, k=params.k)
    report = {
        "spectrum": rep.to_dict(),
        "mmatrix_compliant": system.mmatrix_report["compliant"],
    }
    files = {}
    rows = [("index", "eigenvalue")]
    for i, v in enumerate(rep.eigenvalues):
        rows.append((i, f"{v:.17g}"))
    files["eigenvalues.csv"] = _csv(rows)

    gc = wc.complex
    mode_rows = [("dof",)
                 + tuple(f"x{i}" for i in range(gc.dof_coords.shape[1]))
                 + tuple(f"phi{j}" for j in range(rep.eigenvectors.shape[1]))]
    for i in range(gc.n_dofs):
        mode_rows.append(
            (i,)
            + tuple(f"{v:.17g}" for v in gc.dof_coords[i])
            + tuple(f"{v:.17g}" for v in rep.eigenvectors[i])
        )
    files["modes.csv"] = _csv(mode_rows)

    if params.decay_horizon is not None:
        if rep.kernel_dim >= rep.eigenvectors.shape[1]:
            raise InvalidParameterError(
                "decay fit needs a non-kernel mode; raise k"
            )
        f0 = rep.eigenvectors[:, rep.kernel_dim]
        fit = spectral.decay_fit(system, f0, params.decay_horizon,
                                 tau=params.decay_tau)
        gap = rep.gap
        report["decay"] = {
            "rate": fit.rate,
            "tau": fit.tau,
            "n_steps_used": fit.n_steps_used,
            "gap": gap,
            "relative_gap_error": abs(fit.rate - gap) / gap if gap > 0
            else float("nan"),
        }
    return TaskResult(report, files)


def _task_ergodicity(cfg: ExperimentConfig, params, config_dir: str) -> TaskResult:
    ladder = list(params.ladder)

    def builder(level):
        return assemble(build_space(cfg.space, level=level,
                                    base_level=ladder[0],
                                    config_dir=config_dir))

    curve = spectral.ergodicity_verdict(
        builder, ladder, ergodic_ratio=params.ergodic_ratio,
        degenerate_ratio=params.degenerate_ratio,
        slope_tol=params.slope_tol, k=params.k,
    )
    return TaskResult({"gap_curve": curve.to_dict()},
                      {"gaps.csv": _csv(curve.csv_rows())})


def _task_capacity(cfg: ExperimentConfig, wc: WeightedComplex, params,
                   config_dir: str) -> TaskResult:
    gc = wc.complex
    if params.condenser is not None:
        system = assemble(wc)
        K_set = resolve_region(wc, params.condenser.k_set)
        Omega = resolve_region(wc, params.condenser.omega)
        res = cap.relative_capacity(system, K_set, Omega)
        report = {
            "condenser": {
                "value": res.value,
                "residual": res.residual,
                "n_K": int(res.K_set.size),
                "n_Omega": int(res.Omega.size),
                "potential_min": float(res.potential.min()),
                "potential_max": float(res.potential.max()),
            }
        }
        rows = [("dof", "potential")]
        for i, v in enumerate(res.potential):
            rows.append((i, f"{v:.17g}"))
        return TaskResult(report, {"potential.csv": _csv(rows)})

    if params.bounds is not None:
        b = params.bounds
        gc.intersection(b.intersection)
        grid = b.R * np.geomspace(1e-3, 1.0, b.n_grid)
        be = cap.capacity_bounds(wc, b.intersection, b.R, rho_grid=grid,
                                 slope_band=b.slope_band)
        return TaskResult({"bounds": be.to_dict()},
                          {"integrand.csv": _csv(be.csv_rows())})

    eq = params.equivalence
    ladder = list(eq.ladder)

    def builder(level):
        return build_space(cfg.space, level=level, base_level=ladder[0],
                           config_dir=config_dir)

    rep = cap.capacity_equivalence_check(builder, eq.intersection, ladder,
                                         R=eq.R, slope_tol=eq.slope_tol)
    rows = [("level",) + tuple(sorted(rep.side_values))]
    for i, lev in enumerate(rep.levels):
        rows.append((lev,) + tuple(f"{rep.side_values[s][i]:.17g}"
                                   for s in sorted(rep.side_values)))
    return TaskResult({"equivalence": rep.to_dict()}, {"sides.csv": _csv(rows)})


def _task_walk(cfg: ExperimentConfig, wc: WeightedComplex, params, seed: int,
               config_dir: str) -> TaskResult:
    if params.mode == "crossing":
        cr = params.crossing
        ladder = list(cr.ladder)

        def builder(level):
            return assemble(build_space(cfg.space, level=level,
                                        base_level=ladder[0],
                                        config_dir=config_dir))

        study = stochastic.crossing_study(
            builder, ladder, cr.intersection, params.T,
            n_paths=params.n_paths, delta=cr.delta, seed=seed,
            slope_tol=cr.slope_tol,
        )
        rows = [("level", "deep_rate", "raw_rate")]
        for lev, r, rr in zip(study.levels, study.rates, study.raw_rates):
            rows.append((lev, f"{r:.17g}", f"{rr:.17g}"))
        return TaskResult({"crossing_study": study.to_dict()},
                          {"rates.csv": _csv(rows)})

    system = assemble(wc)
    chain = stochastic.build_chain(system, seed=seed)
    x0 = _resolve_x0(system, params.x0)

    if params.mode == "path":
        trace = stochastic.sample_path(chain, x0, params.T, seed=seed)
        report = {
            "path": {
                "x0": x0,
                "T": params.T,
                "n_jumps": len(trace.path) - 1,
                "crossings": trace.crossings,
            }
        }
        return TaskResult(report,
                          {"path.csv": _csv(trace.csv_rows(wc.complex))})

    if params.mode == "fk":
        fk = params.fk
        if fk.coordinate is not None:
            amb = wc.complex.dof_coords.shape[1]
            if fk.coordinate >= amb:
                raise ConfigError(
                    f"fk coordinate {fk.coordinate} outside ambient dimension {amb}"
                )
            u0 = wc.complex.dof_coords[:, fk.coordinate].copy()
        else:
            u0 = np.zeros(system.n_dofs)
            u0[resolve_region(wc, fk.indicator)] = 1.0
        check = stochastic.feynman_kac_check(
            chain, u0, x0, params.T, n_paths=params.n_paths, seed=seed)
        return TaskResult({
            "feynman_kac": {
                "mc_mean": check.mc_mean,
                "mc_se": check.mc_se,
                "pde_value": check.pde_value,
                "z_score": check.z_score,
                "n_paths": check.n_paths,
                "consistent": check.consistent,
            }
        })

    stats = stochastic.sample_ensemble(
        chain, x0, params.T, params.n_paths, seed=seed,
        intersection=params.intersection, delta=params.delta)
    tv = stats.occupation_tv(chain.stationary)
    report = {
        "ensemble": {
            "x0": x0,
            "T": params.T,
            "n_paths": params.n_paths,
            "occupation_tv": tv,
            "delta": stats.delta,
        }
    }
    if params.intersection is not None:
        cs = stochastic.crossing_statistics(stats, seed=seed)
        report["ensemble"]["crossings"] = cs.to_dict()
    rows = [("dof", "occupation", "stationary")]
    occ = stats.occupation / stats.occupation.sum()
    for i in range(system.n_dofs):
        rows.append((i, f"{occ[i]:.17g}", f"{chain.stationary[i]:.17g}"))
    return TaskResult(report, {"occupation.csv": _csv(rows)})


def _task_excess(wc: WeightedComplex, params) -> TaskResult:
    system = assemble(wc)
    families = [(s.name, resolve_region(wc, s.region)) for s in params.sets]
    curves = exc.gamma_probe(system, wc, families, params.h_schedule,
                             convention=params.convention,
                             min_ratio=params.min_ratio)
    report = {
        "convention": params.convention,
        "normalization": curves[0].normalization if curves else None,
        "curves": [c.to_dict() for c in curves],
    }
    files = {f"curve_{c.label}.csv": _csv(c.csv_rows()) for c in curves}
    return TaskResult(report, files)


# -- entry point --------------------------------------------------------------------


def run_task(cfg: ExperimentConfig, seed: int | None = None,
             config_dir: str = ".") -> TaskResult:
    """Run the configured task; deterministic given (config, seed)."""
    effective_seed = cfg.seed if seed is None else int(seed)
    params = cfg.parsed_params

    if cfg.task == "ergodicity":
        inner = _task_ergodicity(cfg, params, config_dir)
    else:
        wc = build_space(cfg.space, config_dir=config_dir)
        if cfg.task == "build":
            inner = _task_build(wc, params)
        elif cfg.task == "check-weights":
            inner = _task_check_weights(wc, params)
        elif cfg.task == "spectrum":
            inner = _task_spectrum(wc, params)
        elif cfg.task == "capacity":
            inner = _task_capacity(cfg, wc, params, config_dir)
        elif cfg.task == "walk":
            inner = _task_walk(cfg, wc, params, effective_seed, config_dir)
        else:
            inner = _task_excess(wc, params)

    report = {
        "task": cfg.task,
        "seed": effective_seed,
        "config": resolved_config(cfg),
        "config_hash": config_hash(cfg),
        "results": inner.report,
    }
    return TaskResult(report, inner.files)
