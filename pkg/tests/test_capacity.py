"""Condenser capacities, integral bounds, and the equivalence ladder."""

import numpy as np
import pytest

from gluedheat.capacity import (
    capacity_bounds,
    capacity_equivalence_check,
    relative_capacity,
    restricted_capacity,
    tube,
)
from gluedheat.errors import InvalidParameterError

from conftest import cross_complex, disk_system, spine_complex

from gluedheat.dirichlet import assemble
from gluedheat.measure import WeightSpec, attach_weight


def test_tube_cardinality_tracks_area():
    gc, wc, s = disk_system(64)
    center = gc.nearest_dof([0.0, 0.0])
    t = tube(gc, np.array([center]), 0.5)
    assert abs(len(t) / gc.n_dofs / 0.25 - 1) < 0.10


def test_annulus_condenser_value():
    """Radial condenser 0.1 -> 1.0 on the flat disk: 2 pi / ln 10."""
    gc, wc, s = disk_system(128)
    r = np.linalg.norm(gc.dof_coords, axis=1)
    h = 1.0 / 128
    K = np.nonzero(r <= 0.1 + h / 2)[0]          # nearest mesh ring
    Om = np.nonzero(r < 1.0 - 1e-12)[0]
    res = relative_capacity(s, K, Om)
    oracle = 2 * np.pi / np.log(10.0)
    assert abs(res.value / oracle - 1) < 0.03
    assert res.residual < 1e-10
    assert -1e-9 <= res.potential.min() and res.potential.max() <= 1 + 1e-9


def test_weighted_point_capacity():
    # omega = 1/|x|: a single vertex carries positive capacity 2 pi / R
    gc, wc, s = disk_system(128, alpha=1.0)
    r = np.linalg.norm(gc.dof_coords, axis=1)
    K = np.array([gc.nearest_dof([0.0, 0.0])])
    Om = np.nonzero(r <= 0.5 + 1e-12)[0]
    res = relative_capacity(s, K, Om)
    assert abs(res.value / (4 * np.pi) - 1) < 0.05


def test_unweighted_point_capacity_decays():
    vals = []
    for m in [16, 32, 64]:
        gc, wc, s = disk_system(m)
        K = np.array([gc.nearest_dof([0.0, 0.0])])
        Om = np.arange(gc.n_dofs)[
            np.linalg.norm(gc.dof_coords, axis=1) < 1 - 1e-12]
        vals.append(relative_capacity(s, K, Om).value)
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_capacity_monotone_in_both_arguments():
    gc, wc, s = disk_system(64)
    r = np.linalg.norm(gc.dof_coords, axis=1)
    K1 = np.nonzero(r <= 0.1)[0]
    K2 = np.nonzero(r <= 0.2)[0]
    Om1 = np.nonzero(r <= 0.8)[0]
    Om2 = np.nonzero(r < 1 - 1e-12)[0]
    c_k1 = relative_capacity(s, K1, Om2).value
    assert c_k1 <= relative_capacity(s, K2, Om2).value + 1e-12
    assert c_k1 <= relative_capacity(s, K1, Om1).value + 1e-12


def test_series_law_subadditivity():
    # dyadic chain r=0.1 -> 0.2 -> 0.4: 1/cap(whole) >= sum 1/cap(link)
    gc, wc, s = disk_system(64)
    r = np.linalg.norm(gc.dof_coords, axis=1)
    hmax = 1.0 / 64
    caps = [
        relative_capacity(s, np.nonzero(r <= 0.1 + 1e-12)[0],
                          np.nonzero(r < 0.2 - 1e-12)[0]).value,
        relative_capacity(s, np.nonzero((r >= 0.2 - 1e-12) &
                                        (r <= 0.2 + 2 * hmax))[0],
                          np.nonzero(r < 0.4 - 1e-12)[0]).value,
    ]
    whole = relative_capacity(s, np.nonzero(r <= 0.1 + 1e-12)[0],
                              np.nonzero(r < 0.4 - 1e-12)[0]).value
    assert 1 / whole >= sum(1 / c for c in caps) - 1e-9


def test_relative_capacity_input_validation():
    gc, wc, s = disk_system(16)
    r = np.linalg.norm(gc.dof_coords, axis=1)
    Om = np.nonzero(r < 1 - 1e-12)[0]
    with pytest.raises(InvalidParameterError):
        relative_capacity(s, np.array([], dtype=int), Om)
    # K must sit inside Omega
    rim = int(np.argmax(r))
    with pytest.raises(InvalidParameterError):
        relative_capacity(s, np.array([rim]), Om)


def test_bounds_flip_disk_family():
    """n - k = 2: divergent for alpha <= 0, finite above (spot checks;
    the full 0.25-step scan lives in the acceptance suite)."""
    for alpha, want in [(-0.5, "divergent"), (0.0, "divergent"),
                        (0.25, "finite"), (1.0, "finite")]:
        wc = spine_complex(24, alpha)
        be = capacity_bounds(wc, "J0", 0.5)
        assert be.verdict == want, (alpha, be.verdict)
        pp = be.per_piece["disk"]
        assert pp["n_minus_k"] == 2
        assert pp["divergent"] == (want == "divergent")


def test_bounds_segment_family_all_finite():
    # n - k = 1: threshold alpha = -1 coincides with integrability, so
    # every admissible exponent reads finite
    for alpha in (-0.5, 0.0, 0.5):
        gc = cross_complex(32)
        wc = attach_weight(gc, WeightSpec(piece="vert"))
        spec = (WeightSpec(piece="horiz") if alpha == 0.0 else
                WeightSpec(piece="horiz", kind="power", exponent=alpha,
                           anchor="J0"))
        wc = attach_weight(wc, spec)
        be = capacity_bounds(wc, "J0", 0.5)
        assert be.verdict == "finite", (alpha, be.verdict)
        assert be.per_piece["horiz"]["n_minus_k"] == 1


def test_bounds_brackets_fem_capacity():
    wc = spine_complex(24, 1.0)
    be = capacity_bounds(wc, "J0", 0.5)
    s = assemble(wc)
    gm = wc.complex.intersection("J0")
    from gluedheat.geometry import distances_from
    d = distances_from(wc.complex, np.asarray(gm.dofs))
    Om = np.nonzero(d <= 0.5 * (1 + 1e-12))[0]
    fem = relative_capacity(s, np.asarray(gm.dofs), Om).value
    assert be.lower <= fem * (1 + 1e-9)
    assert fem <= be.upper * (1 + 1e-9)


def test_equivalence_ladder_both_arms():
    rep_w = capacity_equivalence_check(
        lambda m: spine_complex(m, 1.0), "J0", [16, 32, 64])
    assert rep_w.both_positive and not rep_w.mismatch
    assert rep_w.side_status["disk"] == "positive"
    assert rep_w.side_status["spine"] == "positive"

    rep_u = capacity_equivalence_check(
        lambda m: spine_complex(m, 0.0), "J0", [16, 32, 64])
    assert rep_u.mismatch
    assert rep_u.side_status["disk"] == "vanishing"
    assert rep_u.side_status["spine"] == "positive"


def test_restricted_capacity_positive_on_side():
    wc = spine_complex(16, 1.0)
    res = restricted_capacity(wc, "J0", 0, 0.5)  # piece 0 is the disk
    assert res.value > 0
    with pytest.raises(InvalidParameterError):
        restricted_capacity(wc, "J0", 5, 0.5)
