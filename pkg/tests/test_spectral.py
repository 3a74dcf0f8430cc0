"""Eigenpairs, kernel dimension, ladder verdicts, decay fits."""

import numpy as np
import pytest

from gluedheat.errors import InvalidParameterError
from gluedheat.spectral import decay_fit, eigen, ergodicity_verdict, support_spread

from conftest import interval_system, spine_system


def test_interval_spectrum_against_pi_squared(interval256):
    gc, s = interval256
    rep = eigen(s, k=5)
    assert rep.eigenvalues[0] < 1e-9
    assert abs(rep.gap / np.pi**2 - 1) < 0.005
    assert rep.kernel_dim == 1
    # Neumann interval: lambda_j = (j pi)^2
    for j in (2, 3):
        assert abs(rep.eigenvalues[j] / (j * np.pi) ** 2 - 1) < 0.01


def test_disjoint_kernel_is_component_indicators(disjoint_pair):
    gc, s = disjoint_pair
    rep = eigen(s, k=4)
    assert rep.kernel_dim == 2
    lab = gc.component_labels
    for j in range(2):
        v = rep.eigenvectors[:, j]
        for c in range(2):
            vc = v[lab == c]
            # constant on each component
            assert np.ptp(vc) < 1e-7 * max(np.abs(v).max(), 1e-300)


def test_eigenvalues_sorted_orthonormal(interval256):
    gc, s = interval256
    rep = eigen(s, k=6)
    ev = rep.eigenvalues
    assert all(b >= a - 1e-12 for a, b in zip(ev, ev[1:]))
    G = rep.eigenvectors.T @ (s.M[:, None] * rep.eigenvectors)
    assert np.allclose(G, np.eye(6), atol=1e-8)


def test_ladder_verdict_weighted_vs_unweighted():
    """The dichotomy on the disk-with-spine: the junction-centred weight
    keeps the gap open, the flat weight closes it like 1/ln(refinement)."""
    curve_w = ergodicity_verdict(lambda m: spine_system(m, 1.0), [16, 32, 64])
    assert curve_w.verdict == "ergodic"
    assert curve_w.extrapolated_ratio > 0.5
    assert abs(curve_w.rel_growth) < 0.1

    curve_u = ergodicity_verdict(lambda m: spine_system(m, 0.0), [16, 32, 64])
    assert curve_u.verdict == "degenerate"
    assert curve_u.extrapolated_ratio < 0.2
    assert curve_u.fit_r2 > 0.9
    # raw gaps really do decrease
    assert all(b < a for a, b in zip(curve_u.gaps, curve_u.gaps[1:]))


def test_ladder_verdict_single_piece_trivially_ergodic():
    curve = ergodicity_verdict(
        lambda m: interval_system(max(8, 4 * m))[1], [4, 8, 16])
    assert curve.verdict == "ergodic"


def test_ladder_rejects_short_ladders():
    with pytest.raises(InvalidParameterError):
        ergodicity_verdict(lambda m: interval_system(m)[1], [8, 16])


def test_decay_fit_matches_gap(interval256):
    gc, s = interval256
    rep = eigen(s, k=3)
    fit = decay_fit(s, rep.eigenvectors[:, 1], horizon=0.5, tau=1e-3)
    assert abs(fit.rate / rep.gap - 1) < 0.05
    # implicit Euler underestimates: rate >= log(1 + tau lam)/tau
    assert fit.rate >= np.log(1 + 1e-3 * rep.gap) / 1e-3 - 1e-3
    fit2 = decay_fit(s, rep.eigenvectors[:, 2], horizon=0.5, tau=1e-3)
    assert fit2.rate > rep.gap * 1.5


def test_decay_fit_rejects_constant(interval256):
    gc, s = interval256
    with pytest.raises(Exception):
        decay_fit(s, np.ones(s.n_dofs), 1.0)


def test_support_spread_confined_to_component(disjoint_pair):
    gc, s = disjoint_pair
    lab = gc.component_labels
    sp_small = support_spread(s, np.array([0]), 0.01)
    sp_large = support_spread(s, np.array([0]), 0.1)
    assert set(sp_small) <= set(sp_large)
    assert set(sp_large) == set(np.nonzero(lab == lab[0])[0])


def test_support_spread_fills_connected():
    gc, s = interval_system(64)
    assert len(support_spread(s, np.array([0]), 0.05)) == s.n_dofs
