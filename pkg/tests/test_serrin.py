import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tptl.geometry import StarDomain, measures
from tptl.radial import PhaseConfig, SolverError, mode_coefficients
from tptl.serrin import (
    BoundaryPair,
    continue_from_outer,
    d_derivative,
    mode_linearization,
    normalize_volume,
    psi_residual,
    radial_overdetermined_constant,
    volume_corrected_continuation,
    volume_preserving_from_zero_mean,
    zero_mean_from_volume_preserving,
)

SER = PhaseConfig(2, 0.5, 2.0, beta=1.0, gamma=1.0)


def test_pair_rejects_mean():
    with pytest.raises(ValueError):
        BoundaryPair(2, {(0, 1): 0.1}, {})
    with pytest.raises(ValueError):
        BoundaryPair(2, {(1, 3): 0.1}, {})


def test_linearization_vanishes_at_one_phase():
    assert mode_linearization(SER.replace(sigma_c=1.0), 3) == 0.0


@pytest.mark.parametrize("sigma", [0.5, 3.0])
@pytest.mark.parametrize("k", [1, 2, 5])
def test_linearization_torsion_limit(sigma, k):
    # with beta = 0 the interface response is 2k times a closed-form coefficient
    cfg = PhaseConfig(2, 0.3, sigma)
    assert mode_linearization(cfg, k) == pytest.approx(2 * k * mode_coefficients(cfg, k).D_minus, rel=1e-9)


def test_psi_vanishes_at_concentric_balls():
    psi = psi_residual(SER, BoundaryPair(2, {}, {}))
    assert psi.norm() < 1e-10
    assert psi.d == pytest.approx(radial_overdetermined_constant(SER), rel=1e-5)


def test_psi_mean_is_zero():
    psi = psi_residual(SER, BoundaryPair(2, {(2, 1): 2e-3}, {(3, 2): 1e-3}))
    assert abs(psi.mean()) < 1e-10
    assert psi.norm() > 1e-5


def test_psi_linear_response_is_diagonal():
    a = 1e-4
    psi = psi_residual(SER, BoundaryPair(2, {(3, 1): a}, {}))
    c = psi.coefficients(8)
    assert c[(3, 1)] / a == pytest.approx(mode_linearization(SER, 3), rel=5e-3)
    off = max(abs(v) for key, v in c.items() if key != (3, 1))
    assert off < 1e-2 * abs(c[(3, 1)])


def test_continuation_converges():
    res = continue_from_outer(SER, {(2, 1): 1e-3}, tol=1e-8)
    assert res.residual <= 1e-8
    assert res.iterations <= 8
    assert np.max(np.abs(res.info["psi"].neumann)) < 1e-6


def test_continuation_rejects_one_phase():
    with pytest.raises(ValueError):
        continue_from_outer(SER.replace(sigma_c=1.0), {(2, 1): 1e-3})


def test_continuation_rejects_unresolved_outer_field():
    with pytest.raises(ValueError):
        continue_from_outer(SER, {(20, 1): 1e-3}, k_max=16)


def test_continuation_reports_divergence():
    with pytest.raises(SolverError):
        continue_from_outer(SER, {(4, 1): 5e-2}, max_iter=3)


def test_d_is_stationary_along_inner_paths():
    d0, d1 = d_derivative(SER, {(2, 1): 1.0})
    assert abs(d1) <= 1e-6 * d0


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.05, 0.05), st.floats(-0.05, 0.05))
def test_volume_map_round_trip(a, b):
    g = {(2, 1): a, (3, 2): b}
    gt = volume_preserving_from_zero_mean(2, g)
    vol = measures(StarDomain(2, 1.0, gt))["Vol"]
    assert vol == pytest.approx(math.pi, rel=1e-12)
    back, t = zero_mean_from_volume_preserving(2, gt)
    for key, v in g.items():
        assert back.get(key, 0.0) == pytest.approx(v, abs=1e-13)
    assert abs(back.get((0, 1), 0.0)) < 1e-12


def test_normalize_volume_inner_radius():
    f = normalize_volume(2, 0.5, {(2, 1): 0.02})
    assert measures(StarDomain(2, 0.5, f))["Vol"] == pytest.approx(math.pi / 4, rel=1e-12)


def test_volume_corrected_continuation():
    gt = volume_preserving_from_zero_mean(2, {(3, 1): 1e-3})
    res = volume_corrected_continuation(SER, gt)
    assert res.residual <= 1e-8
    assert measures(StarDomain(2, 0.5, res.f))["Vol"] == pytest.approx(math.pi / 4, rel=1e-12)


def test_volume_corrected_rejects_non_preserving():
    with pytest.raises(ValueError):
        volume_corrected_continuation(SER, {(2, 1): 1e-3, (0, 1): 0.1})


def test_single_mode_response_stays_in_mode():
    psi = psi_residual(SER, BoundaryPair(2, {(4, 2): 1e-3}, {}))
    c = psi.coefficients(16)
    total = math.sqrt(sum(v * v for v in c.values()))
    assert abs(c[(4, 2)]) >= 0.99 * total


def test_newton_tail_is_superlinear():
    # r_{n+1} <= C r_n^2 once below 1e-4; quasi-Newton gives C of order 1e6
    worst = 0.0
    for k in (2, 3, 4):
        h = continue_from_outer(SER, {(k, 1): 1e-3}).history
        for a, b in zip(h, h[1:]):
            if a < 1e-4:
                worst = max(worst, b / a**2)
    assert worst < 1e7
