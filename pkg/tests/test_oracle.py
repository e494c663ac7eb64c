import math

import numpy as np
import pytest

from tptl.geometry import build_constrained_perturbation, hadamard_path
from tptl.oracle import (
    RadialMapOracle,
    assemble_pullback,
    get_oracle,
    linear_map,
    mode_second_derivatives,
    path_map,
    pcg,
    richardson_derivatives,
)
from tptl.radial import PhaseConfig, SolverError, radial_energy, radial_state
from tptl.spectrum import first_derivative_form, second_derivative_mode_integral


def test_pullback_of_dilation():
    c = assemble_pullback(linear_map(0.1 * np.eye(2)), np.array([[0.3, 0.1]]), sigma=2.0)
    assert c.J[0] == pytest.approx(1.21)
    assert np.allclose(c.A[0], 2.0 * np.eye(2))


def test_pullback_rejects_folded_map():
    with pytest.raises(ValueError):
        assemble_pullback(linear_map(np.diag([-2.0, 0.0])), np.zeros((1, 2)))


def test_pcg_solves_spd_system():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((30, 30))
    A = M @ M.T + 30 * np.eye(30)
    b = rng.standard_normal(30)
    x, it, res = pcg(lambda v: A @ v, b, lambda r: r / np.diag(A), tol=1e-12)
    assert np.allclose(A @ x, b, atol=1e-9)


def test_pcg_reports_failure():
    A = np.diag(np.logspace(0, 8, 50))
    with pytest.raises(SolverError):
        pcg(lambda v: A @ v, np.ones(50), lambda r: r, tol=1e-14, maxiter=5, restarts=0)


@pytest.mark.parametrize("sigma", [0.5, 2.0])
def test_reference_state_converges(sigma):
    cfg = PhaseConfig(2, 0.5, sigma)
    u = radial_state(cfg)
    errs = []
    for n in (64, 128):
        f = get_oracle(cfg, n, n)
        sol = f.solve()
        assert sol.info["iterations"] <= 2  # exact preconditioner at phi = 0
        rings = sol.rings()
        errs.append(np.max(np.abs(rings[1:] - u(f.grid.edges[1:])[:, None])))
    assert errs[1] < errs[0] / 3


def test_disk_energy():
    e = get_oracle(PhaseConfig(2, 0.5, 1.0), 256, 128).energy()
    assert e == pytest.approx(math.pi / 8, rel=1e-4)


def test_energy_invariant_under_rotation_map():
    cfg = PhaseConfig(2, 0.5, 2.0)
    f = get_oracle(cfg, 64, 64)
    c, s = math.cos(0.3), math.sin(0.3)
    rot = linear_map(np.array([[c - 1, -s], [s, c - 1]]))
    assert f.energy(rot) == pytest.approx(f.energy(), rel=1e-12)


def test_analytic_derivatives_match_fd():
    cfg = PhaseConfig(2, 0.5, 2.0)
    f = get_oracle(cfg, 64, 64)
    path = hadamard_path({(2, 1): 1.0}, {(3, 1): 1.0}, cfg)
    zeta = path_map(path, 1.0)
    out = f.analytic_phi_derivatives(None, zeta, zeta)
    fd = richardson_derivatives(lambda t: f.energy(path_map(path, t) if t else None), (1e-2, 5e-3))
    assert out["d1"] == pytest.approx(fd["d1"], abs=1e-7 * abs(fd["e0"]))
    assert out["d2"] == pytest.approx(fd["d2"], rel=1e-5)


def test_inflation_first_derivative():
    cfg = PhaseConfig(2, 0.5, 2.0)
    path = hadamard_path({}, {(0, 1): 1.0}, cfg)
    f = get_oracle(cfg, 128, 64)
    d1 = richardson_derivatives(lambda t: f.energy(path_map(path, t) if t else None), (1e-2, 5e-3))["d1"]
    from tptl.harmonics import surface_grid

    grid = surface_grid(2, 16)
    want = first_derivative_form(cfg, np.zeros(16), np.full(16, 1 / math.sqrt(2 * math.pi)), grid)
    assert d1 == pytest.approx(want, rel=2e-3)


@pytest.mark.parametrize("N", [2, 3])
def test_radial_map_oracle(N):
    cfg = PhaseConfig(N, 0.4, 3.0)
    orc = RadialMapOracle(cfg, 2048)
    assert orc.energy() == pytest.approx(radial_energy(cfg), rel=1e-5)
    # uniform dilation by (1 + t) scales the energy by (1 + t)^(N + 2)
    t = 0.05
    e = orc.energy(lambda r: ((1 + t) * r, np.full_like(r, 1 + t)))
    assert e == pytest.approx((1 + t) ** (N + 2) * orc.energy(), rel=1e-10)


def test_richardson_on_polynomial():
    out = richardson_derivatives(lambda t: 1 + 2 * t + 3 * t**2 + t**5, (1e-1, 5e-2))
    assert out["d1"] == pytest.approx(2, abs=1e-10)
    assert out["d2"] == pytest.approx(6, abs=1e-9)


def test_richardson_step_validation():
    with pytest.raises(ValueError):
        richardson_derivatives(lambda t: t, (1e-2, 3e-3))


def test_first_derivative_vanishes_on_constrained_path():
    cfg = PhaseConfig(2, 0.5, 0.5)
    path = build_constrained_perturbation({(2, 1): 1.0}, {(3, 2): 1.0}, cfg)
    f = get_oracle(cfg, 64, 64)
    out = richardson_derivatives(lambda t: f.energy(path_map(path, t) if t else None), (1e-2, 5e-3))
    assert abs(out["d1"]) <= 1e-5 * out["e0"]


def test_mode_second_derivatives_coarse():
    cfg = PhaseConfig(2, 0.5, 2.0)
    fd = mode_second_derivatives(cfg, 2, 256, 128)
    ref = second_derivative_mode_integral(cfg, 2)
    for part in ("e_minus", "e_plus", "e_res"):
        assert fd[part] == pytest.approx(getattr(ref, part), rel=0.05)
