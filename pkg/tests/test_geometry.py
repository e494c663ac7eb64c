import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tptl.geometry import (
    StarDomain,
    build_constrained_perturbation,
    constraint_residuals,
    hadamard_path,
    l1_forms,
    l2_forms,
    mapped_measures,
    measures,
)
from tptl.harmonics import harmonic_field, surface_grid
from tptl.radial import PhaseConfig


@pytest.mark.parametrize("N", [2, 3])
def test_ball_measures(N):
    m = measures(StarDomain(N, 1.0))
    vol = math.pi if N == 2 else 4 * math.pi / 3
    per = 2 * math.pi if N == 2 else 4 * math.pi
    assert m["Vol"] == pytest.approx(vol, rel=1e-13)
    assert m["Per"] == pytest.approx(per, rel=1e-13)
    assert np.allclose(m["Bar"], 0, atol=1e-14)


def test_star_domain_quadrature():
    from scipy import integrate

    rho = lambda t: 1 + 0.1 * math.cos(t)
    m = measures(StarDomain(2, 1.0, lambda p: 0.1 * p[:, 0]))
    assert m["Vol"] == pytest.approx(integrate.quad(lambda t: rho(t) ** 2 / 2, 0, 2 * math.pi)[0], rel=1e-13)
    per = integrate.quad(lambda t: math.hypot(rho(t), 0.1 * math.sin(t)), 0, 2 * math.pi, epsabs=1e-14)[0]
    assert m["Per"] == pytest.approx(per, rel=1e-12)


def test_rejects_constant_component():
    with pytest.raises(ValueError):
        build_constrained_perturbation({(0, 1): 1.0}, {}, PhaseConfig())


def test_rejects_outer_translation_by_default():
    with pytest.raises(ValueError):
        build_constrained_perturbation({}, {(1, 1): 1.0}, PhaseConfig())
    build_constrained_perturbation({}, {(1, 1): 1.0}, PhaseConfig(), preserve_barycenter=False)


modes2 = st.sampled_from([(k, i) for k in range(2, 7) for i in (1, 2)])


@settings(max_examples=10, deadline=None)
@given(modes2, modes2, st.floats(0.01, 0.1))
def test_constrained_paths_preserve_volume_and_barycenter(mi, mo, t):
    cfg = PhaseConfig(2, 0.5, 2.0)
    path = build_constrained_perturbation({mi: 1.0}, {mo: 0.8}, cfg)
    inner = mapped_measures(path, t, "inner")
    outer = mapped_measures(path, t, "outer")
    assert inner["Vol"] == pytest.approx(math.pi * 0.25, abs=1e-9)
    assert outer["Vol"] == pytest.approx(math.pi, abs=1e-9)
    assert np.max(np.abs(outer["Bar"])) < 1e-9


def test_constrained_path_three_dimensional():
    cfg = PhaseConfig(3, 0.4, 2.0)
    path = build_constrained_perturbation({(2, 1): 1.0}, {(3, 2): 1.0}, cfg)
    outer = mapped_measures(path, 0.05, "outer")
    assert outer["Vol"] == pytest.approx(4 * math.pi / 3, abs=1e-9)
    assert np.max(np.abs(outer["Bar"])) < 1e-9


@pytest.mark.parametrize("N,key", [(2, (3, 1)), (3, (2, 2))])
def test_first_and_second_variations(N, key):
    cfg = PhaseConfig(N, 0.5, 2.0)
    xi = {key: 1.0, (0, 1): 0.3}
    path = hadamard_path({}, xi, cfg)
    grid = surface_grid(N, 128 if N == 2 else 32)
    f = harmonic_field(N, xi)
    l1 = l1_forms(N, 1.0, f(grid.points), grid)
    l2 = l2_forms(N, 1.0, f(grid.points), grid, f.grad(grid.points))
    h = 1e-3
    m = {s: mapped_measures(path, s * h) for s in (-1, 0, 1)}
    for name in ("Vol", "Per"):
        d1 = (m[1][name] - m[-1][name]) / (2 * h)
        d2 = (m[1][name] - 2 * m[0][name] + m[-1][name]) / h**2
        assert d1 == pytest.approx(l1[name], rel=1e-5)
        assert d2 == pytest.approx(l2[name], rel=1e-4)


def test_constraint_residuals_zero_for_admissible_fields():
    res = constraint_residuals({(2, 1): 1.0}, {(4, 2): 1.0}, PhaseConfig(2, 0.5, 2.0))
    assert abs(res["vol1_inner"]) < 1e-14
    assert abs(res["vol1_outer"]) < 1e-14
    assert np.max(np.abs(res["bar1_outer"])) < 1e-14
