"""Acceptance criteria 1-9. Each test prints one PASS/FAIL line.

Criterion 2 runs the 1024x512 finite-element oracle over twelve modes
(about five minutes); criterion 9 reuses those values.
"""

import math
import time

import numpy as np
import pytest

from tptl.geometry import build_constrained_perturbation, hadamard_path, l1_forms, l2_forms, mapped_measures
from tptl.harmonics import Mode, eval_harmonic, harmonic_field, mode_dimension, surface_grid
from tptl.oracle import fd_shape_derivatives, get_oracle, mode_second_derivatives, path_map, richardson_derivatives
from tptl.radial import PhaseConfig, radial_energy, radial_fd_oracle, radial_state
from tptl.serrin import continue_from_outer, d_derivative, mode_linearization
from tptl.spectrum import (
    ModeAmplitudes,
    classify_configuration,
    discrepancy_report,
    first_derivative_form,
    monotonicity_scan,
    quadratic_form,
    resonance_analysis,
    second_derivative_mode_integral,
)

R_GRID = (0.2, 0.5, 0.8)
SIGMAS = (0.5, 1.0, 2.0)

# criterion 2
ORACLE_GRID = (1024, 512)
ORACLE_SIGMAS = (0.5, 2.0)
ORACLE_KS = range(1, 7)
ORACLE_TOL = 0.02
ORACLE_BUDGET = 600.0


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def oracle_sweep():
    """FD second derivatives per mode and path at the acceptance resolution."""
    t0 = time.perf_counter()
    rows = {}
    for s in ORACLE_SIGMAS:
        cfg = PhaseConfig(2, 0.5, s)
        for k in ORACLE_KS:
            rows[(s, k)] = mode_second_derivatives(cfg, k, *ORACLE_GRID)
    return rows, time.perf_counter() - t0


# ---------------------------------------------------------------------------


def test_criterion_1_criticality(capsys):
    worst_l1 = 0.0
    for N in (2, 3):
        grid = surface_grid(N, 64 if N == 2 else 40)
        for R in R_GRID:
            for s in SIGMAS:
                cfg = PhaseConfig(N, R, s)
                for k in range(1, 9):
                    for i in range(1, mode_dimension(N, k) + 1):
                        y = eval_harmonic(N, Mode(k, i), grid.points)
                        worst_l1 = max(worst_l1, abs(first_derivative_form(cfg, y, y, grid)))
    worst_ratio = 0.0
    for R in R_GRID:
        for s in SIGMAS:
            cfg = PhaseConfig(2, R, s)
            orc = get_oracle(cfg, 64, 64)
            for k in range(1, 9):
                # different degrees and phases on the two spheres
                path = build_constrained_perturbation({(k, 1): 1.0}, {(k + 1, 2): 0.7}, cfg)
                fd = richardson_derivatives(lambda t: orc.energy(path_map(path, t) if t else None), (1e-2, 5e-3))
                worst_ratio = max(worst_ratio, abs(fd["d1"]) / abs(fd["e0"]))
    ok = worst_l1 <= 1e-12 and worst_ratio <= 1e-5
    report(capsys, 1, ok, f"max |l1| = {worst_l1:.2e} (<= 1e-12), max |e'(0)|/|e(0)| = {worst_ratio:.2e} (<= 1e-5)")


def test_criterion_2_spectrum_cross_validation(capsys, oracle_sweep):
    rows, elapsed = oracle_sweep
    worst = (0.0, None)
    for (s, k), fd in rows.items():
        r = second_derivative_mode_integral(PhaseConfig(2, 0.5, s), k)
        ref = {"inner": r.e_minus, "outer": r.e_plus, "mixed": r.e_minus + r.e_plus + r.e_res}
        scale = max(max(abs(v) for v in ref.values()), max(abs(v) for v in fd["paths"].values()))
        for path, v in ref.items():
            dev = abs(fd["paths"][path] - v) / max(abs(v), scale)
            if dev > worst[0]:
                worst = (dev, (s, k, path))
    ok = worst[0] <= ORACLE_TOL and elapsed <= ORACLE_BUDGET
    report(
        capsys,
        2,
        ok,
        f"max relative deviation {worst[0]:.2%} at sigma_c, k, path = {worst[1]} (<= 2%), runtime {elapsed:.0f} s (<= 600 s)",
    )


def test_criterion_3_classification(capsys):
    bad = []
    for N in (2, 3):
        for R in R_GRID:
            for s, want in ((2.0, "LocalMax"), (0.5, "Saddle"), (1.0, "OnePhase")):
                res = classify_configuration(PhaseConfig(N, R, s))
                if res["verdict"] != want:
                    bad.append((N, R, s, res["verdict"]))
                if want == "Saddle":
                    signs = {w["sign"] for w in res["witnesses"]}
                    if signs != {"positive", "negative"}:
                        bad.append((N, R, s, "missing witnesses"))
    report(capsys, 3, not bad, "LocalMax / Saddle / OnePhase across the R grid" if not bad else f"mismatches {bad}")


def test_criterion_4_resonance(capsys):
    worst = {"delta1": 0.0, "translation": 0.0, "res": 0.0, "sym": 0.0}
    nonneg = []
    for N in (2, 3):
        for R in R_GRID:
            for s in (0.5, 1.0, 1.5, 2.0, 5.0):
                cfg = PhaseConfig(N, R, s)
                r1 = second_derivative_mode_integral(cfg, 1)
                worst["res"] = max(worst["res"], abs(r1.e_res + 2 * r1.e_minus))
                worst["sym"] = max(worst["sym"], abs(r1.e_minus - r1.e_plus))
                amps = ModeAmplitudes({(1, 1): 1.0}, {(1, 1): 1.0})
                worst["translation"] = max(worst["translation"], abs(quadratic_form(cfg, amps)))
                if s > 1:
                    worst["delta1"] = max(worst["delta1"], abs(resonance_analysis(cfg, 1)["discriminant"]))
                    nonneg += [(N, R, s, k) for k in range(2, 33) if not resonance_analysis(cfg, k)["discriminant"] < 0]
    ok = all(v <= 1e-10 for v in worst.values()) and not nonneg
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f" (<= 1e-10), Delta(k>=2) >= 0 at {len(nonneg)} points"
    report(capsys, 4, ok, detail)


def test_criterion_5_monotonicity(capsys):
    bad = []
    for N in (2, 3):
        for R in R_GRID:
            for s in (0.25, 0.5, 1.0, 2.0, 4.0):
                cfg = PhaseConfig(N, R, s)
                scan = monotonicity_scan(cfg, range(1, 33))
                if not scan["plus_decreasing"]:
                    bad.append((N, R, s, "plus not decreasing"))
                if s == 1 and not scan["minus_zero"]:
                    bad.append((N, R, s, "minus not zero"))
                if s != 1 and not scan["minus_decreasing"]:
                    bad.append((N, R, s, "minus not decreasing"))
                long = monotonicity_scan(cfg, range(1, 65))
                if long["plus_negative_from"] is None or (s != 1 and long["minus_negative_from"] is None):
                    bad.append((N, R, s, "not eventually negative"))
    report(capsys, 5, not bad, "decreasing on [1, 32], negative by k = 64" if not bad else f"violations {bad}")


def test_criterion_6_radial_oracle(capsys):
    worst_err, orders = 0.0, []
    for N in (2, 3):
        for R in R_GRID:
            for s in SIGMAS:
                cfg = PhaseConfig(N, R, s)
                u = radial_state(cfg)
                errs = []
                for n in (1024, 2048, 4096):
                    fd = radial_fd_oracle(cfg, n)
                    errs.append(float(np.max(np.abs(fd.values - u(fd.centers)))))
                worst_err = max(worst_err, errs[-1])
                if errs[-1] > 1e-13:  # skip configurations solved to round-off
                    orders.append(math.log2(errs[-2] / errs[-1]))
    disk = PhaseConfig(2, 0.5, 1.0)
    e_an = abs(radial_energy(disk) - math.pi / 8)
    e_fd = abs(radial_fd_oracle(disk, 4096).integral() - math.pi / 8)
    ok = worst_err <= 1e-6 and all(abs(p - 2) <= 0.2 for p in orders) and e_an <= 1e-6 and e_fd <= 1e-6
    report(
        capsys,
        6,
        ok,
        f"sup error {worst_err:.2e} at n=4096 (<= 1e-6), orders in [{min(orders):.3f}, {max(orders):.3f}] (2 +- 10%), "
        f"energy error {e_an:.1e} closed form / {e_fd:.1e} FD (<= 1e-6)",
    )


def test_criterion_7_serrin(capsys):
    cfg = PhaseConfig(2, 0.5, 2.0, beta=1.0, gamma=1.0)
    lines, ok = [], True
    for k in (2, 3, 4):
        a = continue_from_outer(cfg, {(k, 1): 1e-3})
        b = continue_from_outer(cfg, {(k, 1): 2e-3})
        # amplitude of f in the driven mode; the full norm also picks up the
        # second-order harmonics 2k, 3k and is reported alongside
        ratio = b.f[(k, 1)] / a.f[(k, 1)]
        full = math.sqrt(sum(v * v for v in b.f.values()) / sum(v * v for v in a.f.values()))
        ok &= a.iterations <= 8 and a.residual <= 1e-8 and 1.9 <= ratio <= 2.1
        lines.append(f"k={k}: {a.iterations} it, res {a.residual:.1e}, ratio {ratio:.4f} (full norm {full:.4f})")
    lam = [mode_linearization(cfg, k) for k in range(1, 17)]
    lam1 = mode_linearization(cfg.replace(sigma_c=1.0), 3)
    d0, d1 = d_derivative(cfg, {(2, 1): 1.0})
    ok &= min(abs(v) for v in lam) > 1e-10 and lam1 == 0.0 and abs(d1) <= 1e-6 * d0
    lines.append(f"min |lambda_k| {min(abs(v) for v in lam):.1e}, lambda at sigma_c=1 {lam1}, |d'(0)|/d {abs(d1) / d0:.1e}")
    report(capsys, 7, ok, "; ".join(lines))


def _rel(a, b):
    a, b = np.atleast_1d(a), np.atleast_1d(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def test_criterion_8_geometry_forms(capsys):
    worst1 = worst2 = worst_path = 0.0
    h = 1e-3
    for N in (2, 3):
        cfg = PhaseConfig(N, 0.5, 2.0)
        xi = {(0, 1): 0.3, (1, 1): 0.5, (2, 1): 0.4, (3, 1): 1.0}
        grid = surface_grid(N, 256 if N == 2 else 48)
        f = harmonic_field(N, xi)
        vals, grads = f(grid.points), f.grad(grid.points)
        for which, rad, path in (
            ("outer", 1.0, hadamard_path({}, xi, cfg)),
            ("inner", cfg.R, hadamard_path(xi, {}, cfg)),
        ):
            l1 = l1_forms(N, rad, vals, grid)
            l2 = l2_forms(N, rad, vals, grid, grads)
            m = {s: mapped_measures(path, s * h, which) for s in (-1, 0, 1)}
            for name in ("Vol", "Per", "Bar"):
                d1 = (m[1][name] - m[-1][name]) / (2 * h)
                d2 = (m[1][name] - 2 * m[0][name] + m[-1][name]) / h**2
                worst1 = max(worst1, _rel(d1, l1[name]))
                worst2 = max(worst2, _rel(d2, l2[name]))
        # constructed constrained paths
        vol_in = math.pi * cfg.R**2 if N == 2 else 4 / 3 * math.pi * cfg.R**3
        vol_out = math.pi if N == 2 else 4 / 3 * math.pi
        for k in (2, 3, 5):
            path = build_constrained_perturbation({(k, 1): 1.0}, {(k + 1, 1): 1.0}, cfg)
            for t in (0.01, 0.05, 0.1):
                mi, mo = mapped_measures(path, t, "inner"), mapped_measures(path, t, "outer")
                worst_path = max(worst_path, abs(mi["Vol"] - vol_in), abs(mo["Vol"] - vol_out), float(np.max(np.abs(mo["Bar"]))))
    ok = worst1 <= 5e-3 and worst2 <= 1e-2 and worst_path <= 1e-9
    report(
        capsys,
        8,
        ok,
        f"first variation {worst1:.1e} (<= 0.5%), second variation {worst2:.1e} (<= 1%), constrained path drift {worst_path:.1e} (<= 1e-9)",
    )


def test_criterion_9_discrepancy_report(capsys, oracle_sweep):
    rows, _ = oracle_sweep
    oracle = {}
    for (s, k), fd in rows.items():
        for part in ("e_minus", "e_plus", "e_res"):
            oracle[(2, 0.5, s, k, part)] = fd[part]
    # outer-only runs at sigma_c = 1 for the one-phase display
    one = PhaseConfig(2, 0.5, 1.0)
    for k in (2, 3):
        path = build_constrained_perturbation({}, {(k, 1): 1.0}, one)
        oracle[(2, 0.5, 1.0, k, "e_plus")] = fd_shape_derivatives(one, path, (1e-2, 5e-3), *ORACLE_GRID)["d2"]
    cfgs = [PhaseConfig(2, 0.5, s) for s in (0.5, 1.0, 2.0)] + [PhaseConfig(3, 0.5, s) for s in (0.5, 1.0, 2.0)]
    rep = discrepancy_report(cfgs, k_max=6, oracle=oracle, rel_tol=ORACLE_TOL)
    verdicts = {name: c["verdict"] for name, c in rep["claims"].items()}
    flagged = ("one_phase_outer_positive", "unit_mode_value")
    emitted = all(verdicts[n] in ("confirmed", "refuted", "oracle_disagrees_with_reference") for n in flagged)
    worst = max(e["rel_dev"] for e in rep["internal"])
    report(capsys, 9, emitted and rep["internal_ok"], f"verdicts {verdicts}; internal max deviation {worst:.2%} (<= 2%)")
