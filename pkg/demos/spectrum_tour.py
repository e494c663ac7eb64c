# A walk through the per-mode second derivative of the two-phase torsional
# energy at concentric balls: state, spectrum, classification.

import math

from tptl.radial import PhaseConfig, radial_energy, solve_radial_torsion
from tptl.spectrum import (
    classify_configuration,
    resonance_analysis,
    second_derivative_mode,
    second_derivative_mode_integral,
    sign_class,
    spectrum_table,
)

cfg = PhaseConfig(N=2, R=0.5, sigma_c=2.0)

# The radial state is piecewise quadratic; for sigma_c = 1 the energy is pi/8.
u = solve_radial_torsion(cfg)
print("u(0) =", float(u(0.0)), " u(R) =", float(u(cfg.R)))
print("E(sigma_c=1) - pi/8 =", radial_energy(cfg.replace(sigma_c=1.0)) - math.pi / 8)

# Each degree k contributes a 2x2 form in the interface / outer amplitudes.
print("\n k    e_minus      e_plus       e_res        class")
for r in spectrum_table(cfg, 8):
    print(f"{r.k:2d} {r.e_minus:12.6f} {r.e_plus:12.6f} {r.e_res:12.6f}   {sign_class(r)}")

# k = 1 is a rigid translation of both spheres: the mixed term cancels the rest.
r1 = second_derivative_mode_integral(cfg, 1)
print("\ntranslation:", r1.e_minus + r1.e_plus + r1.e_res)

# The discriminant of the 2x2 form vanishes only at k = 1 when sigma_c > 1.
for k in (1, 2, 3):
    print("k =", k, "discriminant", resonance_analysis(cfg, k)["discriminant"])

# Verdicts across conductivities.
for s in (0.5, 1.0, 2.0):
    res = classify_configuration(cfg.replace(sigma_c=s))
    print(f"sigma_c = {s}: {res['verdict']}")
    for w in res["witnesses"]:
        print("   witness k =", w["k"], "direction", w["direction"], "value", round(w["value"], 6))

# Alternative closed forms vs the boundary-integral route: the residual term
# agrees, the diagonal ones carry a curvature offset.
rc, ri = second_derivative_mode(cfg, 3), second_derivative_mode_integral(cfg, 3)
print("\nk=3 closed - integral:", rc.e_minus - ri.e_minus, rc.e_plus - ri.e_plus, rc.e_res - ri.e_res)
