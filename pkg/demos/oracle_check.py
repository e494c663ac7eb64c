# Cross-check the analytic spectrum against the finite-element oracle:
# energy along constrained perturbation paths, differentiated twice.

import time

from tptl.geometry import build_constrained_perturbation, mapped_measures
from tptl.oracle import get_oracle, mode_second_derivatives, path_map
from tptl.radial import PhaseConfig
from tptl.spectrum import second_derivative_mode_integral

cfg = PhaseConfig(2, 0.5, 2.0)

# A constrained path keeps both volumes and the outer barycenter fixed.
path = build_constrained_perturbation({(3, 1): 1.0}, {(2, 2): 0.5}, cfg)
for t in (0.0, 0.05, 0.1):
    m = mapped_measures(path, t, "outer")
    print(f"t={t:4.2f}  Vol {m['Vol']:.15f}  Bar {m['Bar']}")

# The energy is flat to first order along it.
orc = get_oracle(cfg, 128, 64)
for t in (-0.01, 0.0, 0.01):
    print("E(t =", t, ") =", orc.energy(path_map(path, t) if t else None))

# Second derivatives per mode. Coarse grid here; the error is second order in
# the mesh size, 1024 x 512 brings it well under 1%.
for n_r, n_theta in ((128, 64), (256, 128)):
    t0 = time.perf_counter()
    fd = mode_second_derivatives(cfg, 3, n_r, n_theta)
    ref = second_derivative_mode_integral(cfg, 3)
    print(f"\n{n_r}x{n_theta} ({time.perf_counter() - t0:.1f} s)")
    for part in ("e_minus", "e_plus", "e_res"):
        print(f"  {part:8s} oracle {fd[part]: .6f}  integral {getattr(ref, part): .6f}")
