# Continuation of the overdetermined two-phase problem: given a small
# outer boundary perturbation g, find the interface perturbation f so that
# the outer normal derivative of the state is constant.

from tptl.radial import PhaseConfig
from tptl.serrin import (
    continue_from_outer,
    mode_linearization,
    psi_residual,
    BoundaryPair,
    volume_corrected_continuation,
    volume_preserving_from_zero_mean,
)

cfg = PhaseConfig(2, 0.5, 2.0, beta=1.0, gamma=1.0)

# Linearization in f is diagonal on harmonics and decays with k.
for k in (1, 2, 4, 8, 16):
    print(f"lambda_{k} = {mode_linearization(cfg, k):.3e}")

# The residual with f = 0: the outer flux is not constant.
g = {(3, 1): 1e-3}
psi = psi_residual(cfg, BoundaryPair(2, {}, g))
print("\n|Psi(0, g)| =", psi.norm(), " d =", psi.d)

res = continue_from_outer(cfg, g)
print("iterations", res.iterations, "residual", res.residual)
print("history", ["%.1e" % h for h in res.history])
print("f(3,1) =", res.f[(3, 1)], "  f/g =", res.f[(3, 1)] / g[(3, 1)])

# Doubling g nearly doubles f.
res2 = continue_from_outer(cfg, {(3, 1): 2e-3})
print("doubling ratio", res2.f[(3, 1)] / res.f[(3, 1)])

# Volume-preserving variant: both domains keep their volume exactly.
gt = volume_preserving_from_zero_mean(2, g)
rv = volume_corrected_continuation(cfg, gt)
print("\nvolume-corrected: iterations", rv.iterations, "residual", rv.residual)
