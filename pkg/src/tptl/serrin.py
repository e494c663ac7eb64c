"""
Overdetermined two-phase problem: continuation from outer to inner boundaries.

For a pair (f, g) of boundary fields, D_f = {r < R + f} and Omega_g = {r < 1 + g}
(both parametrized by direction). The state solves
``-div(sigma grad u) = gamma - beta u`` in Omega_g with u = 0 on the boundary,
and the pair is a solution when ``d_n u = -d`` on the outer boundary with

    d = (gamma Vol(Omega_g) - beta int u) / Per(Omega_g).

The residual map Psi(f, g) = (d_n u + d) J_tau(g), pulled back to the unit
circle, is computed with the finite-element oracle (N = 2). Its linearization
in f at (0, 0) is diagonal on harmonics, with value ``mode_linearization(cfg, k)``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import StarDomain, hadamard_path, measures
from .harmonics import expand_boundary_field, harmonic_field, mode_dimension, sphere_area, surface_grid
from .oracle import get_oracle, path_map
from .radial import PhaseConfig, SolverError, interface_jump, radial_energy, solve_mode_ode

__all__ = [
    "BoundaryPair",
    "ContinuationResult",
    "PsiResidual",
    "continue_from_outer",
    "d_derivative",
    "mode_linearization",
    "normalize_volume",
    "overdetermined_constant",
    "psi_residual",
    "radial_overdetermined_constant",
    "volume_corrected_continuation",
    "volume_preserving_from_zero_mean",
    "zero_mean_from_volume_preserving",
]

SERRIN_DEFAULTS = dict(beta=1.0, gamma=1.0)


@dataclass(frozen=True)
class BoundaryPair:
    """Harmonic coefficients of f (interface) and g (outer boundary).

    Both are zero-mean (no (0, 1) coefficient) unless ``zero_mean=False``,
    which admits the extended pairs used by the volume-corrected variant.
    """

    N: int
    f: dict = field(default_factory=dict)
    g: dict = field(default_factory=dict)
    zero_mean: bool = True

    def __post_init__(self):
        for name, c in (("f", self.f), ("g", self.g)):
            for (k, i), _ in c.items():
                if k < 0 or i < 1 or i > mode_dimension(self.N, k):
                    raise ValueError(f"invalid mode ({k}, {i}) in {name}")
            if self.zero_mean and abs(c.get((0, 1), 0.0)) > 1e-12:
                raise ValueError(f"{name} must have zero mean, got constant coefficient {c[(0, 1)]:.3e}")


@dataclass
class ContinuationResult:
    f: dict
    iterations: int
    residual: float
    d: float
    history: list = field(default_factory=list)
    info: dict = field(default_factory=dict)


@dataclass
class PsiResidual:
    """Psi at the outer grid nodes plus the quantities that define it."""

    values: np.ndarray  # Psi_j on the unit circle
    neumann: np.ndarray  # d_n u + d at the mapped boundary nodes
    d: float
    volume: float
    perimeter: float
    u_integral: float
    grid: object = field(repr=False)

    def coefficients(self, k_max):
        return expand_boundary_field(self.grid, self.values, k_max)

    def norm(self):
        return float(np.max(np.abs(self.values)))

    def mean(self):
        return float(self.grid.integrate(self.values))


# ---------------------------------------------------------------------------
# The constant d


def overdetermined_constant(cfg: PhaseConfig, u_integral, domain_measures) -> float:
    """d = (gamma Vol - beta int u) / Per."""
    return (cfg.gamma * domain_measures["Vol"] - cfg.beta * u_integral) / domain_measures["Per"]


def radial_overdetermined_constant(cfg: PhaseConfig) -> float:
    m = {"Vol": sphere_area(cfg.N) / cfg.N, "Per": sphere_area(cfg.N)}
    return overdetermined_constant(cfg, radial_energy(cfg), m)


# ---------------------------------------------------------------------------
# Linearization


def mode_linearization(cfg: PhaseConfig, k: int) -> float:
    """d_r s_k(1): the action of the f-linearization of Psi on degree k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    jump = interface_jump(cfg)
    if jump == 0:
        return 0.0
    # s(R+) - s(R-) = [d_r u]; the solver takes core minus shell
    prof = solve_mode_ode(cfg, k, jump=-jump, flux_jump=0.0, outer=0.0)
    return float(prof.ds_1)


# ---------------------------------------------------------------------------
# Residual map


def _oracle(cfg, n_r, n_theta):
    if cfg.N != 2:
        raise ValueError("the residual map is evaluated with the two-dimensional oracle")
    return get_oracle(cfg, n_r, n_theta, 1e-11)


def psi_residual(cfg: PhaseConfig, pair: BoundaryPair, n_r=128, n_theta=128) -> PsiResidual:
    """Psi(f, g) on the n_theta outer nodes of the oracle grid.

    The flux is the consistent (variational) one, so sum_j Psi_j dtheta
    vanishes up to the linear-solver residual.
    """
    orc = _oracle(cfg, n_r, n_theta)
    path = hadamard_path(pair.f, pair.g, cfg)
    phi = path_map(path, 1.0) if (pair.f or pair.g) else None
    sol = orc.solve(phi)
    system = sol.info["system"]
    J = system.coeffs.J
    flux = orc.boundary_flux(sol, system)
    m = orc.boundary_measure(phi)
    vol = orc.volume(J)
    u_int = orc.integral(sol, J)
    per = float(np.sum(m))
    d = overdetermined_constant(cfg, u_int, {"Vol": vol, "Per": per})
    r = flux + d * m
    grid = surface_grid(2, n_theta)
    return PsiResidual(r / orc.grid.dtheta, r / m, d, vol, per, u_int, grid)


# ---------------------------------------------------------------------------
# Continuation


def _check_outer(N, g, k_max):
    for (k, i), a in g.items():
        if a != 0 and k > k_max:
            raise ValueError(f"g has a degree-{k} component above k_max={k_max}")


def _newton(cfg, g, tol, max_iter, k_max, n_r, n_theta, inner_transform=None, jacobian="broyden"):
    if cfg.sigma_c == 1:
        raise ValueError("continuation needs sigma_c != 1 (the linearization vanishes)")
    if jacobian not in ("broyden", "frozen"):
        raise ValueError(f"unknown jacobian {jacobian!r}")
    N = cfg.N
    modes = [(k, i) for k in range(1, k_max + 1) for i in range(1, mode_dimension(N, k) + 1)]
    lam = {}
    for k in range(1, k_max + 1):
        lam[k] = mode_linearization(cfg, k)
        if abs(lam[k]) < 1e-10:
            raise SolverError(f"linearization for k={k} is below 1e-10", residual=abs(lam[k]))
    B = np.diag([lam[k] for k, _ in modes])
    x = np.zeros(len(modes))
    history = []
    best = math.inf
    stalled = 0
    prev = None
    for it in range(max_iter + 1):
        f = {m: float(v) for m, v in zip(modes, x) if v != 0}
        f_eval = inner_transform(f) if inner_transform else f
        try:
            psi = psi_residual(cfg, BoundaryPair(N, f_eval, g, zero_mean=False), n_r, n_theta)
        except ValueError as exc:
            if it == 0:
                raise
            # an iterate left the admissible maps
            raise SolverError(f"continuation diverged at iteration {it}: {exc}", residual=history[-1]) from exc
        res = psi.norm()
        history.append(res)
        if res <= tol:
            return ContinuationResult(f, it, res, psi.d, history, {"psi": psi, "f_eval": f_eval})
        if res < best:
            best, stalled = res, 0
        else:
            stalled += 1
            if stalled >= 3:
                raise SolverError("continuation diverged: residual not decreasing over 3 iterations", residual=res)
        if it == max_iter:
            break
        coeffs = psi.coefficients(k_max)
        F = np.array([coeffs[m] for m in modes])
        if prev is not None and jacobian == "broyden":
            s_prev, F_prev = prev
            y = F - F_prev
            B = B + np.outer(y - B @ s_prev, s_prev) / (s_prev @ s_prev)
        step = -np.linalg.solve(B, F)
        prev = (step, F)
        x = x + step
    raise SolverError(f"continuation did not reach tol={tol:.1e} in {max_iter} iterations", residual=history[-1])


def continue_from_outer(cfg: PhaseConfig, g: dict, tol=1e-8, max_iter=20, k_max=16, n_r=128, n_theta=128, jacobian="broyden") -> ContinuationResult:
    """Find zero-mean f with Psi(f, g) = 0.

    Quasi-Newton on the harmonic coefficients of f up to ``k_max``: the
    Jacobian starts as the diagonal linearization at (0, 0) and receives a
    Broyden update per step. ``jacobian="frozen"`` keeps the diagonal.
    """
    BoundaryPair(cfg.N, {}, g)
    _check_outer(cfg.N, g, k_max)
    return _newton(cfg, g, tol, max_iter, k_max, n_r, n_theta, jacobian=jacobian)


# ---------------------------------------------------------------------------
# Volume-preserving variant


def _constant(N, radius):
    """Coefficient of Y_{0,1} for the constant function ``radius``."""
    return radius * math.sqrt(sphere_area(N))


def _volume(N, radius, coeffs):
    return measures(StarDomain(N, radius, harmonic_field(N, dict(coeffs))))["Vol"]


def normalize_volume(N, radius, coeffs) -> dict:
    """Coefficients of f~ with radius + f~ = s (radius + f) and Vol = Vol(ball)."""
    s = (sphere_area(N) * radius**N / N / _volume(N, radius, coeffs)) ** (1 / N)
    out = {key: s * a for key, a in coeffs.items()}
    out[(0, 1)] = out.get((0, 1), 0.0) + (s - 1) * _constant(N, radius)
    return out


def volume_preserving_from_zero_mean(N, g: dict, radius=1.0) -> dict:
    """g -> g~ with radius + g~ = t (radius + g) and Vol(Omega_g~) = Vol(ball)."""
    return normalize_volume(N, radius, g)


def zero_mean_from_volume_preserving(N, g_tilde: dict, radius=1.0):
    """Inverse map: the unique t with zero-mean g, t = (Per + int g~) / Per.

    Returns (g, t).
    """
    c0 = _constant(N, radius)
    per = sphere_area(N, radius)
    mean = g_tilde.get((0, 1), 0.0) * math.sqrt(sphere_area(N)) * radius ** (N - 1)
    t = (per + mean) / per
    g = {key: a / t for key, a in g_tilde.items() if key != (0, 1)}
    g0 = (c0 + g_tilde.get((0, 1), 0.0)) / t - c0
    if abs(g0) > 1e-12 * c0:
        g[(0, 1)] = g0
    return g, t


def volume_corrected_continuation(cfg: PhaseConfig, g_tilde: dict, tol=1e-8, max_iter=20, k_max=16, n_r=128, n_theta=128) -> ContinuationResult:
    """Solve Psi(f~, g~) = 0 with Vol(D_f~) = Vol(D_0) for volume-preserving g~.

    Newton runs on zero-mean f; every evaluation uses the volume-normalized
    f~, which agrees with f at first order, so the same starting Jacobian applies.
    """
    N = cfg.N
    if g_tilde:
        vol = _volume(N, 1.0, g_tilde)
        ref = sphere_area(N) / N
        if abs(vol - ref) > 1e-8 * ref:
            raise ValueError(f"g~ does not preserve the volume (relative deviation {abs(vol - ref) / ref:.2e})")
    _check_outer(N, g_tilde, k_max)
    res = _newton(cfg, g_tilde, tol, max_iter, k_max, n_r, n_theta, lambda f: normalize_volume(N, cfg.R, f))
    res.info["f_zero_mean"] = res.f
    res.f = res.info["f_eval"]
    return res


# ---------------------------------------------------------------------------
# d along inner-only paths


def d_derivative(cfg: PhaseConfig, f: dict, step=1e-3, n_r=128, n_theta=128):
    """Central difference of d along (t f, 0) at t = 0. Returns (d(0), d'(0))."""
    vals = {}
    for t in (-step, 0.0, step):
        f_t = {key: t * a for key, a in f.items()}
        vals[t] = psi_residual(cfg, BoundaryPair(cfg.N, f_t, {}), n_r, n_theta).d
    return vals[0.0], (vals[step] - vals[-step]) / (2 * step)
