"""
Shape functionals of perturbed balls and perturbation paths.

Boundary fields are given on spheres |x| = R and parametrized by direction,
``xi(x/|x|)``; surface integrals over a sphere of radius R carry R^{N-1}.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .harmonics import (
    harmonic_field,
    sphere_area,
    surface_grid,
    tangential_gradient,
)

__all__ = [
    "PerturbationPath",
    "StarDomain",
    "bump",
    "build_constrained_perturbation",
    "constraint_residuals",
    "hadamard_path",
    "l1_forms",
    "l2_forms",
    "mapped_measures",
    "measures",
    "smooth_step",
]


# ---------------------------------------------------------------------------
# Smooth cut-offs


def bump(s):
    """exp(1 - 1/(1 - s^2)) on |s| < 1, zero outside; value 1 at s = 0.

    Returns (value, derivative).
    """
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1
    q = np.where(inside, 1 - s * s, 1.0)
    v = np.where(inside, np.exp(1 - 1 / q), 0.0)
    dv = np.where(inside, v * (-2 * s / q**2), 0.0)
    return v, dv


def _f(s):
    s = np.asarray(s, dtype=float)
    pos = s > 0
    sp = np.where(pos, s, 1.0)
    v = np.where(pos, np.exp(-1 / sp), 0.0)
    dv = np.where(pos, v / sp**2, 0.0)
    return v, dv


def smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1. Returns (value, derivative)."""
    a, da = _f(s)
    b, db = _f(1 - np.asarray(s, dtype=float))
    d = a + b
    return a / d, (da * d - a * (da - db)) / d**2


# ---------------------------------------------------------------------------
# Star-shaped domains


def _as_field(N, xi):
    if xi is None:
        return harmonic_field(N, {})
    if isinstance(xi, harmonic_field):
        return xi
    if isinstance(xi, dict):
        return harmonic_field(N, dict(xi))
    raise TypeError("boundary fields are harmonic_field instances or coefficient dicts")


@dataclass(frozen=True)
class StarDomain:
    """{ r x : 0 <= r < rho(x) } with rho = R0 + xi on the unit sphere.

    ``xi`` is a harmonic_field, a coefficient dict, or a callable on unit
    vectors (then its tangential gradient is computed spectrally on the grid).
    """

    N: int
    R0: float
    xi: object = None
    n: int = 0

    def _grid(self):
        if self.n:
            n = self.n
        else:
            kmax = self.xi.k_max if isinstance(self.xi, harmonic_field) else 16
            n = max(256, 16 * (kmax + 1)) if self.N == 2 else max(48, 6 * (kmax + 1))
        return surface_grid(self.N, n)

    def rho(self, grid):
        if self.xi is None:
            return np.full(grid.size, float(self.R0)), np.zeros((grid.size, self.N))
        if isinstance(self.xi, (harmonic_field, dict)):
            f = _as_field(self.N, self.xi)
            return self.R0 + f(grid.points), f.grad(grid.points)
        vals = np.asarray(self.xi(grid.points), dtype=float)
        return self.R0 + vals, tangential_gradient(grid, vals)


def measures(domain: StarDomain):
    """Volume, perimeter (surface area) and barycenter integral of a star domain."""
    grid = domain._grid()
    rho, grad = domain.rho(grid)
    if np.any(rho <= 0):
        raise ValueError("rho must be positive (star-shaped about the origin)")
    N = domain.N
    vol = grid.integrate(rho**N) / N
    bar = grid.integrate(rho[:, None] ** (N + 1) * grid.points) / (N + 1)
    g2 = np.sum(grad * grad, axis=-1)
    per = grid.integrate(rho ** (N - 2) * np.sqrt(rho**2 + g2))
    return {"Vol": float(vol), "Per": float(per), "Bar": np.asarray(bar, dtype=float)}


# ---------------------------------------------------------------------------
# Linear and bilinear forms on spheres


def l1_forms(N, R, xi, grid):
    """First-order forms for a boundary field sampled on ``grid`` (direction grid)."""
    xi = np.asarray(xi, dtype=float)
    H = (N - 1) / R
    return {
        "Vol": float(grid.integrate(xi, R)),
        "Bar": np.asarray(grid.integrate(R * grid.points * xi[:, None], R)),
        "Per": float(H * grid.integrate(xi, R)),
    }


def l2_forms(N, R, xi, grid, grad_xi=None):
    """Second-order forms; ``grad_xi`` is the unit-sphere tangential gradient."""
    xi = np.asarray(xi, dtype=float)
    H = (N - 1) / R
    if grad_xi is None:
        grad_xi = tangential_gradient(grid, xi)
    g2 = np.sum(np.asarray(grad_xi) ** 2, axis=-1) / R**2
    x = R * grid.points
    return {
        "Vol": float(H * grid.integrate(xi**2, R)),
        "Bar": np.asarray(grid.integrate((grid.points + x * H) * (xi**2)[:, None], R)),
        "Per": float(grid.integrate(g2 + xi**2 * (H**2 - (N - 1) / R**2), R)),
    }


# ---------------------------------------------------------------------------
# Perturbation paths


@dataclass(frozen=True)
class PerturbationPath:
    """t -> Id + Phi(t) built from normal fields on the interface and outer sphere.

    ``kind == "hadamard"``: Phi(t) = t h.
    ``kind == "constrained"``: volume-rescaled map near the interface,
    volume- and barycenter-corrected map near the outer sphere, blended by a
    smooth cut-off eta (1 within eps0 of the interface, 0 beyond 2 eps0).

    h = [chi_minus(r) xi_minus(x/r) + chi_plus(r) xi_plus(x/r)] x/r with bump
    profiles chi equal to 1 on the respective sphere.
    """

    N: int
    R: float
    xi_minus: harmonic_field
    xi_plus: harmonic_field
    kind: str = "constrained"
    preserve_barycenter: bool = True
    eps0: float = field(default=None)
    _cache: dict = field(default_factory=dict, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.eps0 is None:
            object.__setattr__(self, "eps0", (1 - self.R) / 4)

    @property
    def delta_minus(self):
        return min(self.eps0, self.R / 2)

    @property
    def delta_plus(self):
        return self.eps0

    # -- ambient field -----------------------------------------------------
    def field(self, x):
        """h(x) and its Jacobian Dh(x); x has shape (..., N)."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        u = x / safe[..., None]
        cm, dcm = bump((r - self.R) / self.delta_minus)
        dcm = dcm / self.delta_minus
        cp, dcp = bump((r - 1.0) / self.delta_plus)
        dcp = dcp / self.delta_plus
        I = np.eye(self.N)
        uu = u[..., :, None] * u[..., None, :]
        h = np.zeros_like(x)
        Dh = np.zeros(x.shape + (self.N,))
        for chi, dchi, f in ((cm, dcm, self.xi_minus), (cp, dcp, self.xi_plus)):
            if not f.coeffs or not np.any(chi):
                continue
            active = chi != 0
            xi = np.zeros(r.shape)
            g = np.zeros(x.shape)
            xi[active] = f(u[active])
            g[active] = f.grad(u[active])
            h = h + (chi * xi)[..., None] * u
            Dh = Dh + (dchi * xi)[..., None, None] * uu + (chi / safe)[..., None, None] * (
                u[..., :, None] * g[..., None, :] + xi[..., None, None] * (I - uu)
            )
        return h, Dh

    def eta(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        s, ds = smooth_step((r - self.R - self.eps0) / self.eps0)
        grad = (-ds / self.eps0 / safe)[..., None] * x
        return 1 - s, grad

    # -- scalar corrections -------------------------------------------------
    def corrections(self, t):
        """(c_minus, c_plus, b): volume scale factors and outer barycenter shift."""
        key = float(t)
        if key in self._cache:
            return self._cache[key]
        if self.kind == "hadamard" or t == 0:
            out = (1.0, 1.0, np.zeros(self.N))
        else:
            din = measures(StarDomain(self.N, self.R, self.xi_minus.scaled(t)))
            dout = measures(StarDomain(self.N, 1.0, self.xi_plus.scaled(t)))
            v_in = sphere_area(self.N, 1.0) * self.R**self.N / self.N
            v_out = sphere_area(self.N, 1.0) / self.N
            cm = (v_in / din["Vol"]) ** (1 / self.N)
            cp = (v_out / dout["Vol"]) ** (1 / self.N)
            b = dout["Bar"] / dout["Vol"] if self.preserve_barycenter else np.zeros(self.N)
            out = (cm, cp, b)
        self._cache[key] = out
        return out

    # -- the map ---------------------------------------------------------------
    def precompute(self, x):
        """The t-independent parts of the map at fixed points x."""
        x = np.asarray(x, dtype=float)
        h, Dh = self.field(x)
        if self.kind == "hadamard":
            return x, h, Dh, None, None
        return (x, h, Dh) + self.eta(x)

    def displacement(self, t, x, pre=None):
        """Phi(t, x) and its Jacobian; ``pre`` is ``precompute(x)`` if available."""
        x, h, Dh, eta, deta = self.precompute(x) if pre is None else pre
        I = np.eye(self.N)
        if self.kind == "hadamard":
            return t * h, t * Dh
        cm, cp, b = self.corrections(t)
        y = x + t * h
        Dy = I + t * Dh
        pm, Dpm = cm * y - x, cm * Dy - I
        pp, Dpp = cp * (y - b) - x, cp * Dy - I
        phi = eta[..., None] * pm + (1 - eta)[..., None] * pp
        Dphi = eta[..., None, None] * Dpm + (1 - eta)[..., None, None] * Dpp + (pm - pp)[..., :, None] * deta[..., None, :]
        return phi, Dphi

    def __call__(self, t, x):
        return np.asarray(x, dtype=float) + self.displacement(t, x)[0]


def _check_fields(N, xi_minus, xi_plus, preserve_barycenter):
    for name, f in (("inner", xi_minus), ("outer", xi_plus)):
        c0 = f.coeffs.get((0, 1), 0.0)
        if c0 != 0:
            area = sphere_area(N)
            raise ValueError(f"{name} field violates first-order volume preservation (residual {c0 * math.sqrt(area):.3e})")
    if preserve_barycenter:
        b1 = [xi_plus.coeffs.get((1, i), 0.0) for i in range(1, N + 1)]
        if any(v != 0 for v in b1):
            raise ValueError(f"outer field violates first-order barycenter preservation (k=1 amplitudes {b1})")


def build_constrained_perturbation(xi_minus, xi_plus, cfg, preserve_barycenter=True) -> PerturbationPath:
    """Path in the constrained class with first-order field h built from the inputs.

    ``xi_minus``/``xi_plus`` are harmonic fields (or coefficient dicts) for h.n
    on the interface and on the outer sphere.
    """
    N = cfg.N
    fm, fp = _as_field(N, xi_minus), _as_field(N, xi_plus)
    _check_fields(N, fm, fp, preserve_barycenter)
    return PerturbationPath(N, cfg.R, fm, fp, "constrained", preserve_barycenter)


def hadamard_path(xi_minus, xi_plus, cfg) -> PerturbationPath:
    N = cfg.N
    return PerturbationPath(N, cfg.R, _as_field(N, xi_minus), _as_field(N, xi_plus), "hadamard", False)


# ---------------------------------------------------------------------------
# Measures of mapped domains, computed from the boundary map


def mapped_measures(path: PerturbationPath, t, which="outer", n=None):
    """Vol, Per, Bar of the image of the ball of radius R (inner) or 1 (outer).

    Uses only the boundary map and its Jacobian (divergence theorem), so it is
    independent of the star-domain formulas used to build the corrections.
    """
    N = path.N
    rad = path.R if which == "inner" else 1.0
    if n is None:
        kk = max(path.xi_minus.k_max, path.xi_plus.k_max, 1)
        n = max(256, 32 * kk) if N == 2 else max(48, 8 * kk)
    grid = surface_grid(N, n)
    x = rad * grid.points
    phi, Dphi = path.displacement(t, x)
    X = x + phi
    M = np.eye(N) + Dphi
    if N == 2:
        e_t = np.stack([-grid.points[:, 1], grid.points[:, 0]], axis=-1)
        T = rad * np.einsum("nij,nj->ni", M, e_t)
        nu = np.stack([T[:, 1], -T[:, 0]], axis=-1)  # outward normal times ds/dtheta
        dS = np.linalg.norm(T, axis=-1)
    else:
        th = np.repeat(grid.polar, grid.shape[1])
        az = np.tile(grid.azimuth, grid.shape[0])
        e_pol = np.stack([np.cos(th) * np.cos(az), np.cos(th) * np.sin(az), -np.sin(th)], axis=-1)
        e_az = np.stack([-np.sin(az), np.cos(az), np.zeros_like(az)], axis=-1)
        T1 = rad * np.einsum("nij,nj->ni", M, e_pol)
        T2 = rad * np.einsum("nij,nj->ni", M, e_az)
        nu = np.cross(T1, T2)
        dS = np.linalg.norm(nu, axis=-1)
    w = grid.weights
    vol = np.sum(w * np.sum(X * nu, axis=-1)) / N
    bar = np.sum(w[:, None] * 0.5 * X**2 * nu, axis=0)
    per = np.sum(w * dS)
    return {"Vol": float(vol), "Per": float(per), "Bar": bar}


def constraint_residuals(xi_minus, xi_plus, cfg, grid=None, path=None):
    """Constraint integrals for normal fields on the interface and outer sphere.

    With ``path=None`` the second-order volume residuals are those of the
    Hadamard path (Z = 0): int H (h.n)^2. Passing a PerturbationPath instead
    measures the second derivative of both volumes along it numerically.
    """
    N, R = cfg.N, cfg.R
    fm, fp = _as_field(N, xi_minus), _as_field(N, xi_plus)
    if grid is None:
        kk = max(fm.k_max, fp.k_max, 1)
        grid = surface_grid(N, max(64, 8 * kk) if N == 2 else max(24, 4 * kk))
    sm, sp = fm(grid.points), fp(grid.points)
    out = {
        "vol1_inner": l1_forms(N, R, sm, grid)["Vol"],
        "vol1_outer": l1_forms(N, 1.0, sp, grid)["Vol"],
        "bar1_outer": l1_forms(N, 1.0, sp, grid)["Bar"],
    }
    if path is None:
        out["vol2_inner"] = l2_forms(N, R, sm, grid)["Vol"]
        out["vol2_outer"] = l2_forms(N, 1.0, sp, grid)["Vol"]
    else:
        h = 1e-3
        for which in ("inner", "outer"):
            v = [mapped_measures(path, s * h, which)["Vol"] for s in (-1, 0, 1)]
            out[f"vol2_{which}"] = (v[0] - 2 * v[1] + v[2]) / h**2
    return out
