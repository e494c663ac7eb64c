"""
Radial two-phase state, mode-wise shape-derivative profiles and radial solvers.

The state solves ``-div(sigma grad u) = gamma - beta u`` in the unit ball with
``u = 0`` on the boundary, ``sigma = sigma_c`` in the core ``r < R`` and 1 in the
shell.  Jumps ``[f]`` are always core value minus shell value at ``r = R``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg, special

from .harmonics import lb_eigenvalue, sphere_area

__all__ = [
    "ModeCoefficients",
    "ModeProfile",
    "PhaseConfig",
    "RadialFD",
    "RadialProfile",
    "SolverError",
    "eval_mode_profile",
    "interface_jump",
    "mode_coefficients",
    "radial_energy",
    "radial_fd_oracle",
    "radial_state",
    "solve_mode_ode",
    "solve_radial_torsion",
]


class SolverError(RuntimeError):
    """A numerical solve did not reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class PhaseConfig:
    N: int = 2
    R: float = 0.5
    sigma_c: float = 1.0
    beta: float = 0.0
    gamma: float = 1.0
    sigma_s: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N}")
        if not 0 < self.R < 1:
            raise ValueError(f"R must lie in (0, 1), got {self.R}")
        if not self.sigma_c > 0:
            raise ValueError(f"sigma_c must be positive, got {self.sigma_c}")
        if self.sigma_s != 1:
            raise ValueError("the shell conductivity is fixed at 1")
        if not self.beta >= 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    def sigma(self, r):
        return np.where(np.asarray(r) < self.R, self.sigma_c, 1.0)

    def replace(self, **kw):
        d = dict(N=self.N, R=self.R, sigma_c=self.sigma_c, beta=self.beta, gamma=self.gamma)
        d.update(kw)
        return PhaseConfig(**d)

    def as_dict(self):
        return dict(N=self.N, R=self.R, sigma_c=self.sigma_c, sigma_s=self.sigma_s, beta=self.beta, gamma=self.gamma)


# ---------------------------------------------------------------------------
# Radial state


@dataclass(frozen=True)
class RadialProfile:
    """u(r) as two analytic pieces.

    ``kind == "poly"``: u = a + b r^2 on each piece (beta = 0).
    ``kind == "bessel"``: u = gamma/beta + a i_c(r) in the core and
    gamma/beta + b i_s(r) + c k_s(r) in the shell, with
    i(r) = r^{-nu} I_nu(kappa r), k(r) = r^{-nu} K_nu(kappa r), nu = N/2 - 1.
    """

    cfg: PhaseConfig
    kind: str
    inner: tuple
    outer: tuple

    def _piece(self, r, side):
        cfg = self.cfg
        if self.kind == "poly":
            a, b = self.inner if side == "minus" else self.outer
            return a + b * r**2, 2 * b * r, 2 * b + 0 * r
        nu = cfg.N / 2 - 1
        p = cfg.gamma / cfg.beta
        if side == "minus":
            (a,) = self.inner
            kap = math.sqrt(cfg.beta / cfg.sigma_c)
            u = p + a * _ibar(nu, kap, r)
            du = a * kap * _ibar_d(nu, kap, r)
            sig = cfg.sigma_c
        else:
            b, c = self.outer
            kap = math.sqrt(cfg.beta)
            u = p + b * _ibar(nu, kap, r) + c * r**-nu * special.kv(nu, kap * r)
            du = b * kap * _ibar_d(nu, kap, r) - c * kap * r**-nu * special.kv(nu + 1, kap * r)
            sig = 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            d2 = (cfg.beta * u - cfg.gamma) / sig - np.where(r > 0, (cfg.N - 1) * du / np.where(r > 0, r, 1), 0)
        if np.ndim(r) == 0 and r == 0:
            d2 = (cfg.beta * u - cfg.gamma) / sig / cfg.N
        return u, du, d2

    def __call__(self, r):
        return self.derivatives(r)[0]

    def derivatives(self, r, side=None):
        """(u, u', u'') at r; ``side`` selects the one-sided limit at r = R."""
        r = np.asarray(r, dtype=float)
        if side is not None:
            return self._piece(r, side)
        lo = self._piece(r, "minus")
        hi = self._piece(r, "plus")
        m = r < self.cfg.R
        return tuple(np.where(m, a, b) for a, b in zip(lo, hi))

    def d1(self, r, side=None):
        return self.derivatives(r, side)[1]

    def d2(self, r, side=None):
        return self.derivatives(r, side)[2]


def _ibar(nu, kap, r):
    """r^{-nu} I_nu(kap r), finite at r = 0."""
    r = np.asarray(r, dtype=float)
    z = kap * r
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(r > 0, special.iv(nu, z) / np.where(r > 0, r, 1.0) ** nu, 0.0)
    zero = (kap / 2) ** nu / special.gamma(nu + 1)
    return np.where(r > 0, val, zero)


def _ibar_d(nu, kap, r):
    """d/dr of _ibar divided by kap: r^{-nu} I_{nu+1}(kap r)."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = special.iv(nu + 1, kap * r) / np.where(r > 0, r, 1.0) ** nu
    return np.where(r > 0, val, 0.0)


def solve_radial_torsion(cfg: PhaseConfig) -> RadialProfile:
    """Closed-form state for beta = 0 (scaled by gamma)."""
    if cfg.beta != 0:
        raise ValueError("closed form requires beta = 0; use radial_state for beta > 0")
    N, R, s, g = cfg.N, cfg.R, cfg.sigma_c, cfg.gamma
    inner = (g * ((1 - R**2) / (2 * N) + R**2 / (2 * N * s)), -g / (2 * N * s))
    outer = (g / (2 * N), -g / (2 * N))
    return RadialProfile(cfg, "poly", inner, outer)


def radial_state(cfg: PhaseConfig) -> RadialProfile:
    """Radial state for any beta >= 0.

    For beta > 0 the pieces are modified Bessel functions; the three constants
    follow from continuity, flux matching and u(1) = 0.
    """
    if cfg.beta == 0:
        return solve_radial_torsion(cfg)
    N, R, s = cfg.N, cfg.R, cfg.sigma_c
    nu = N / 2 - 1
    kc, ks = math.sqrt(cfg.beta / s), math.sqrt(cfg.beta)
    p = cfg.gamma / cfg.beta
    iR_c, diR_c = _ibar(nu, kc, R), kc * _ibar_d(nu, kc, R)
    iR_s, diR_s = _ibar(nu, ks, R), ks * _ibar_d(nu, ks, R)
    kR, dkR = R**-nu * special.kv(nu, ks * R), -ks * R**-nu * special.kv(nu + 1, ks * R)
    i1, k1 = _ibar(nu, ks, 1.0), special.kv(nu, ks)
    M = np.array(
        [
            [iR_c, -iR_s, -kR],
            [s * diR_c, -diR_s, -dkR],
            [0.0, i1, k1],
        ]
    )
    a, b, c = np.linalg.solve(M, [0.0, 0.0, -p])
    return RadialProfile(cfg, "bessel", (float(a),), (float(b), float(c)))


def interface_jump(cfg: PhaseConfig) -> float:
    """[d_r u] = u'(R-) - u'(R+) of the radial state."""
    if cfg.beta == 0:
        return cfg.gamma * (cfg.R / cfg.N) * (cfg.sigma_c - 1) / cfg.sigma_c
    prof = radial_state(cfg)
    return float(prof.d1(cfg.R, "minus") - prof.d1(cfg.R, "plus"))


def radial_energy(cfg: PhaseConfig) -> float:
    """E = int u over the unit ball, by radial quadrature of the state."""
    prof = radial_state(cfg)
    area = sphere_area(cfg.N)
    total = 0.0
    for a, b, side in ((0.0, cfg.R, "minus"), (cfg.R, 1.0, "plus")):
        if prof.kind == "poly":
            x, w = np.polynomial.legendre.leggauss(8)
            r = 0.5 * (b - a) * x + 0.5 * (a + b)
            total += 0.5 * (b - a) * np.sum(w * prof.derivatives(r, side)[0] * r ** (cfg.N - 1))
        else:
            total += integrate.quad(lambda r: float(prof.derivatives(r, side)[0]) * r ** (cfg.N - 1), a, b, epsabs=1e-14, epsrel=1e-13)[0]
    return area * total


# ---------------------------------------------------------------------------
# Closed-form mode coefficients (beta = 0)


@dataclass(frozen=True)
class ModeCoefficients:
    k: int
    B_minus: float
    C_minus: float
    D_minus: float
    B_plus: float
    C_plus: float
    D_plus: float
    F: float
    N: int
    R: float


def mode_coefficients(cfg: PhaseConfig, k: int) -> ModeCoefficients:
    if k < 1:
        raise ValueError("mode coefficients need k >= 1")
    N, R, s = cfg.N, cfg.R, cfg.sigma_c
    Pw = R ** (2 - N - 2 * k)
    F = N * (N - 2 + k + k * s) * Pw + k * N * (1 - s)
    Bm = ((1 - s) / s) * R ** (1 - k) * ((N - 2 + k) * Pw + k) / F
    Cm = (s - 1) * k * R ** (1 - k) / F
    Bp = (N - 2 + 2 * k) * Pw / F
    Cp = (1 - s) * k / F
    Dp = (N - 2 + k + k * s) * Pw / F
    return ModeCoefficients(k, Bm, Cm, -Cm, Bp, Cp, Dp, F, N, R)


def eval_mode_profile(coeffs: ModeCoefficients, side, r, deriv=0):
    """Radial profile of the shape derivative for a unit-amplitude mode.

    ``side='minus'`` is the inner-boundary profile, ``'plus'`` the outer one.
    At r = R the core value is returned; ``deriv`` in {0, 1, 2}.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(r > 1):
        raise ValueError("r must lie in [0, 1]")
    k, N, R = coeffs.k, coeffs.N, coeffs.R
    if side == "minus":
        B, C, D = coeffs.B_minus, coeffs.C_minus, coeffs.D_minus
    elif side == "plus":
        B, C, D = coeffs.B_plus, coeffs.C_plus, coeffs.D_plus
    else:
        raise ValueError("side must be 'minus' or 'plus'")
    p = 2 - N - k
    with np.errstate(divide="ignore"):
        rs = np.where(r > 0, r, 1.0)
        if deriv == 0:
            inner = B * r**k
            outer = C * rs**p + D * rs**k
        elif deriv == 1:
            inner = B * k * r ** (k - 1) if k > 1 else B + 0 * r
            outer = C * p * rs ** (p - 1) + D * k * rs ** (k - 1)
        else:
            inner = B * k * (k - 1) * r ** (k - 2) if k > 2 else B * k * (k - 1) + 0 * r
            outer = C * p * (p - 1) * rs ** (p - 2) + D * k * (k - 1) * rs ** (k - 2)
    return np.where(r <= R, inner, outer)


def mode_profile_side(coeffs, side, r, phase, deriv=0):
    """One-sided evaluation: ``phase='core'`` uses B r^k, ``'shell'`` C r^p + D r^k."""
    k, N = coeffs.k, coeffs.N
    B, C, D = (
        (coeffs.B_minus, coeffs.C_minus, coeffs.D_minus)
        if side == "minus"
        else (coeffs.B_plus, coeffs.C_plus, coeffs.D_plus)
    )
    p = 2 - N - k
    r = float(r)
    if phase == "core":
        return B * math.prod(range(k - deriv + 1, k + 1)) * r ** (k - deriv)
    fp = math.prod(p - j for j in range(deriv))
    fk = math.prod(k - j for j in range(deriv))
    return C * fp * r ** (p - deriv) + D * fk * r ** (k - deriv)


# ---------------------------------------------------------------------------
# Chebyshev collocation for the mode ODE


def _cheb(n):
    """Chebyshev points on [-1, 1] (descending) and differentiation matrix."""
    x = np.cos(np.pi * np.arange(n + 1) / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n + 1)
    X = np.tile(x, (n + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1 / c) / (dX + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    return x, D


@dataclass(frozen=True)
class ModeProfile:
    """Collocated solution of the radial mode problem.

    Inner piece stored as w with s = (r/R)^k w; outer piece stores s directly.
    """

    cfg: PhaseConfig
    k: int
    r_inner: np.ndarray
    w_inner: np.ndarray
    r_outer: np.ndarray
    s_outer: np.ndarray
    s_R_minus: float
    s_R_plus: float
    ds_R_minus: float
    ds_R_plus: float
    ds_1: float
    residual: float

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        from scipy.interpolate import BarycentricInterpolator

        wi = BarycentricInterpolator(self.r_inner, self.w_inner)
        so = BarycentricInterpolator(self.r_outer, self.s_outer)
        R = self.cfg.R
        inner = (np.clip(r, 0, R) / R) ** self.k * wi(np.clip(r, 0, R))
        outer = so(np.clip(r, R, 1))
        return np.where(r <= R, inner, outer)


def _mode_system(cfg, k, jump, flux_jump, outer, n):
    N, R, s, beta = cfg.N, cfg.R, cfg.sigma_c, cfg.beta
    lam = lb_eigenvalue(N, k)
    x, D = _cheb(n)
    # inner: r in [0, R], r = R (1 + x)/2 -> x=1 is r=R (index 0)
    ri = R * (1 + x) / 2
    Di = D * (2 / R)
    ro = R + (1 - R) * (1 + x) / 2
    Do = D * (2 / (1 - R))
    m = n + 1
    A = np.zeros((2 * m, 2 * m))
    b = np.zeros(2 * m)
    # inner rows: r w'' + (2k+N-1) w' - (beta/s) r w = 0, all nodes but r=R
    Li = np.diag(ri) @ Di @ Di + (2 * k + N - 1) * Di - (beta / s) * np.diag(ri)
    A[1:m, :m] = Li[1:]
    # outer rows: s'' + (N-1)/r s' - lam/r^2 s - beta s = 0, interior nodes
    Lo = Do @ Do + np.diag((N - 1) / ro) @ Do - np.diag(lam / ro**2 + beta)
    A[m + 1 : 2 * m - 1, m:] = Lo[1:-1]
    # s(R-) - s(R+) = jump
    A[0, 0] = 1.0
    A[0, m + m - 1] = -1.0
    b[0] = jump
    # sigma_c s'(R-) - s'(R+) = flux_jump, with s'(R-) = (k/R) w(R) + w'(R)
    A[2 * m - 1, :m] = s * Di[0]
    A[2 * m - 1, 0] += s * k / R
    A[2 * m - 1, m:] = -Do[-1]
    b[2 * m - 1] = flux_jump
    # s(1) = outer
    A[m, m] = 1.0
    b[m] = outer
    return A, b, ri, Di, ro, Do


def solve_mode_ode(cfg: PhaseConfig, k: int, jump=0.0, flux_jump=0.0, outer=0.0, n=None) -> ModeProfile:
    """Solve sigma (s'' + (N-1) s'/r - lam_k s / r^2) = beta s piecewise.

    Interface data are core minus shell: ``jump = s(R-) - s(R+)`` and
    ``flux_jump = sigma_c s'(R-) - s'(R+)``; ``outer = s(1)``. Regularity at
    the origin comes from the factor (r/R)^k on the core piece.
    """
    if k < 1:
        raise ValueError("mode ODE needs k >= 1")
    if n is None:
        n = max(48, int(2.5 * k) + 24)
    sols = []
    for nn in (n, n + 16):
        A, b, ri, Di, ro, Do = _mode_system(cfg, k, jump, flux_jump, outer, nn)
        y = linalg.solve(A, b)
        # normwise backward error
        res = np.linalg.norm(A @ y - b, np.inf) / (
            np.linalg.norm(A, np.inf) * np.linalg.norm(y, np.inf) + np.linalg.norm(b, np.inf) + 1e-300
        )
        sols.append((y, res, ri, Di, ro, Do, nn))
    (y, res, ri, Di, ro, Do, nn), (y2, *_rest) = sols
    m = nn + 1
    w, so = y[:m], y[m:]
    R = cfg.R
    # Do rows: index 0 is r=1, last is r=R
    ds1 = float(Do[0] @ so)
    dsRp = float(Do[-1] @ so)
    dsRm = float(k / R * w[0] + Di[0] @ w)
    m2 = nn + 17
    Do2 = _cheb(nn + 16)[1] * (2 / (1 - R))
    ds1_b = float(Do2[0] @ y2[m2:])
    scale = max(1.0, abs(jump), abs(flux_jump), abs(outer), float(np.max(np.abs(y))))
    est = abs(ds1 - ds1_b) / scale
    if res > 1e-12 or est > 1e-8:
        raise SolverError(f"mode ODE not converged (residual {res:.2e}, refinement change {est:.2e})", max(res, est))
    return ModeProfile(cfg, k, ri, w, ro, so, float(w[0]), float(so[-1]), dsRm, dsRp, ds1, max(res, est))


# ---------------------------------------------------------------------------
# Finite-volume oracle


@dataclass(frozen=True)
class RadialFD:
    """Cell-centred finite-volume solution; ``edges`` contains R exactly."""

    cfg: PhaseConfig
    edges: np.ndarray
    centers: np.ndarray
    values: np.ndarray

    def integral(self):
        """int u over the ball (midpoint-in-cell quadrature)."""
        N = self.cfg.N
        vol = (self.edges[1:] ** N - self.edges[:-1] ** N) / N
        return sphere_area(N) * float(np.sum(vol * self.values))


def radial_edges(R, n):
    n_in = min(max(1, int(round(R * n))), n - 1)
    return np.concatenate([np.linspace(0.0, R, n_in + 1), np.linspace(R, 1.0, n - n_in + 1)[1:]])


def radial_fd_oracle(cfg: PhaseConfig, n: int) -> RadialFD:
    """Second-order cell-centred solve of the radial transmission problem.

    Face conductances use the harmonic average of the adjacent half cells, so
    the jump of sigma sitting on the face r = R is captured exactly.
    """
    N = cfg.N
    e = radial_edges(cfg.R, n)
    c = 0.5 * (e[1:] + e[:-1])
    h = np.diff(e)
    sig = cfg.sigma(c)
    vol = (e[1:] ** N - e[:-1] ** N) / N
    # interior faces 1..n-1
    T = e[1:-1] ** (N - 1) / (0.5 * h[:-1] / sig[:-1] + 0.5 * h[1:] / sig[1:])
    Tb = sig[-1] / (0.5 * h[-1])
    diag = np.zeros(n)
    diag[:-1] += T
    diag[1:] += T
    diag[-1] += Tb
    diag += cfg.beta * vol
    ab = np.zeros((3, n))
    ab[0, 1:] = -T
    ab[1] = diag
    ab[2, :-1] = -T
    rhs = cfg.gamma * vol
    try:
        u = linalg.solve_banded((1, 1), ab, rhs)
    except linalg.LinAlgError as exc:
        raise SolverError(f"singular radial system: {exc}") from exc
    if not np.all(np.isfinite(u)):
        raise SolverError("radial solve produced non-finite values")
    return RadialFD(cfg, e, c, u)
