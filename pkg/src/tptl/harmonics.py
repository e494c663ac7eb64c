"""
Spherical harmonics on the unit circle (N=2) and the unit sphere (N=3).

Conventions
-----------
Real orthonormal basis with respect to the surface measure of the unit sphere.

* N=2: ``Y_{0,1} = 1/sqrt(2 pi)``, ``Y_{k,1} = cos(k t)/sqrt(pi)``,
  ``Y_{k,2} = sin(k t)/sqrt(pi)``.
* N=3: ``Y_{k,1}`` is the zonal function (m=0, symmetric about the polar
  axis), ``Y_{k,2m}`` and ``Y_{k,2m+1}`` carry ``cos(m phi)`` and
  ``sin(m phi)`` respectively.

Fields on a sphere of radius R are always parametrized by the unit direction
x/|x|, so a field given by coefficients is ``sum a_{k,i} Y_{k,i}(x/|x|)``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Mode",
    "SurfaceGrid",
    "UnderResolvedGridError",
    "discrete_tangential",
    "eval_harmonic",
    "eval_harmonic_grad",
    "expand_boundary_field",
    "harmonic_field",
    "laplace_beltrami",
    "lb_eigenvalue",
    "mode_dimension",
    "mode_list",
    "sphere_area",
    "sphere_mean_curvature",
    "surface_grid",
    "synthesize",
    "tangential_divergence",
    "tangential_gradient",
]


class UnderResolvedGridError(ValueError):
    """Raised when a grid cannot resolve the requested harmonic degree."""


@dataclass(frozen=True, order=True)
class Mode:
    k: int
    i: int = 1

    def check(self, N):
        if self.k < 0 or self.i < 1 or self.i > mode_dimension(N, self.k):
            raise ValueError(f"invalid mode {self} for N={N}")
        return self


def mode_dimension(N: int, k: int) -> int:
    """Dimension of the space of degree-k spherical harmonics on S^{N-1}.

    Counted as homogeneous polynomials of degree k minus those of degree k-2
    (multiplication by |x|^2 is the complement of the harmonic ones).
    """
    if N < 2 or k < 0:
        raise ValueError(f"need N >= 2 and k >= 0, got N={N}, k={k}")
    if k == 0:
        return 1
    return math.comb(k + N - 1, N - 1) - math.comb(k + N - 3, N - 1)


def lb_eigenvalue(N, k) -> float:
    return float(k * (k + N - 2))


def sphere_mean_curvature(N, R) -> float:
    if R <= 0:
        raise ValueError("radius must be positive")
    return (N - 1) / R


def sphere_area(N, R=1.0) -> float:
    """Surface measure of the sphere of radius R in R^N."""
    return 2 * math.pi ** (N / 2) / math.gamma(N / 2) * R ** (N - 1)


def mode_list(N, k_max, k_min=0):
    return [Mode(k, i) for k in range(k_min, k_max + 1) for i in range(1, mode_dimension(N, k) + 1)]


def _check_N(N):
    if N not in (2, 3):
        raise ValueError(f"pointwise harmonics are only available for N in (2, 3), got {N}")


# ---------------------------------------------------------------------------
# Associated Legendre functions, normalized so that int_{-1}^{1} P^2 dx = 1


def _legendre_column(m, l_max, x):
    """Normalized P_l^m(x) for l = m..l_max, shape (l_max - m + 1, len(x))."""
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    pmm = np.full_like(x, 1.0 / math.sqrt(2.0))
    for j in range(1, m + 1):
        pmm = math.sqrt((2 * j + 1) / (2 * j)) * s * pmm
    out = np.empty((l_max - m + 1,) + x.shape)
    out[0] = pmm
    if l_max == m:
        return out
    out[1] = math.sqrt(2 * m + 3) * x * pmm
    for l in range(m + 2, l_max + 1):
        a = math.sqrt((4 * l * l - 1) / (l * l - m * m))
        b = math.sqrt(((l - 1) ** 2 - m * m) / (4 * (l - 1) ** 2 - 1))
        out[l - m] = a * (x * out[l - m - 1] - b * out[l - m - 2])
    return out


def _legendre_dtheta(m, l_max, x):
    """(P, dP/dtheta) for the normalized functions, with x = cos(theta).

    Uses (1 - x^2) P' = -l x P_l + c_lm P_{l-1}; x must avoid the poles.
    """
    P = _legendre_column(m, l_max, x)
    s = np.sqrt(1.0 - x * x)
    dP = np.empty_like(P)
    for l in range(m, l_max + 1):
        term = -l * x * P[l - m]
        if l > m:
            term = term + math.sqrt((2 * l + 1) * (l * l - m * m) / (2 * l - 1)) * P[l - m - 1]
        dP[l - m] = -term / s
    return P, dP


def _angles3(points):
    p = np.asarray(points, dtype=float)
    r = np.linalg.norm(p, axis=-1)
    z = np.clip(p[..., 2] / r, -1.0, 1.0)
    az = np.arctan2(p[..., 1], p[..., 0])
    return z, az


def _trig(m, i, az):
    """Azimuthal factor of Y_{k,i} (N=3) or Y_{k,i} itself up to scale (N=2)."""
    if m == 0:
        return np.full_like(az, 1.0 / math.sqrt(2 * math.pi))
    if i % 2 == 0:
        return np.cos(m * az) / math.sqrt(math.pi)
    return np.sin(m * az) / math.sqrt(math.pi)


def _dtrig(m, i, az):
    if m == 0:
        return np.zeros_like(az)
    if i % 2 == 0:
        return -m * np.sin(m * az) / math.sqrt(math.pi)
    return m * np.cos(m * az) / math.sqrt(math.pi)


def _order(N, mode):
    """Azimuthal order m and parity index used by _trig."""
    if N == 2:
        # i=1 -> cos, i=2 -> sin
        return mode.k, (2 if mode.i == 1 else 1)
    m = mode.i // 2
    return m, mode.i


def eval_harmonic(N, mode, points):
    """Evaluate Y_{k,i} at points on (or directions of) the unit sphere.

    ``points`` has shape (..., N); only the direction is used.
    """
    _check_N(N)
    mode = Mode(*mode) if not isinstance(mode, Mode) else mode
    mode.check(N)
    p = np.asarray(points, dtype=float)
    if N == 2:
        az = np.arctan2(p[..., 1], p[..., 0])
        m, par = _order(N, mode)
        return _trig(m, par, az)
    z, az = _angles3(p)
    m, par = _order(N, mode)
    P = _legendre_column(m, mode.k, z)[-1]
    return P * _trig(m, par, az)


def eval_harmonic_grad(N, mode, points):
    """Tangential gradient of Y_{k,i} on the unit sphere, as ambient vectors."""
    _check_N(N)
    mode = Mode(*mode) if not isinstance(mode, Mode) else mode
    mode.check(N)
    p = np.asarray(points, dtype=float)
    m, par = _order(N, mode)
    if N == 2:
        az = np.arctan2(p[..., 1], p[..., 0])
        e_t = np.stack([-np.sin(az), np.cos(az)], axis=-1)
        return _dtrig(m, par, az)[..., None] * e_t
    z, az = _angles3(p)
    z = np.clip(z, -1 + 1e-15, 1 - 1e-15)
    P, dP = _legendre_dtheta(m, mode.k, z)
    P, dP = P[-1], dP[-1]
    st = np.sqrt(1 - z * z)
    e_pol = np.stack([z * np.cos(az), z * np.sin(az), -st], axis=-1)
    e_az = np.stack([-np.sin(az), np.cos(az), np.zeros_like(az)], axis=-1)
    g_pol = dP * _trig(m, par, az)
    g_az = P * _dtrig(m, par, az) / st
    return g_pol[..., None] * e_pol + g_az[..., None] * e_az


# ---------------------------------------------------------------------------
# Quadrature grids


@dataclass(frozen=True)
class SurfaceGrid:
    """Tensor quadrature grid on the unit sphere.

    For N=2 ``shape == (n,)``; for N=3 ``shape == (n_polar, n_azimuth)`` with
    Gauss-Legendre nodes in cos(polar angle). ``points`` and ``weights`` are
    flattened in C order.
    """

    N: int
    shape: tuple
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    polar: np.ndarray = field(repr=False, default=None)
    azimuth: np.ndarray = field(repr=False, default=None)

    @property
    def size(self):
        return self.weights.size

    @property
    def k_resolved(self):
        """Largest degree admitted by the 4-nodes-per-wavelength heuristic."""
        return min(self.shape) // 4

    def integrate(self, values, R=1.0):
        """Surface integral over the sphere of radius R (leading axis = nodes)."""
        v = np.asarray(values)
        return np.tensordot(self.weights, v, axes=(0, 0)) * R ** (self.N - 1)


def surface_grid(N, n, n_azimuth=None) -> SurfaceGrid:
    _check_N(N)
    if N == 2:
        az = 2 * np.pi * np.arange(n) / n
        pts = np.stack([np.cos(az), np.sin(az)], axis=-1)
        w = np.full(n, 2 * np.pi / n)
        return SurfaceGrid(2, (n,), pts, w, None, az)
    n_az = 2 * n if n_azimuth is None else n_azimuth
    x, wx = np.polynomial.legendre.leggauss(n)
    x, wx = x[::-1], wx[::-1]
    az = 2 * np.pi * np.arange(n_az) / n_az
    st = np.sqrt(1 - x * x)
    pts = np.stack(
        [
            st[:, None] * np.cos(az)[None, :],
            st[:, None] * np.sin(az)[None, :],
            np.repeat(x[:, None], n_az, axis=1),
        ],
        axis=-1,
    ).reshape(-1, 3)
    w = (wx[:, None] * np.full(n_az, 2 * np.pi / n_az)[None, :]).ravel()
    return SurfaceGrid(3, (n, n_az), pts, w, np.arccos(x), az)


# ---------------------------------------------------------------------------
# Analysis and synthesis


def _require(grid, k_max):
    if 4 * k_max > min(grid.shape):
        raise UnderResolvedGridError(
            f"grid {grid.shape} under-resolves k_max={k_max}; need >= {4 * k_max} nodes per direction"
        )


def _expand(grid, f, k_max):
    f = np.asarray(f, dtype=float)
    out = {}
    if grid.N == 2:
        n = grid.shape[0]
        F = np.fft.rfft(f)
        h = 2 * np.pi / n
        out[(0, 1)] = h * F[0].real / math.sqrt(2 * np.pi)
        for k in range(1, k_max + 1):
            out[(k, 1)] = h * F[k].real / math.sqrt(np.pi)
            out[(k, 2)] = -h * F[k].imag / math.sqrt(np.pi)
        return out
    n_pol, n_az = grid.shape
    F = np.fft.rfft(f.reshape(n_pol, n_az), axis=1) * (2 * np.pi / n_az)
    x = np.cos(grid.polar)
    _, wx = np.polynomial.legendre.leggauss(n_pol)
    for m in range(0, k_max + 1):
        P = _legendre_column(m, k_max, x)
        if m == 0:
            c = P @ (wx * F[:, 0].real) / math.sqrt(2 * np.pi)
            for l in range(0, k_max + 1):
                out[(l, 1)] = c[l]
            continue
        cc = P @ (wx * F[:, m].real) / math.sqrt(np.pi)
        cs = -(P @ (wx * F[:, m].imag)) / math.sqrt(np.pi)
        for l in range(m, k_max + 1):
            out[(l, 2 * m)] = cc[l - m]
            out[(l, 2 * m + 1)] = cs[l - m]
    return dict(sorted(out.items()))


def expand_boundary_field(grid: SurfaceGrid, samples, k_max):
    """Quadrature inner products of ``samples`` with every Y_{k,i}, k <= k_max.

    Returns a dict keyed by (k, i).
    """
    _require(grid, k_max)
    return _expand(grid, samples, k_max)


def synthesize(grid_or_points, coeffs, N=None):
    """Evaluate sum a_{k,i} Y_{k,i} on a grid or at explicit points."""
    if isinstance(grid_or_points, SurfaceGrid):
        N, pts = grid_or_points.N, grid_or_points.points
    else:
        pts = np.asarray(grid_or_points, dtype=float)
        N = pts.shape[-1] if N is None else N
    out = np.zeros(pts.shape[:-1])
    for key, a in coeffs.items():
        if a != 0.0:
            out = out + a * eval_harmonic(N, Mode(*key), pts)
    return out


@dataclass(frozen=True)
class harmonic_field:
    """A band-limited field on the unit sphere given by harmonic coefficients.

    Callable on direction vectors; ``grad`` returns the tangential gradient.
    """

    N: int
    coeffs: dict

    def __call__(self, points):
        return synthesize(points, self.coeffs, self.N)

    def grad(self, points):
        pts = np.asarray(points, dtype=float)
        out = np.zeros(pts.shape)
        for key, a in self.coeffs.items():
            if a != 0.0:
                out = out + a * eval_harmonic_grad(self.N, Mode(*key), pts)
        return out

    @property
    def k_max(self):
        return max((k for (k, _), a in self.coeffs.items() if a != 0.0), default=0)

    def scaled(self, c):
        return harmonic_field(self.N, {key: c * a for key, a in self.coeffs.items()})


# ---------------------------------------------------------------------------
# Tangential calculus (spectral)


def _spectral_dphi(f2, order=1):
    """Azimuthal derivative along the last axis via FFT."""
    n = f2.shape[-1]
    F = np.fft.rfft(f2, axis=-1)
    m = np.arange(F.shape[-1])
    mult = (1j * m) ** order
    if n % 2 == 0 and order % 2 == 1:
        mult[-1] = 0.0
    return np.fft.irfft(F * mult, n=n, axis=-1)


def _dpolar(grid, f):
    """Polar-angle derivative of a field on an N=3 grid, via harmonic expansion."""
    n_pol, n_az = grid.shape
    L = min(n_pol - 1, n_az // 2 - 1)
    coeffs = _expand(grid, f, L)
    x = np.cos(grid.polar)
    az = grid.azimuth
    out = np.zeros((n_pol, n_az))
    for m in range(0, L + 1):
        _, dP = _legendre_dtheta(m, L, x)
        if m == 0:
            a = np.array([coeffs[(l, 1)] for l in range(0, L + 1)])
            out += (a @ dP)[:, None] * (1 / math.sqrt(2 * np.pi))
            continue
        ac = np.array([coeffs[(l, 2 * m)] for l in range(m, L + 1)])
        as_ = np.array([coeffs[(l, 2 * m + 1)] for l in range(m, L + 1)])
        out += (ac @ dP)[:, None] * np.cos(m * az)[None, :] / math.sqrt(np.pi)
        out += (as_ @ dP)[:, None] * np.sin(m * az)[None, :] / math.sqrt(np.pi)
    return out


def _frames3(grid):
    n_pol, n_az = grid.shape
    th = grid.polar[:, None]
    az = grid.azimuth[None, :]
    e_pol = np.stack(
        np.broadcast_arrays(np.cos(th) * np.cos(az), np.cos(th) * np.sin(az), -np.sin(th)), axis=-1
    )
    e_az = np.stack(np.broadcast_arrays(-np.sin(az), np.cos(az), 0.0 * th), axis=-1)
    return e_pol, e_az, np.sin(th)


def tangential_gradient(grid, f):
    f = np.asarray(f, dtype=float)
    if grid.N == 2:
        return _spectral_dphi(f)[:, None] * np.stack([-np.sin(grid.azimuth), np.cos(grid.azimuth)], axis=-1)
    f2 = f.reshape(grid.shape)
    e_pol, e_az, st = _frames3(grid)
    g = _dpolar(grid, f2)[..., None] * e_pol + (_spectral_dphi(f2) / st)[..., None] * e_az
    return g.reshape(-1, 3)


def tangential_divergence(grid, w):
    """Tangential divergence of an ambient vector field sampled on the unit sphere.

    The normal part contributes H w.n with H = N-1 on the unit sphere.
    """
    w = np.asarray(w, dtype=float)
    wn = np.sum(w * grid.points, axis=-1)
    if grid.N == 2:
        e_t = np.stack([-np.sin(grid.azimuth), np.cos(grid.azimuth)], axis=-1)
        return _spectral_dphi(np.sum(w * e_t, axis=-1)) + wn
    e_pol, e_az, st = _frames3(grid)
    w3 = w.reshape(grid.shape + (3,))
    g = st * np.sum(w3 * e_pol, axis=-1)
    wa = np.sum(w3 * e_az, axis=-1)
    div = (_dpolar(grid, g) + _spectral_dphi(wa)) / st
    return div.ravel() + 2.0 * wn


def laplace_beltrami(grid, f):
    f = np.asarray(f, dtype=float)
    if grid.N == 2:
        return _spectral_dphi(f, order=2)
    f2 = f.reshape(grid.shape)
    _, _, st = _frames3(grid)
    g = st * _dpolar(grid, f2)
    out = _dpolar(grid, g) / st + _spectral_dphi(f2, order=2) / st**2
    return out.ravel()


def discrete_tangential(grid: SurfaceGrid, field):
    """Tangential operators applied to a sampled field.

    Scalar input gives ``grad_tau`` and ``laplace_beltrami``; vector input of
    shape (nodes, N) gives ``div_tau``.
    """
    field = np.asarray(field, dtype=float)
    if field.ndim == 2:
        return {"div_tau": tangential_divergence(grid, field)}
    return {"grad_tau": tangential_gradient(grid, field), "laplace_beltrami": laplace_beltrami(grid, field)}
