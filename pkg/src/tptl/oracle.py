"""
Finite-element oracle for the pulled-back two-phase problem on the unit disk.

A map ``Id + phi`` of the reference disk is never applied to the mesh. Instead
the weak problem is transported back:

    int A_phi grad v . grad psi = int (gamma - beta v) J_phi psi,
    A_phi = sigma J_phi (I + D phi)^{-1} (I + D phi)^{-T},

with sigma frozen on the reference phases (core r < R, shell r > R). The
energy of the mapped configuration is ``int A_phi grad v . grad v``.

Discretization: bilinear elements in (r, theta) on a polar tensor grid whose
radial edges contain r = R, a single node at the center, 2x2 Gauss points per
cell. Systems are solved by preconditioned conjugate gradients; the default
preconditioner is the exact inverse of the phi = 0 operator (FFT in theta,
one tridiagonal solve per Fourier mode in r).

Maps are passed as callables ``x -> (phi(x), Dphi(x))`` with x of shape (..., 2);
``None`` means the identity.
"""

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .geometry import build_constrained_perturbation
from .harmonics import sphere_area
from .radial import PhaseConfig, SolverError, radial_edges

__all__ = [
    "DiscreteField",
    "PolarGrid",
    "PolarOracle",
    "PathMap",
    "PulledBackCoefficients",
    "RadialMapOracle",
    "analytic_phi_derivatives",
    "assemble_pullback",
    "energy",
    "fd_shape_derivatives",
    "get_oracle",
    "linear_map",
    "mode_second_derivatives",
    "path_map",
    "path_velocity",
    "pcg",
    "richardson_derivatives",
    "solve_pulled_back",
]


# ---------------------------------------------------------------------------
# Maps


def linear_map(L):
    """phi(x) = L x."""
    L = np.asarray(L, dtype=float)

    def phi(x):
        x = np.asarray(x, dtype=float)
        return x @ L.T, np.broadcast_to(L, x.shape + (x.shape[-1],))

    return phi


class PathMap:
    """phi = Phi(t) of a PerturbationPath.

    The oracle recognizes this type and reuses the t-independent parts of the
    map at its quadrature points across evaluations.
    """

    def __init__(self, path, t):
        self.path = path
        self.t = float(t)

    def __call__(self, x, pre=None):
        return self.path.displacement(self.t, x, pre)


def path_map(path, t):
    return PathMap(path, t)


def path_velocity(path):
    """The first-order field h of a PerturbationPath, as a map."""
    return path.field


def _eval_map(phi, x):
    if phi is None:
        return np.zeros_like(x), np.zeros(x.shape + (x.shape[-1],))
    val, jac = phi(x)
    return np.asarray(val, dtype=float), np.asarray(jac, dtype=float)


# ---------------------------------------------------------------------------
# Grid and discrete fields


@dataclass(frozen=True)
class PolarGrid:
    """Polar tensor grid on the unit disk with a radial edge exactly at R.

    Node numbering: 0 is the center, then rings i = 1..n_r-1 (theta fastest),
    then the n_theta Dirichlet nodes on r = 1.
    """

    R: float
    edges: np.ndarray = field(repr=False)
    n_theta: int

    @property
    def n_r(self):
        return len(self.edges) - 1

    @property
    def n_interior(self):
        return 1 + (self.n_r - 1) * self.n_theta

    @property
    def n_nodes(self):
        return self.n_interior + self.n_theta

    @property
    def dtheta(self):
        return 2 * math.pi / self.n_theta

    @property
    def theta(self):
        return self.dtheta * np.arange(self.n_theta)

    def node(self, i, j):
        i = np.asarray(i)
        j = np.asarray(j) % self.n_theta
        return np.where(i == 0, 0, 1 + (i - 1) * self.n_theta + j)


def polar_grid(R, n_r, n_theta):
    edges = radial_edges(R, n_r)
    if not np.any(np.isclose(edges, R, rtol=0, atol=1e-14)):
        raise ValueError("radial grid must contain r = R")
    return PolarGrid(float(R), edges, int(n_theta))


@dataclass
class DiscreteField:
    """Nodal values of a scalar field on a PolarGrid (boundary nodes included)."""

    grid: PolarGrid
    values: np.ndarray
    info: dict = field(default_factory=dict)

    def rings(self):
        """Values as an (n_r + 1, n_theta) array; row 0 repeats the center value."""
        g = self.grid
        out = np.empty((g.n_r + 1, g.n_theta))
        out[0] = self.values[0]
        out[1:] = self.values[1:].reshape(g.n_r, g.n_theta)
        return out

    def __sub__(self, other):
        return DiscreteField(self.grid, self.values - other.values)

    def angular_spectrum(self):
        """Energy per angular Fourier mode m = 0..n_theta/2, weighted by r dr."""
        g = self.grid
        v = self.rings()
        c = np.fft.rfft(v, axis=1) / g.n_theta
        w = np.zeros(g.n_r + 1)
        h = np.diff(g.edges)
        w[:-1] += 0.5 * h * g.edges[:-1]
        w[1:] += 0.5 * h * g.edges[1:]
        e = np.abs(c) ** 2
        e[:, 1:] *= 2
        return w @ e

    def max_abs(self):
        return float(np.max(np.abs(self.values)))


# ---------------------------------------------------------------------------
# Pulled-back coefficients


@dataclass(frozen=True)
class PulledBackCoefficients:
    """A_phi (..., 2, 2) and J_phi (...) at the quadrature points."""

    A: np.ndarray
    J: np.ndarray


def _pullback(sigma, Dphi):
    """sigma J (I + Dphi)^{-1} (I + Dphi)^{-T} for 2x2 Jacobians."""
    m00 = 1 + Dphi[..., 0, 0]
    m01 = Dphi[..., 0, 1]
    m10 = Dphi[..., 1, 0]
    m11 = 1 + Dphi[..., 1, 1]
    J = m00 * m11 - m01 * m10
    if np.any(J <= 0):
        raise ValueError(f"degenerate map: min J = {float(np.min(J)):.3e}")
    # adj(M) adj(M)^T / J
    a00 = m11 * m11 + m01 * m01
    a01 = -(m11 * m10 + m01 * m00)
    a11 = m10 * m10 + m00 * m00
    A = np.empty(Dphi.shape)
    A[..., 0, 0] = sigma * a00 / J
    A[..., 0, 1] = A[..., 1, 0] = sigma * a01 / J
    A[..., 1, 1] = sigma * a11 / J
    tr = A[..., 0, 0] + A[..., 1, 1]
    det = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] ** 2
    lam_min = 0.5 * tr - np.sqrt(np.maximum(0.25 * tr * tr - det, 0.0))
    if np.any(lam_min <= 0):
        raise ValueError("pulled-back coefficient matrix is not positive definite")
    return A, J


def _pullback_derivatives(sigma, Dphi, Dzeta, Dxi=None):
    """A'(phi)zeta, J'(phi)zeta and, if Dxi is given, A''(phi)(xi, zeta), J''.

    With P = (I + Dphi)^{-1}, S = P P^T, X = P Dxi, Z = P Dzeta:
    J' = J tr Z, J'' = J (tr X tr Z - tr XZ), S' = -Z S - S Z^T,
    S'' = ZXS + XZS + XSZ^T + ZSX^T + SZ^TX^T + SX^TZ^T, A = sigma J S.
    """
    M = np.eye(2) + Dphi
    P = np.linalg.inv(M)
    J = np.linalg.det(M)
    S = P @ np.swapaxes(P, -1, -2)
    T = lambda a: np.swapaxes(a, -1, -2)  # noqa: E731
    Z = P @ Dzeta
    trZ = np.trace(Z, axis1=-2, axis2=-1)
    dJ = J * trZ
    dS = -Z @ S - S @ T(Z)
    s = sigma[..., None, None]
    dA = s * (dJ[..., None, None] * S + J[..., None, None] * dS)
    if Dxi is None:
        return dA, dJ
    X = P @ Dxi
    trX = np.trace(X, axis1=-2, axis2=-1)
    dJx = J * trX
    dSx = -X @ S - S @ T(X)
    ddJ = J * (trX * trZ - np.trace(X @ Z, axis1=-2, axis2=-1))
    ddS = Z @ X @ S + X @ Z @ S + X @ S @ T(Z) + Z @ S @ T(X) + S @ T(Z) @ T(X) + S @ T(X) @ T(Z)
    ddA = s * (
        ddJ[..., None, None] * S
        + dJx[..., None, None] * dS
        + dJ[..., None, None] * dSx
        + J[..., None, None] * ddS
    )
    return dA, dJ, ddA, ddJ


# ---------------------------------------------------------------------------
# Batched tridiagonal solves (Thomas), used by the Fourier preconditioner


class _Tridiagonal:
    """Factorization of many symmetric tridiagonal systems at once.

    ``diag`` has shape (n, M) and ``off`` shape (n - 1, M): column m is one system.
    """

    def __init__(self, diag, off):
        n = diag.shape[0]
        self.off = off
        self.den = np.empty_like(diag)
        self.cp = np.empty_like(off)
        self.den[0] = diag[0]
        for i in range(1, n):
            self.cp[i - 1] = off[i - 1] / self.den[i - 1]
            self.den[i] = diag[i] - off[i - 1] * self.cp[i - 1]

    def solve(self, b):
        n = b.shape[0]
        y = np.empty_like(b)
        y[0] = b[0] / self.den[0]
        for i in range(1, n):
            y[i] = (b[i] - self.off[i - 1] * y[i - 1]) / self.den[i]
        for i in range(n - 2, -1, -1):
            y[i] -= self.cp[i] * y[i + 1]
        return y


def pcg(matvec, b, precond, tol=1e-10, maxiter=2000, x0=None, restarts=3):
    """Preconditioned conjugate gradients to ||b - A x|| <= tol ||b||.

    The recursively updated residual can drift from the true one near machine
    precision; the iteration is restarted from the true residual when it does.
    Returns (x, iterations, relative residual); raises SolverError otherwise.
    """
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), 0, 0.0
    x = np.zeros_like(b) if x0 is None else x0.copy()
    it = 0
    for _ in range(restarts + 1):
        r = b - matvec(x) if (x0 is not None or it > 0) else b.copy()
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            return x, it, res
        z = precond(r)
        p = z.copy()
        rz = r @ z
        while res > tol:
            if it >= maxiter:
                raise SolverError(f"PCG did not converge in {maxiter} iterations", residual=res)
            Ap = matvec(p)
            alpha = rz / (p @ Ap)
            x += alpha * p
            r -= alpha * Ap
            it += 1
            res = np.linalg.norm(r) / bnorm
            if res <= tol:
                break
            z = precond(r)
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
    true_res = np.linalg.norm(b - matvec(x)) / bnorm
    if true_res > tol:
        raise SolverError("PCG residual stagnated above tolerance", residual=true_res)
    return x, it, true_res


# ---------------------------------------------------------------------------
# The oracle


_GAUSS = np.array([0.5 - 0.5 / math.sqrt(3), 0.5 + 0.5 / math.sqrt(3)])


@dataclass
class _System:
    K: sparse.csr_matrix  # interior x interior
    K_bi: sparse.csr_matrix  # boundary rows, interior columns
    F: np.ndarray  # interior load
    F_b: np.ndarray
    coeffs: PulledBackCoefficients


class PolarOracle:
    """Assembly and solves for one (cfg, grid) pair; reusable across maps."""

    def __init__(self, cfg: PhaseConfig, n_r=256, n_theta=256, tol=1e-10, preconditioner="fourier"):
        if cfg.N != 2:
            raise ValueError("the full angular oracle is two-dimensional; use RadialMapOracle for N = 3")
        if preconditioner not in ("fourier", "jacobi"):
            raise ValueError(f"unknown preconditioner {preconditioner!r}")
        self.cfg = cfg
        self.grid = polar_grid(cfg.R, n_r, n_theta)
        self.tol = tol
        self.preconditioner = preconditioner
        self._pre = {}
        self._setup_geometry()
        self._setup_pattern()
        self._base = self.assemble_system(None)
        if preconditioner == "fourier":
            self._setup_fourier()
        self._v0 = None

    # -- setup -------------------------------------------------------------
    def _setup_geometry(self):
        g = self.grid
        nr, nt = g.n_r, g.n_theta
        r0, r1 = g.edges[:-1], g.edges[1:]
        self.hr = np.repeat(r1 - r0, nt)  # per element, element index e = i * nt + j
        mid = 0.5 * (r0 + r1)
        self.sigma_el = np.repeat(np.where(mid < g.R, self.cfg.sigma_c, 1.0), nt)
        # quadrature points, q = 2 p + l with s = GAUSS[p], tau = GAUSS[l]
        s = np.repeat(_GAUSS, 2)
        tau = np.tile(_GAUSS, 2)
        rq = r0[:, None] + (r1 - r0)[:, None] * s[None, :]  # (nr, 4)
        tq = g.theta[:, None] + g.dtheta * tau[None, :]  # (nt, 4)
        self.rq = np.repeat(rq[:, None, :], nt, axis=1).reshape(-1, 4)
        self.tq = np.repeat(tq[None, :, :], nr, axis=0).reshape(-1, 4)
        self.xq = np.stack([self.rq * np.cos(self.tq), self.rq * np.sin(self.tq)], axis=-1)
        self.er = np.stack([np.cos(self.tq), np.sin(self.tq)], axis=-1)
        self.et = np.stack([-np.sin(self.tq), np.cos(self.tq)], axis=-1)
        # local nodes a: (i, j), (i, j+1), (i+1, j), (i+1, j+1)
        Ns = np.stack([1 - s, 1 - s, s, s], axis=1)  # (4q, 4a) radial factor
        Nt = np.stack([1 - tau, tau, 1 - tau, tau], axis=1)
        dNs = np.array([-1.0, -1.0, 1.0, 1.0])[None, :] * np.ones((4, 1))
        dNt = np.array([-1.0, 1.0, -1.0, 1.0])[None, :] * np.ones((4, 1))
        self.Nq = Ns * Nt  # (4q, 4a)
        Gr = dNs * Nt
        Gt = Ns * dNt
        # element matrix = sum_q c_rr Gr Gr^T + c_rt (Gr Gt^T + Gt Gr^T) + c_tt Gt Gt^T + c_m N N^T
        basis = []
        for q in range(4):
            basis.append(np.outer(Gr[q], Gr[q]).ravel())
            basis.append((np.outer(Gr[q], Gt[q]) + np.outer(Gt[q], Gr[q])).ravel())
            basis.append(np.outer(Gt[q], Gt[q]).ravel())
            basis.append(np.outer(self.Nq[q], self.Nq[q]).ravel())
        self._basis = np.array(basis)  # (16, 16)
        # boundary edge quadrature (r = 1)
        tb = g.theta[:, None] + g.dtheta * _GAUSS[None, :]
        self.xb = np.stack([np.cos(tb), np.sin(tb)], axis=-1)
        self.etb = np.stack([-np.sin(tb), np.cos(tb)], axis=-1)

    def _setup_pattern(self):
        g = self.grid
        nr, nt = g.n_r, g.n_theta
        i = np.repeat(np.arange(nr), nt)
        j = np.tile(np.arange(nt), nr)
        nodes = np.stack([g.node(i, j), g.node(i, j + 1), g.node(i + 1, j), g.node(i + 1, j + 1)], axis=1)
        # the outer ring has node ids n_interior .. n_nodes-1 under g.node
        self.nodes = nodes
        rows = np.repeat(nodes, 4, axis=1).ravel()
        cols = np.tile(nodes, (1, 4)).ravel()
        nI = g.n_interior
        self._scatter = {}
        for name, mrow in (("II", rows < nI), ("BI", rows >= nI)):
            mask = mrow & (cols < nI)
            rr = rows[mask] - (0 if name == "II" else nI)
            cc = cols[mask]
            nrow = nI if name == "II" else nt
            key = rr.astype(np.int64) * nI + cc
            uniq, inv = np.unique(key, return_inverse=True)
            indptr = np.concatenate([[0], np.cumsum(np.bincount(uniq // nI, minlength=nrow))])
            self._scatter[name] = (mask, inv, uniq % nI, indptr, nrow)
        self._load_rows = nodes.ravel()

    def _setup_fourier(self):
        g = self.grid
        nr, nt, dt = g.n_r, g.n_theta, g.dtheta
        cfg = self.cfg
        h = np.diff(g.edges)
        sig = np.where(0.5 * (g.edges[:-1] + g.edges[1:]) < g.R, cfg.sigma_c, 1.0)
        a_d = np.zeros(nr + 1)
        a_o = np.zeros(nr)
        b_d = np.zeros(nr + 1)
        b_o = np.zeros(nr)
        phi = np.stack([1 - _GAUSS, _GAUSS])  # (2 local, 2 points)
        for e in range(nr):
            rp = g.edges[e] + h[e] * _GAUSS
            stiff = sig[e] / h[e] * np.mean(rp)
            mass = cfg.beta * h[e] / 2 * (phi * rp) @ phi.T
            bl = sig[e] * h[e] / 2 * (phi / rp) @ phi.T
            a_d[e] += stiff + mass[0, 0]
            a_d[e + 1] += stiff + mass[1, 1]
            a_o[e] += -stiff + mass[0, 1]
            b_d[e] += bl[0, 0]
            b_d[e + 1] += bl[1, 1]
            b_o[e] += bl[0, 1]
        m = np.arange(nt // 2 + 1)
        mu = dt / 6 * (4 + 2 * np.cos(m * dt))
        lam = (2 - 2 * np.cos(m * dt)) / dt
        # unknown 0 is the center (mode 0 only), 1..nr-1 the rings
        diag = a_d[:nr, None] * mu[None, :] + b_d[:nr, None] * lam[None, :]
        off = a_o[: nr - 1, None] * mu[None, :] + b_o[: nr - 1, None] * lam[None, :]
        diag[0, 0] = a_d[0] * dt
        off[0, 0] = a_o[0] * dt
        diag[0, 1:] = 1.0
        off[0, 1:] = 0.0
        self._tri = _Tridiagonal(diag, off)

    # -- preconditioners ----------------------------------------------------
    def _fourier_apply(self, r):
        g = self.grid
        nt = g.n_theta
        ring = np.fft.rfft(r[1:].reshape(g.n_r - 1, nt), axis=1) / nt
        rhs = np.empty((g.n_r, ring.shape[1]), dtype=complex)
        rhs[0] = 0
        rhs[0, 0] = r[0] / nt
        rhs[1:] = ring
        y = self._tri.solve(rhs)
        out = np.empty_like(r)
        out[0] = y[0, 0].real
        out[1:] = np.fft.irfft(y[1:] * nt, n=nt, axis=1).ravel()
        return out

    def _precond(self, K):
        if self.preconditioner == "fourier":
            return self._fourier_apply
        d = K.diagonal()
        return lambda r: r / d

    # -- assembly -------------------------------------------------------------
    def _csr(self, name, flat):
        mask, inv, cols, indptr, nrow = self._scatter[name]
        data = np.bincount(inv, weights=flat[mask], minlength=len(cols))
        return sparse.csr_matrix((data, cols, indptr), shape=(nrow, self.grid.n_interior))

    def _matrix_flat(self, A, J_beta):
        """Element matrices for coefficient A (ne, 4, 2, 2) and mass weight J_beta (ne, 4)."""
        g = self.grid
        er, et, r = self.er, self.et, self.rq
        Arr = np.einsum("eqi,eqij,eqj->eq", er, A, er)
        Art = np.einsum("eqi,eqij,eqj->eq", er, A, et)
        Att = np.einsum("eqi,eqij,eqj->eq", et, A, et)
        hr = self.hr[:, None]
        dt = g.dtheta
        coef = np.empty((A.shape[0], 4, 4))
        coef[:, :, 0] = dt / (4 * hr) * r * Arr
        coef[:, :, 1] = 0.25 * Art
        coef[:, :, 2] = hr / (4 * dt) * Att / r
        coef[:, :, 3] = hr * dt / 4 * r * J_beta
        return (coef.reshape(-1, 16) @ self._basis).ravel()

    def _load(self, Jw):
        """Nodal integrals of Jw times the hat functions, Jw given at quadrature points."""
        g = self.grid
        w = self.hr[:, None] * g.dtheta / 4 * self.rq * Jw
        flat = (w @ self.Nq).ravel()
        F = np.bincount(self._load_rows, weights=flat, minlength=g.n_nodes)
        return F[: g.n_interior], F[g.n_interior :]

    def _map_at_quadrature(self, phi):
        if isinstance(phi, PathMap):
            key = id(phi.path)
            hit = self._pre.get(key)
            if hit is None or hit[0] is not phi.path:
                self._pre.clear()
                hit = self._pre[key] = (phi.path, phi.path.precompute(self.xq))
            return phi(self.xq, hit[1])
        return _eval_map(phi, self.xq)

    def pullback(self, phi) -> PulledBackCoefficients:
        _, D = self._map_at_quadrature(phi)
        A, J = _pullback(self.sigma_el[:, None], D)
        return PulledBackCoefficients(A, J)

    def assemble_system(self, phi) -> _System:
        co = self.pullback(phi)
        flat = self._matrix_flat(co.A, self.cfg.beta * co.J)
        F, F_b = self._load(self.cfg.gamma * co.J)
        return _System(self._csr("II", flat), self._csr("BI", flat), F, F_b, co)

    def _derivative_system(self, phi, zeta, xi=None):
        """Matrices and loads of the first (and second) derivatives in phi."""
        _, D = _eval_map(phi, self.xq)
        _, Dz = _eval_map(zeta, self.xq)
        sig = self.sigma_el[:, None]
        if xi is None:
            dA, dJ = _pullback_derivatives(sig, D, Dz)
            return self._csr("II", self._matrix_flat(dA, self.cfg.beta * dJ)), self._load(self.cfg.gamma * dJ)[0]
        _, Dx = _eval_map(xi, self.xq)
        _, _, ddA, ddJ = _pullback_derivatives(sig, D, Dz, Dx)
        return self._csr("II", self._matrix_flat(ddA, self.cfg.beta * ddJ)), self._load(self.cfg.gamma * ddJ)[0]

    # -- solves ---------------------------------------------------------------
    def solve_system(self, system: _System, rhs=None, x0=None, tol=None):
        K = system.K
        b = system.F if rhs is None else rhs
        x, it, res = pcg(K.dot, b, self._precond(K), tol=self.tol if tol is None else tol, x0=x0)
        return x, it, res

    def _field(self, x, **info):
        vals = np.zeros(self.grid.n_nodes)
        vals[: self.grid.n_interior] = x
        return DiscreteField(self.grid, vals, dict(info))

    def solve(self, phi=None, tol=None) -> DiscreteField:
        system = self.assemble_system(phi)
        x, it, res = self.solve_system(system, tol=tol)
        f = self._field(x, iterations=it, residual=res)
        f.info["energy"] = float(x @ (system.K @ x))
        f.info["system"] = system
        return f

    def energy(self, phi=None) -> float:
        if self.cfg.beta != 0:
            raise ValueError("the energy functional is defined for beta = 0")
        return self.solve(phi).info["energy"]

    # -- boundary quantities --------------------------------------------------
    def boundary_measure(self, phi):
        """Mapped boundary measure of each outer node: int psi_j |d(x+phi)/dtheta| dtheta."""
        _, D = _eval_map(phi, self.xb)
        T = self.etb + np.einsum("jqab,jqb->jqa", D, self.etb)
        speed = np.linalg.norm(T, axis=-1)  # (nt, 2)
        dt = self.grid.dtheta
        left = dt / 2 * (speed[:, 0] * (1 - _GAUSS[0]) + speed[:, 1] * (1 - _GAUSS[1]))
        right = dt / 2 * (speed[:, 0] * _GAUSS[0] + speed[:, 1] * _GAUSS[1])
        return left + np.roll(right, 1)

    def integral(self, f: DiscreteField, J):
        """int v J over the reference disk with the assembly quadrature."""
        vq = f.values[self.nodes] @ self.Nq.T  # (ne, 4)
        w = self.hr[:, None] * self.grid.dtheta / 4 * self.rq
        return float(np.sum(w * vq * J))

    def volume(self, J):
        w = self.hr[:, None] * self.grid.dtheta / 4 * self.rq
        return float(np.sum(w * J))

    def boundary_flux(self, f: DiscreteField, system: _System):
        """Consistent flux int_{mapped boundary} d_n u psi_j for each outer node."""
        x = f.values[: self.grid.n_interior]
        return system.K_bi @ x - system.F_b

    # -- derivatives ----------------------------------------------------------
    def analytic_phi_derivatives(self, phi, zeta, xi):
        """E'(phi)zeta and E''(phi)(xi, zeta) from differentiated discrete systems."""
        if self.cfg.beta != 0:
            raise ValueError("the energy functional is defined for beta = 0")
        sysm = self.assemble_system(phi)
        K = sysm.K
        v, _, _ = self.solve_system(sysm)
        Kz, Fz = self._derivative_system(phi, zeta)
        Kx, Fx = self._derivative_system(phi, xi)
        Kxz, Fxz = self._derivative_system(phi, zeta, xi)
        vz, _, _ = self.solve_system(sysm, Fz - Kz @ v)
        vx, _, _ = self.solve_system(sysm, Fx - Kx @ v)
        vxz, _, _ = self.solve_system(sysm, Fxz - Kxz @ v - Kx @ vz - Kz @ vx)
        Kv = K @ v
        d1 = v @ (Kz @ v) + 2 * vz @ Kv
        terms = (
            v @ (Kxz @ v),
            2 * v @ (Kx @ vz),
            2 * v @ (Kz @ vx),
            2 * vx @ (K @ vz),
            2 * vxz @ Kv,
        )
        return {"d1": float(d1), "d2": float(sum(terms)), "terms": tuple(float(t) for t in terms)}


@functools.lru_cache(maxsize=8)
def get_oracle(cfg: PhaseConfig, n_r=256, n_theta=256, tol=1e-10, preconditioner="fourier") -> PolarOracle:
    """Cached PolarOracle; building one precomputes the sparsity pattern."""
    return PolarOracle(cfg, n_r, n_theta, tol, preconditioner)


# ---------------------------------------------------------------------------
# Radial maps in any dimension


class RadialMapOracle:
    """Pulled-back problem for radial maps y = rho(r) x/r, in any N.

    For such maps A_rr = sigma J / rho'^2 and J = rho' (rho / r)^{N-1}; radial
    states stay radial, so a 1D linear-element solve on the same kind of
    radial grid suffices.
    """

    def __init__(self, cfg: PhaseConfig, n=1024):
        self.cfg = cfg
        self.edges = radial_edges(cfg.R, n)
        h = np.diff(self.edges)
        self.h = h
        self.rq = self.edges[:-1, None] + h[:, None] * _GAUSS[None, :]
        mid = 0.5 * (self.edges[:-1] + self.edges[1:])
        self.sigma = np.where(mid < cfg.R, cfg.sigma_c, 1.0)
        self.area = sphere_area(cfg.N)

    def solve(self, rho=None):
        """rho: callable r -> (rho(r), rho'(r)); None is the identity."""
        cfg, N = self.cfg, self.cfg.N
        r = self.rq
        if rho is None:
            p, dp = r, np.ones_like(r)
        else:
            p, dp = rho(r)
        if np.any(dp <= 0) or np.any(p <= 0):
            raise ValueError("radial map must be increasing and positive")
        J = dp * (p / r) ** (N - 1)
        a = self.sigma[:, None] * J / dp**2
        w = 0.5 * self.h[:, None] * r ** (N - 1) * self.area
        phi = np.stack([1 - _GAUSS, _GAUSS])  # (local, q)
        n = len(self.edges)
        stiff = np.sum(w * a, axis=1) / self.h**2
        mass = cfg.beta * np.einsum("eq,aq,bq->eab", w * J, phi, phi)
        load = cfg.gamma * np.einsum("eq,aq->ea", w * J, phi)
        diag = np.zeros(n)
        off = np.zeros(n - 1)
        diag[:-1] += stiff + mass[:, 0, 0]
        diag[1:] += stiff + mass[:, 1, 1]
        off += -stiff + mass[:, 0, 1]
        F = np.zeros(n)
        F[:-1] += load[:, 0]
        F[1:] += load[:, 1]
        K = sparse.diags([off[:-1], diag[:-1], off[:-1]], [-1, 0, 1], format="csc")
        v = np.zeros(n)
        v[:-1] = spsolve(K, F[:-1])
        return v, float(v[:-1] @ (K @ v[:-1]))

    def energy(self, rho=None):
        if self.cfg.beta != 0:
            raise ValueError("the energy functional is defined for beta = 0")
        return self.solve(rho)[1]


# ---------------------------------------------------------------------------
# Finite differences with Richardson extrapolation


def _stencils(e, h):
    d1 = (-e(2 * h) + 8 * e(h) - 8 * e(-h) + e(-2 * h)) / (12 * h)
    d2 = (-e(2 * h) + 16 * e(h) - 30 * e(0.0) + 16 * e(-h) - e(-2 * h)) / (12 * h * h)
    return d1, d2


def richardson_derivatives(e, steps=(1e-2, 5e-3)):
    """First and second derivatives at 0 of a scalar function e(t).

    Five-point central stencils at each step (error O(h^4)), combined by
    Richardson extrapolation over consecutive halvings. With three or more
    steps, growth of successive differences signals round-off domination.
    """
    steps = sorted((float(s) for s in steps), reverse=True)
    for a, b in zip(steps, steps[1:]):
        if not math.isclose(a, 2 * b, rel_tol=1e-12):
            raise ValueError("steps must halve successively")
    cache = {}

    def ev(t):
        key = round(t, 15)
        if key not in cache:
            cache[key] = e(t)
        return cache[key]

    d1 = []
    d2 = []
    for h in steps:
        a, b = _stencils(ev, h)
        d1.append(a)
        d2.append(b)
    out = {"e0": ev(0.0), "steps": steps, "d1_seq": d1, "d2_seq": d2, "evaluations": len(cache)}
    for name, seq in (("d1", d1), ("d2", d2)):
        if len(seq) == 1:
            out[name], out[name + "_err"] = seq[0], float("nan")
            continue
        diffs = [abs(x - y) for x, y in zip(seq, seq[1:])]
        if len(diffs) >= 2 and any(d2_ > d1_ for d1_, d2_ in zip(diffs, diffs[1:])) and diffs[-1] > 1e-13 * max(1.0, abs(seq[-1])):
            raise ValueError(f"step too small: non-monotone Richardson sequence for {name} ({diffs})")
        out[name] = (16 * seq[-1] - seq[-2]) / 15
        out[name + "_err"] = diffs[-1] / 15
    return out


# ---------------------------------------------------------------------------
# Module-level operations


def assemble_pullback(phi, points, sigma=1.0) -> PulledBackCoefficients:
    """A_phi and J_phi at arbitrary points (..., 2); sigma may be an array."""
    pts = np.asarray(points, dtype=float)
    _, D = _eval_map(phi, pts)
    A, J = _pullback(np.broadcast_to(sigma, pts.shape[:-1]), D)
    return PulledBackCoefficients(A, J)


def solve_pulled_back(cfg: PhaseConfig, phi=None, n_r=256, n_theta=256, tol=1e-10) -> DiscreteField:
    return get_oracle(cfg, n_r, n_theta, tol).solve(phi)


def energy(cfg: PhaseConfig, phi=None, n_r=256, n_theta=256, tol=1e-10) -> float:
    return get_oracle(cfg, n_r, n_theta, tol).energy(phi)


def fd_shape_derivatives(cfg: PhaseConfig, path, steps=(1e-2, 5e-3), n_r=256, n_theta=256, tol=1e-10):
    """e'(0), e''(0) of e(t) = E(mapped configuration) along a PerturbationPath."""
    if cfg.N != 2:
        raise ValueError("FD shape derivatives need the two-dimensional oracle")
    orc = get_oracle(cfg, n_r, n_theta, tol)
    return richardson_derivatives(lambda t: orc.energy(path_map(path, t) if t else None), steps)


def analytic_phi_derivatives(cfg: PhaseConfig, phi, zeta, xi, n_r=256, n_theta=256, tol=1e-10):
    return get_oracle(cfg, n_r, n_theta, tol).analytic_phi_derivatives(phi, zeta, xi)


def mode_second_derivatives(cfg: PhaseConfig, k: int, n_r=256, n_theta=256, steps=(1e-2, 5e-3), tol=1e-10):
    """FD estimates of (e_minus, e_plus, e_res) for degree k from three constrained paths.

    The paths carry Y_{k,1} on the interface, on the outer sphere, and on
    both; e_res is recovered from the mixed run. For k = 1 the outer field is
    a translation, so the barycenter correction is switched off.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    Y = {(k, 1): 1.0}
    keep_bar = k > 1
    paths = {
        "inner": build_constrained_perturbation(Y, {}, cfg),
        "outer": build_constrained_perturbation({}, Y, cfg, preserve_barycenter=keep_bar),
        "mixed": build_constrained_perturbation(Y, Y, cfg, preserve_barycenter=keep_bar),
    }
    runs = {name: fd_shape_derivatives(cfg, p, steps, n_r, n_theta, tol) for name, p in paths.items()}
    em, ep = runs["inner"]["d2"], runs["outer"]["d2"]
    return {
        "k": k,
        "e_minus": em,
        "e_plus": ep,
        "e_res": runs["mixed"]["d2"] - em - ep,
        "paths": {name: r["d2"] for name, r in runs.items()},
        "first": {name: r["d1"] for name, r in runs.items()},
        "errors": {name: r["d2_err"] for name, r in runs.items()},
        "e0": runs["inner"]["e0"],
    }
