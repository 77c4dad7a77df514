"""H0 eigenbasis, Weyl quantization, truncated Moyal products and Lie transforms.

The eigenproblem is discretized with the sinc discrete-variable
representation on a uniform grid. In that representation D = -i d/dx and
D^2 are dense Toeplitz matrices, functions of x are diagonal, and the
eigenvectors are orthonormal columns, so operator matrices in the
eigenbasis are ``V^T A V``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from math import comb, factorial

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import eigh, expm
from scipy.signal import convolve2d

from .classical import turning_point
from .errors import AccuracyError, ContractViolation, QPSmoothError, ResolutionError
from .potentials import PotentialModel
from .symbols import GridSymbol, SymbolGrade, grade_compose

HERMITIAN_TOL = 1e-10


@dataclass
class EigenBasis:
    potential: PotentialModel
    N: int
    grid: np.ndarray
    lambdas: np.ndarray
    vectors: np.ndarray  # (n_grid, N), orthonormal columns

    @property
    def dx(self):
        return float(self.grid[1] - self.grid[0])

    @cached_property
    def kinetic(self):
        return sinc_kinetic(self.grid.size, self.dx)

    @cached_property
    def derivative(self):
        return sinc_derivative(self.grid.size, self.dx)

    def to_basis(self, A):
        V = self.vectors
        return V.T @ A @ V

    def wavefunction(self, j):
        """phi_j sampled on the grid, normalized in L^2."""
        return self.vectors[:, j] / math.sqrt(self.dx)


def sinc_kinetic(n, dx):
    """Matrix of -d^2/dx^2 in the sinc DVR."""
    k = np.arange(n)
    d = k[:, None] - k[None, :]
    with np.errstate(divide="ignore"):
        T = 2.0 * (-1.0) ** np.abs(d) / (dx * dx * d * d)
    T[np.diag_indices(n)] = math.pi**2 / (3.0 * dx * dx)
    return T


def sinc_derivative(n, dx):
    """Matrix of D = -i d/dx in the sinc DVR (Hermitian)."""
    k = np.arange(n)
    d = k[:, None] - k[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        Dr = (-1.0) ** np.abs(d) / (dx * d)
    Dr[np.diag_indices(n)] = 0.0
    return -1j * Dr


def _solve(p, N, extent, n_grid):
    x = np.linspace(-extent, extent, n_grid)
    H = sinc_kinetic(n_grid, x[1] - x[0]) + np.diag(p(x))
    lam, vec = eigh(H, subset_by_index=[0, N - 1])
    return x, lam, vec


def default_extent(p: PotentialModel, N):
    """Twice the turning point of a Weyl-law guess for the N-th level, plus margin."""
    lam_guess = 2.0 * (N + 1.0) ** (2.0 * p.l / (p.l + 1.0)) + 2.0
    return 1.3 * turning_point(p, lam_guess) + 3.0


def h0_eigensystem(p: PotentialModel, N: int, extent: float | None = None, n_grid: int | None = None,
                   check=True) -> EigenBasis:
    """Lowest N eigenpairs of -d_xx + V; the upper half is discarded.

    The retained eigenvalues are cross-checked against a 1.5x finer grid
    and must agree to 1e-7 relative.
    """
    if N < 2:
        raise QPSmoothError("need N >= 2")
    if extent is None:
        extent = default_extent(p, N)
    if n_grid is None:
        n_grid = 4 * N
        dx_needed = math.pi / math.sqrt(60.0 * (N + 10) ** (2.0 * p.l / (p.l + 1.0)))
        n_grid = max(n_grid, int(2 * extent / dx_needed) + 1)
    if n_grid < 4 * N:
        raise ResolutionError("need n_grid >= 4N", n_grid=n_grid, N=N)
    x, lam, vec = _solve(p, N, extent, n_grid)
    keep = N // 2
    if lam[N - 1] > p(extent):
        raise ResolutionError("extent does not cover the turning point of the top level",
                              extent=extent, top=float(lam[N - 1]))
    if check:
        _, lam2, _ = _solve(p, N, extent, int(1.5 * n_grid))
        dev = float(np.max(np.abs(lam2[:keep] - lam[:keep]) / np.abs(lam[:keep])))
        if dev > 1e-7:
            raise ResolutionError("two-resolution spectra disagree", deviation=dev)
    return EigenBasis(p, keep, x, lam[:keep], vec[:, :keep])


# ------------------------------------------------------------------ operators

@dataclass
class OperatorMatrix:
    entries: np.ndarray
    lambdas: np.ndarray | None = None

    @property
    def dim(self):
        return self.entries.shape[0]

    @property
    def hermitian_defect(self):
        M = self.entries
        return float(np.linalg.norm(M - M.conj().T, 2) / max(np.linalg.norm(M, 2), 1e-300))

    @property
    def hermitian(self):
        return self.hermitian_defect <= HERMITIAN_TOL

    def __matmul__(self, other):
        return OperatorMatrix(self.entries @ other.entries, self.lambdas)

    def block(self, n):
        return self.entries[:n, :n]

    def save(self, path):
        # a file handle keeps savez from appending ".npz"
        with open(path, "wb") as fh:
            np.savez(fh, format=np.array("qpsmooth.OperatorMatrix"), dim=self.dim,
                     lambdas=np.array([]) if self.lambdas is None else self.lambdas,
                     entries=np.ascontiguousarray(self.entries, dtype=complex))

    @classmethod
    def load(cls, path):
        with np.load(path) as f:
            if str(f["format"]) != "qpsmooth.OperatorMatrix":
                raise QPSmoothError("not an OperatorMatrix file")
            lam = f["lambdas"]
            M = f["entries"]
            if M.shape != (int(f["dim"]), int(f["dim"])):
                raise QPSmoothError("dimension mismatch in file")
            return cls(M, lam if lam.size else None)


class PolySymbol:
    """Polynomial symbol sum_{a,b} C[a, b] x^a xi^b."""

    def __init__(self, coef):
        self.coef = np.atleast_2d(np.asarray(coef, dtype=complex))

    @classmethod
    def monomial(cls, a, b, c=1.0):
        C = np.zeros((a + 1, b + 1), dtype=complex)
        C[a, b] = c
        return cls(C)

    def __call__(self, x, xi):
        return np.polynomial.polynomial.polyval2d(x, xi, self.coef)

    def __add__(self, other):
        A, B = self.coef, other.coef
        shape = (max(A.shape[0], B.shape[0]), max(A.shape[1], B.shape[1]))
        C = np.zeros(shape, dtype=complex)
        C[: A.shape[0], : A.shape[1]] += A
        C[: B.shape[0], : B.shape[1]] += B
        return PolySymbol(C)

    def __sub__(self, other):
        return self + other * -1.0

    def __mul__(self, other):
        if isinstance(other, PolySymbol):
            return PolySymbol(convolve2d(self.coef, other.coef))
        return PolySymbol(self.coef * other)

    __rmul__ = __mul__

    def d(self, kx, kxi):
        C = self.coef
        if kx:
            C = np.polynomial.polynomial.polyder(C, kx, axis=0) if C.shape[0] > kx else np.zeros((1, C.shape[1]))
        if kxi:
            C = np.polynomial.polynomial.polyder(C, kxi, axis=1) if C.shape[1] > kxi else np.zeros((C.shape[0], 1))
        return PolySymbol(C)

    def is_zero(self, tol=0.0):
        return bool(np.all(np.abs(self.coef) <= tol))


@dataclass
class XiPolySymbol:
    """Symbol sum_b a_b(x) xi^b with callables a_b."""

    terms: dict  # b -> callable of x

    def __call__(self, x, xi):
        return sum(np.asarray(a(x)) * np.asarray(xi) ** b for b, a in self.terms.items())


def _D_power(basis: EigenBasis, b):
    """D^b on the grid, using the DVR kinetic matrix for D^2."""
    n = basis.grid.size
    out = np.eye(n, dtype=complex)
    for _ in range(b // 2):
        out = out @ basis.kinetic
    if b % 2:
        out = out @ basis.derivative
    return out


def _quantize_poly(g: PolySymbol, basis: EigenBasis):
    x = basis.grid
    n = x.size
    A = np.zeros((n, n), dtype=complex)
    for a, b in zip(*np.nonzero(g.coef)):
        c = g.coef[a, b]
        Db = _D_power(basis, b)
        for k in range(a + 1):
            A += c * comb(a, k) / 2.0**a * (x**k)[:, None] * Db * (x ** (a - k))[None, :]
    return A


def _quantize_xipoly(g: XiPolySymbol, basis: EigenBasis):
    x = basis.grid
    n = x.size
    A = np.zeros((n, n), dtype=complex)
    for b, fa in g.terms.items():
        av = np.broadcast_to(np.asarray(fa(x), dtype=complex), x.shape)
        for j in range(b + 1):
            A += comb(b, j) / 2.0**b * _D_power(basis, j) @ (av[:, None] * _D_power(basis, b - j))
    return A


def _midpoint_kernel(g, basis: EigenBasis, Q):
    """dx * (2 pi)^-1 int e^{i (x_a - x_b) xi} g((x_a + x_b)/2, xi) dxi over the Nyquist band."""
    x, dx = basis.grid, basis.dx
    n = x.size
    L = math.pi / dx
    xi = -L + (np.arange(Q) + 0.5) * (2.0 * L / Q)
    wq = 2.0 * L / Q
    mids = x[0] + 0.5 * dx * np.arange(2 * n - 1)
    seps = dx * np.arange(-(n - 1), n)
    Gm = np.broadcast_to(np.asarray(g(mids[:, None], xi[None, :]), dtype=complex), (mids.size, Q))
    F = np.exp(1j * xi[:, None] * seps[None, :]) * wq / (2.0 * math.pi)  # (Q, S)
    K = Gm @ F  # (M, S)
    ia, ib = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return dx * K[ia + ib, ia - ib + n - 1]


def _grid_callable(g: GridSymbol):
    interp = RegularGridInterpolator((g.x_nodes, g.xi_nodes), g.values, method="cubic",
                                     bounds_error=False, fill_value=0.0)

    def f(x, xi):
        x, xi = np.broadcast_arrays(x, xi)
        return interp(np.stack([x.ravel(), xi.ravel()], -1)).reshape(x.shape)

    return f


def weyl_quantize(g, basis: EigenBasis, Q=None, tol=1e-6, return_grid=False) -> OperatorMatrix:
    """Matrix of g^w in the eigenbasis.

    Accepts a PolySymbol or XiPolySymbol (exact symmetrized products), a
    GridSymbol or any callable g(x, xi) (midpoint kernel, Nyquist-band
    quadrature in xi). For the quadrature path the result is compared with
    a run at half the number of xi nodes and AccuracyError is raised when
    the relative change exceeds ``tol``.
    """
    if isinstance(g, PolySymbol):
        A = _quantize_poly(g, basis)
    elif isinstance(g, XiPolySymbol):
        A = _quantize_xipoly(g, basis)
    else:
        f = _grid_callable(g) if isinstance(g, GridSymbol) else g
        Q = Q or 4 * basis.grid.size
        A = _midpoint_kernel(f, basis, Q)
        M1 = basis.to_basis(A)
        M0 = basis.to_basis(_midpoint_kernel(f, basis, Q // 2))
        err = float(np.linalg.norm(M1 - M0) / max(np.linalg.norm(M1), 1e-300))
        if err > tol:
            raise AccuracyError("xi quadrature not converged", achieved=err, tol=tol)
    if return_grid:
        return A
    return OperatorMatrix(basis.to_basis(A), basis.lambdas)


# --------------------------------------------------------------------- Moyal

def _moyal_coefficient(j, k1):
    k2 = j - k1
    return 0.5**k1 * (-0.5) ** k2 / (factorial(k1) * factorial(k2))


def moyal_terms(a, b, J):
    """[c_0, ..., c_J] for PolySymbols (exact) with D = -i d/dx."""
    out = []
    for j in range(J + 1):
        c = PolySymbol(np.zeros((1, 1)))
        for k1 in range(j + 1):
            k2 = j - k1
            da = a.d(k2, k1) * (-1j) ** k2
            db = b.d(k1, k2) * (-1j) ** k1
            c = c + da * db * _moyal_coefficient(j, k1)
        out.append(c)
    return out


def moyal_star_truncated(a, b, J, l=None):
    """sum_{j <= J} c_j of a # b.

    PolySymbol inputs are handled exactly; GridSymbol inputs use grid finite
    differences and carry the composed grade of the leading term.
    """
    if J > 4 or J < 0:
        raise QPSmoothError("0 <= J <= 4 required", J=J)
    if isinstance(a, PolySymbol) and isinstance(b, PolySymbol):
        terms = moyal_terms(a, b, J)
        total = terms[0]
        for t in terms[1:]:
            total = total + t
        return total
    if not (isinstance(a, GridSymbol) and isinstance(b, GridSymbol)):
        raise QPSmoothError("moyal_star_truncated needs two PolySymbols or two GridSymbols")
    if a.values.shape != b.values.shape or not (
        np.array_equal(a.x_nodes, b.x_nodes) and np.array_equal(a.xi_nodes, b.xi_nodes)
    ):
        from .errors import GridMismatchError

        raise GridMismatchError("symbols on different grids")
    total = np.zeros(a.values.shape, dtype=complex)
    for j in range(J + 1):
        for k1 in range(j + 1):
            k2 = j - k1
            da = a.derivative(k1, k2) * (-1j) ** k2  # d_xi^k1 D_x^k2 a
            db = b.derivative(k2, k1) * (-1j) ** k1  # d_xi^k2 D_x^k1 b
            total = total + _moyal_coefficient(j, k1) * da * db
    l = a.l if l is None else l
    grade = grade_compose(a.grade, b.grade, "product_term", l, 0)
    return GridSymbol(a.x_nodes, a.xi_nodes, total, grade, l)


def quantum_bracket(a: PolySymbol, b: PolySymbol, J=4):
    """-i (a # b - b # a), exact for polynomials of total degree <= J."""
    return (moyal_star_truncated(a, b, J) - moyal_star_truncated(b, a, J)) * -1j


def poisson_poly(a: PolySymbol, b: PolySymbol):
    """{a; b} = -d_xi a d_x b + d_xi b d_x a."""
    return a.d(0, 1) * b.d(1, 0) * -1.0 + b.d(0, 1) * a.d(1, 0)


# ------------------------------------------------------------ norms, Lie

def sobolev_weights(basis: EigenBasis, s, l=None):
    l = basis.potential.l if l is None else l
    return (1.0 + basis.lambdas) ** (s * (l + 1.0) / (2.0 * l))


def sobolev_norm(coeffs, s, basis: EigenBasis, l=None):
    c = np.asarray(coeffs)
    if c.shape[0] > basis.N:
        raise QPSmoothError("more coefficients than basis states", n=c.shape[0], N=basis.N)
    w = sobolev_weights(basis, s, l)[: c.shape[0]]
    return float(np.sqrt(np.sum(np.abs(c * w) ** 2)))


def weighted_operator_norm(M: OperatorMatrix, basis: EigenBasis, s1, l=None):
    """||D^{-s1} M|| with D = diag((1 + lambda)^{(l+1)/2l})."""
    w = sobolev_weights(basis, -s1, l)
    return float(np.linalg.norm(w[:, None] * M.entries, 2))


def lie_transform_matrix(F: OperatorMatrix, X: OperatorMatrix, epsilon: float,
                         unitarity_tol=1e-10) -> OperatorMatrix:
    """e^{i eps X} F e^{-i eps X} with a scaling-and-squaring exponential."""
    Xm = X.entries
    if np.linalg.norm(Xm - Xm.conj().T) > HERMITIAN_TOL * max(np.linalg.norm(Xm), 1.0):
        raise ContractViolation("generator must be Hermitian", defect=float(np.linalg.norm(Xm - Xm.conj().T)))
    Xh = 0.5 * (Xm + Xm.conj().T)
    U = expm(1j * epsilon * Xh)
    defect = float(np.max(np.abs(np.linalg.svd(U, compute_uv=False) - 1.0)))
    if defect > unitarity_tol:
        raise AccuracyError("exponential is not unitary", defect=defect)
    return OperatorMatrix(U @ F.entries @ U.conj().T, F.lambdas)


def offdiag_norm(M, n):
    B = np.asarray(M)[:n, :n]
    return float(np.linalg.norm(B - np.diag(np.diag(B))))
