"""Orbit averages and the homological-equation solvers.

Bracket convention: {a; b} = -d_xi a d_x b + d_xi b d_x a. Along the flow of
h0 one has d/dt f = -{h0; f}, so ``p + {h0; chi} = <p>`` is equivalent to
``d/dt chi = p - <p>`` on every orbit. The autonomous solver integrates that
ODE in closed form on each orbit and normalizes chi to zero orbit mean.

Every solver reports the sup of its equation's defect, evaluated with
finite-difference brackets; that number is the acceptance instrument.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline, RegularGridInterpolator

from .classical import N_ORBIT_NODES, _tilde_v_parts, gauss_legendre, orbit_nodes
from .errors import (
    GridMismatchError,
    NonConvergenceError,
    QPSmoothError,
    RescalingSingularError,
    SmallDenominatorError,
)
from .potentials import PotentialModel
from .symbols import GridSymbol, SymbolGrade

CHUNK = 2048


def as_callable(p):
    """Accept a callable p(x, xi) or a GridSymbol (cubic interpolation)."""
    if isinstance(p, GridSymbol):
        interp = RegularGridInterpolator(
            (p.x_nodes, p.xi_nodes), p.values, method="cubic", bounds_error=False, fill_value=None
        )

        def f(x, xi):
            x, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
            return interp(np.stack([x.ravel(), xi.ravel()], axis=-1)).reshape(x.shape)

        return f
    if not callable(p):
        raise QPSmoothError("symbol must be callable or a GridSymbol")
    return p


def _eval(p, x, xi):
    return np.broadcast_to(p(x, xi), np.shape(x))


@dataclass
class AveragedSymbol:
    """A function of h0 only, tabulated on an energy grid (cubic in log E)."""

    E_nodes: np.ndarray
    values: np.ndarray
    potential: PotentialModel

    def __post_init__(self):
        self.E_nodes = np.asarray(self.E_nodes, dtype=float)
        self.values = np.asarray(self.values)
        self._spline = CubicSpline(np.log(self.E_nodes), self.values)

    def of_energy(self, E):
        E = np.asarray(E, dtype=float)
        out = self._spline(np.log(np.clip(E, self.E_nodes[0], self.E_nodes[-1])))
        return out

    def __call__(self, x, xi):
        return self.of_energy(np.asarray(xi) ** 2 + self.potential(x))


def orbit_average(p, E, potential: PotentialModel, n=N_ORBIT_NODES):
    """Time average of p over the orbit of energy E (scalar or array)."""
    f = as_callable(p)
    scalar = np.ndim(E) == 0
    nodes = orbit_nodes(potential, E, n)
    tot = (nodes.dt * (_eval(f, nodes.x, nodes.xi) + _eval(f, nodes.x, -nodes.xi))).sum(axis=1)
    avg = tot / nodes.T
    return avg[0] if scalar else avg


@lru_cache(maxsize=4)
def _cumulative_map(n):
    """Matrix taking node values of g on [-1, 1] to Legendre coefficients of int_{-1}^s g."""
    s, w = gauss_legendre(n)
    P = np.polynomial.legendre.legvander(s, n - 1)  # (n, n)
    fit = P * w[:, None] * (2.0 * np.arange(n) + 1.0)[None, :] / 2.0
    integ = np.zeros((n, n + 1))
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        integ[k] = np.polynomial.legendre.legint(e, lbnd=-1.0)
    return fit @ integ


def point_angle(p: PotentialModel, E, qm, x, xi):
    """theta with x = q_M sin(theta), |theta| <= pi/2, well conditioned near the turning points.

    cos^2(theta) = 1 - y^2 is recovered from xi^2 / E = 1 - V(x)/E rather than
    from y, which would lose half the digits where y -> 1.
    """
    y = np.clip(x / qm, -1.0, 1.0)
    one_minus = xi * xi / E  # 1 - V(q_M y)/E
    if not p.is_exact_power:
        one_minus = one_minus * _tilde_v_parts(p, E, qm, y)  # -> 1 - |y|^{2l}
    # 1 - |y|^{2l} = (1 - y^2) S(y); S -> l as y -> 1
    u = np.maximum(1.0 - y * y, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = -np.expm1(p.l * np.log1p(-u)) / u
    S = np.where(u > 1e-6, direct, p.l - 0.5 * p.l * (p.l - 1.0) * u)
    c = np.sqrt(one_minus / S)
    return np.arctan2(y, c)


class AutonomousSolver:
    """Solve d/dt chi = p - <p> on the orbits of h0 through arbitrary points."""

    def __init__(self, p, potential: PotentialModel, n=N_ORBIT_NODES):
        self.p = as_callable(p)
        self.potential = potential
        self.n = n
        self.V0 = float(potential(0.0))

    def _solve_chunk(self, x, xi):
        pot, n = self.potential, self.n
        E = xi * xi + pot(x)
        chi = np.zeros(x.shape, dtype=complex)
        avg = np.zeros(x.shape, dtype=complex)
        ok = E > self.V0 * (1.0 + 1e-12) + 1e-300
        if not np.any(ok):
            return chi, avg
        Ev, xv, xiv = E[ok], x[ok], xi[ok]
        nodes = orbit_nodes(pot, Ev, n)
        pp = _eval(self.p, nodes.x, nodes.xi).astype(complex)
        pm = _eval(self.p, nodes.x, -nodes.xi).astype(complex)
        T = nodes.T
        a = ((pp + pm) * nodes.dt).sum(axis=1) / T
        cp = (pp - a[:, None]) * nodes.dt_dtheta * (0.5 * math.pi)
        cm = (pm - a[:, None]) * nodes.dt_dtheta * (0.5 * math.pi)
        A = _cumulative_map(n)
        coef_p, coef_m = cp @ A, cm @ A
        s_nodes, _ = gauss_legendre(n)
        Vn = np.polynomial.legendre.legvander(s_nodes, n)
        tot_p = ((pp - a[:, None]) * nodes.dt).sum(axis=1)
        tot_m = ((pm - a[:, None]) * nodes.dt).sum(axis=1)
        cum_p_nodes = coef_p @ Vn.T
        cum_m_nodes = coef_m @ Vn.T
        upper = cum_p_nodes
        lower = tot_p[:, None] + tot_m[:, None] - cum_m_nodes
        mean_c = ((upper + lower) * nodes.dt).sum(axis=1) / T
        s0 = point_angle(pot, Ev, nodes.q_M, xv, xiv) / (0.5 * math.pi)
        V0 = np.polynomial.legendre.legvander(s0, n)
        c_up = np.einsum("ij,ij->i", coef_p, V0)
        c_lo = tot_p + tot_m - np.einsum("ij,ij->i", coef_m, V0)
        c = np.where(xiv >= 0, c_up, c_lo)
        chi[ok] = c - mean_c
        avg[ok] = a
        return chi, avg

    def solve_points(self, x, xi):
        """Return (chi, <p>) at the given points; zero where the orbit is trivial."""
        x, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
        shape = x.shape
        xf, xif = x.ravel(), xi.ravel()
        chi = np.empty(xf.size, dtype=complex)
        avg = np.empty(xf.size, dtype=complex)
        for i in range(0, xf.size, CHUNK):
            sl = slice(i, i + CHUNK)
            chi[sl], avg[sl] = self._solve_chunk(xf[sl], xif[sl])
        return _maybe_real(chi).reshape(shape), _maybe_real(avg).reshape(shape)

    def __call__(self, x, xi):
        return self.solve_points(x, xi)[0]

    def average(self, x, xi):
        return self.solve_points(x, xi)[1]


def _maybe_real(a):
    if np.iscomplexobj(a) and np.all(a.imag == 0):
        return a.real
    return a


# ---------------------------------------------------------------- residuals

def _stencil_step(v):
    return 1e-2 * np.maximum(1.0, np.abs(v))


def fd_partial(f, x, xi, axis):
    """Fourth-order central difference of a callable in x (axis 0) or xi (axis 1)."""
    base = x if axis == 0 else xi
    h = _stencil_step(base)
    vals = []
    for s in (-2, -1, 1, 2):
        if axis == 0:
            vals.append(f(x + s * h, xi))
        else:
            vals.append(f(x, xi + s * h))
    return (vals[0] - 8.0 * vals[1] + 8.0 * vals[2] - vals[3]) / (12.0 * h)


def poisson_bracket(a, b, x, xi):
    """{a; b} = -d_xi a d_x b + d_xi b d_x a for callables."""
    return -fd_partial(a, x, xi, 1) * fd_partial(b, x, xi, 0) + fd_partial(b, x, xi, 1) * fd_partial(a, x, xi, 0)


def h0_bracket(potential, chi, x, xi):
    """{h0; chi} = -2 xi d_x chi + V'(x) d_xi chi."""
    return -2.0 * xi * fd_partial(chi, x, xi, 0) + potential.derivative(x, 1) * fd_partial(chi, x, xi, 1)


EQUATIONS = ("autonomous", "rescaled", "torus", "harmonic")


def residual_check(p, chi, avg, equation_tag, x=None, xi=None, potential=None, **kw):
    """Sup-norm of the defect of the tagged homological equation.

    ``autonomous``: p + {h0; chi} - avg. ``rescaled``: p + (1 + eps f'(h0)) {h0; chi} - avg
    (needs ``f_prime`` and ``epsilon``). ``torus``: -omega . d_phi chi - (p - pbar) on
    angle-mode dictionaries (needs ``omega``). ``harmonic``: {h0; chi} - omega . d_phi chi + p - avg
    on angle-mode dictionaries of callables (needs ``omega``).

    For GridSymbol arguments the brackets use grid finite differences and
    the points are the grid nodes.
    """
    if equation_tag not in EQUATIONS:
        raise QPSmoothError(f"unknown equation {equation_tag!r}")
    if equation_tag == "torus":
        return _torus_residual(p, chi, kw["omega"])
    if equation_tag == "harmonic":
        return _harmonic_residual(p, chi, avg, x, xi, potential, kw["omega"])
    if isinstance(chi, GridSymbol):
        return _grid_residual(p, chi, avg, equation_tag, potential, **kw)
    x, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
    pv = _eval(as_callable(p), x, xi)
    av = avg(x, xi) if callable(avg) else np.broadcast_to(avg, x.shape)
    br = h0_bracket(potential, chi, x, xi)
    if equation_tag == "rescaled":
        E = xi * xi + potential(x)
        br = (1.0 + kw["epsilon"] * kw["f_prime"](E)) * br
    return float(np.max(np.abs(pv + br - av)))


def _grid_residual(p, chi, avg, tag, potential, **kw):
    for other in (p, avg):
        if isinstance(other, GridSymbol) and (
            other.values.shape != chi.values.shape
            or not np.array_equal(other.x_nodes, chi.x_nodes)
            or not np.array_equal(other.xi_nodes, chi.xi_nodes)
        ):
            raise GridMismatchError("symbols live on different grids")
    X, XI = chi.mesh
    pv = p.values if isinstance(p, GridSymbol) else _eval(p, X, XI)
    av = avg.values if isinstance(avg, GridSymbol) else (avg(X, XI) if callable(avg) else avg)
    br = -2.0 * XI * chi.derivative(0, 1) + potential.derivative(X, 1) * chi.derivative(1, 0)
    if tag == "rescaled":
        br = (1.0 + kw["epsilon"] * kw["f_prime"](XI * XI + potential(X))) * br
    return float(np.max(np.abs(pv + br - av)))


# ------------------------------------------------------------ solutions

@dataclass
class HomologicalSolution:
    chi: GridSymbol | None
    residual_sup: float
    mean_free: bool
    evaluator: Callable | None = None
    average: Callable | None = None
    modes: dict = field(default_factory=dict)


def validation_points(x_nodes, xi_nodes, potential, E_max=None, max_points=400):
    """A thinned subset of grid nodes, optionally restricted to h0 <= E_max."""
    X, XI = np.meshgrid(x_nodes, xi_nodes, indexing="ij")
    sx = max(1, x_nodes.size // 20)
    sxi = max(1, xi_nodes.size // 20)
    X, XI = X[::sx, ::sxi].ravel(), XI[::sx, ::sxi].ravel()
    if E_max is not None:
        keep = XI**2 + potential(X) <= E_max
        X, XI = X[keep], XI[keep]
    return X[:max_points], XI[:max_points]


def _grid_of(grid):
    if isinstance(grid, GridSymbol):
        return grid.x_nodes, grid.xi_nodes
    x, xi = grid
    return np.asarray(x, float), np.asarray(xi, float)


def chi_autonomous(p, potential: PotentialModel, grid, grade=(0.0, 0.0), tol=1e-4,
                   validate=(None, None), E_max=None, n=N_ORBIT_NODES) -> HomologicalSolution:
    """Mean-free solution of p + {h0; chi} = <p>, sampled on ``grid``.

    ``validate`` optionally gives explicit validation points (x, xi); by
    default a thinned subset of the grid (restricted to h0 <= E_max) is used.
    Raises NonConvergenceError when the residual exceeds ``tol`` times the
    scale of p on the validation points.
    """
    solver = AutonomousSolver(p, potential, n)
    xn, xin = _grid_of(grid)
    X, XI = np.meshgrid(xn, xin, indexing="ij")
    chi_vals, _ = solver.solve_points(X, XI)
    vx, vxi = validate
    if vx is None:
        vx, vxi = validation_points(xn, xin, potential, E_max)
    res = residual_check(solver.p, solver, solver.average, "autonomous", vx, vxi, potential)
    scale = max(1.0, float(np.max(np.abs(_eval(solver.p, vx, vxi)))))
    if res > tol * scale:
        raise NonConvergenceError("homological residual above tolerance", residual=res, scale=scale)
    l = potential.l
    chi = GridSymbol(xn, xin, chi_vals, SymbolGrade(*grade), l)
    return HomologicalSolution(chi, res, True, solver, solver.average)


def chi_rescaled(p, potential: PotentialModel, grid, f_prime, epsilon, grade=(0.0, 0.0), tol=1e-4,
                 validate=(None, None), E_max=None, n=N_ORBIT_NODES) -> HomologicalSolution:
    """Solution of p + {h0 + eps f(h0); chi} = <p>: the h0 solution divided by 1 + eps f'."""
    base = AutonomousSolver(p, potential, n)
    xn, xin = _grid_of(grid)
    X, XI = np.meshgrid(xn, xin, indexing="ij")

    def factor(x, xi):
        E = np.asarray(xi) ** 2 + potential(x)
        fac = 1.0 + epsilon * np.asarray(f_prime(E))
        if np.any(np.abs(epsilon * np.asarray(f_prime(E))) >= 0.5):
            raise RescalingSingularError("|eps f'(E)| must stay below 1/2", epsilon=epsilon)
        return fac

    def evaluator(x, xi):
        return base(x, xi) / factor(x, xi)

    vals = evaluator(X, XI)
    vx, vxi = validate
    if vx is None:
        vx, vxi = validation_points(xn, xin, potential, E_max)
    res = residual_check(base.p, evaluator, base.average, "rescaled", vx, vxi, potential,
                         f_prime=f_prime, epsilon=epsilon)
    scale = max(1.0, float(np.max(np.abs(_eval(base.p, vx, vxi)))))
    if res > tol * scale:
        raise NonConvergenceError("rescaled homological residual above tolerance", residual=res)
    chi = GridSymbol(xn, xin, vals, SymbolGrade(*grade), potential.l)
    return HomologicalSolution(chi, res, True, evaluator, base.average)


# ----------------------------------------------------------- angle modes

def _norm1(k):
    return int(sum(abs(int(i)) for i in k))


def _mode_value(v, x, xi):
    return v(x, xi) if callable(v) else v


def chi_torus(p_modes: dict, omega, gamma, tau, k_cutoff=32) -> HomologicalSolution:
    """Solve -omega . d_phi chi = p - pbar mode by mode.

    ``p_modes`` maps integer tuples k to coefficients (scalars or arrays).
    Modes with |k|_1 > ``k_cutoff`` are dropped and their size reported in
    ``modes['__tail__']``.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    chi = {}
    tail = 0.0
    for k, pk in p_modes.items():
        k = tuple(int(i) for i in np.atleast_1d(k))
        if len(k) != omega.size:
            raise QPSmoothError("mode index dimension differs from omega")
        if not any(k):
            continue
        if _norm1(k) > k_cutoff:
            tail = max(tail, float(np.max(np.abs(pk))))
            continue
        wk = float(np.dot(omega, k))
        if abs(wk) < gamma * _norm1(k) ** (-tau):
            raise SmallDenominatorError("|omega.k| below gamma |k|^-tau", k=k, omega_k=wk)
        chi[k] = 1j * np.asarray(pk) / wk
    kept = {k: v for k, v in p_modes.items() if _norm1(np.atleast_1d(k)) <= k_cutoff}
    res = _torus_residual(kept, chi, omega)
    sol = HomologicalSolution(None, res, True, modes=chi)
    sol.modes["__tail__"] = tail
    return sol


def _torus_residual(p_modes, chi_modes, omega):
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    worst = 0.0
    keys = {tuple(np.atleast_1d(k)) for k in p_modes} | {k for k in chi_modes if k != "__tail__"}
    for k in keys:
        if not any(k):
            continue
        pk = np.asarray(p_modes.get(k, 0.0))
        ck = np.asarray(chi_modes.get(k, 0.0))
        defect = -1j * float(np.dot(omega, k)) * ck - pk
        worst = max(worst, float(np.max(np.abs(defect))))
    return worst


def eval_modes(modes, phi):
    """Sum_k c_k exp(i k.phi) for scalar-coefficient modes on an angle array (..., n)."""
    phi = np.asarray(phi, dtype=float)
    out = 0.0
    for k, c in modes.items():
        if k == "__tail__":
            continue
        out = out + np.asarray(c) * np.exp(1j * np.tensordot(phi, np.asarray(k, float), axes=([-1], [0])))
    return out


class HarmonicModeSolver:
    """chi_k(z) = (e^{i a T} - 1)^{-1} int_0^T e^{i a t} p_k(Phi^t z) dt, a = omega.k, for V = x^2."""

    T = math.pi

    def __init__(self, pk, alpha, n=96):
        self.pk = pk
        self.alpha = alpha
        self.n = n
        self.denominator = np.exp(1j * alpha * self.T) - 1.0

    def __call__(self, x, xi):
        x, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
        s, w = gauss_legendre(self.n)
        t = 0.5 * self.T * (s + 1.0)
        wt = 0.5 * self.T * w
        c, sn = np.cos(2.0 * t), np.sin(2.0 * t)
        xt = x[..., None] * c + xi[..., None] * sn
        xit = -x[..., None] * sn + xi[..., None] * c
        vals = _eval(self.pk, xt, xit) * np.exp(1j * self.alpha * t)
        return (vals * wt).sum(axis=-1) / self.denominator


def harmonic_denominator_bound(alpha, T=math.pi):
    """Return (|e^{i a T} - 1|, (2/pi) * 2 * dist(a T / 2, pi Z))."""
    lhs = abs(np.exp(1j * alpha * T) - 1.0)
    half = alpha * T / 2.0
    dist = abs(half - math.pi * round(half / math.pi))
    return lhs, 2.0 * dist * 2.0 / math.pi


def chi_harmonic(p_modes: dict, omega, gamma, tau, grid=None, k_cutoff=32, K0_max=None,
                 validate=None) -> HomologicalSolution:
    """Solve {h0; chi} - omega . d_phi chi + p = avg(pbar) for V = x^2.

    ``p_modes`` maps k to callables p_k(x, xi). The k = 0 mode is solved by
    the autonomous solver; other modes by the orbit integral with the small
    denominator e^{i omega.k T} - 1, after checking
    |omega.k + nu k0| >= gamma / (1 + |k|^tau), nu = 2 pi / T = 2.
    """
    from .diophantine import member_omega1

    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    pot = PotentialModel.harmonic()
    nu = 2.0 * math.pi / HarmonicModeSolver.T
    modes = {}
    zero = tuple([0] * omega.size)
    kmax = max([_norm1(k) for k in p_modes] + [1])
    if K0_max is None:
        K0_max = int(math.ceil(kmax * omega.max() / nu)) + 2
    ok, worst = member_omega1(omega, nu, gamma, tau, min(kmax, k_cutoff), K0_max)
    for k, pk in p_modes.items():
        k = tuple(int(i) for i in np.atleast_1d(k))
        if _norm1(k) > k_cutoff:
            continue
        if k == zero:
            modes[k] = AutonomousSolver(pk, pot)
            continue
        alpha = float(np.dot(omega, k))
        k0 = -round(alpha / nu)
        margin = abs(alpha + nu * k0) * (1.0 + _norm1(k) ** tau)
        if margin < gamma:
            raise SmallDenominatorError("resonant harmonic mode", k=k, k0=k0, margin=margin)
        modes[k] = HarmonicModeSolver(pk, alpha)
    avg0 = modes[zero].average if zero in modes else (lambda x, xi: 0.0 * np.asarray(x))
    sol = HomologicalSolution(None, float("nan"), True, average=avg0, modes=modes)
    if validate is not None:
        vx, vxi = validate
        sol.residual_sup = _harmonic_residual(p_modes, modes, avg0, vx, vxi, pot, omega)
    return sol


def _harmonic_residual(p_modes, chi_modes, avg, x, xi, potential, omega):
    """Mode-wise defect of {h0; chi_k} - i omega.k chi_k + p_k - delta_k0 avg."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    x, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
    worst = 0.0
    for k, pk in p_modes.items():
        k = tuple(int(i) for i in np.atleast_1d(k))
        ck = chi_modes.get(k)
        pv = _eval(pk, x, xi)
        if ck is None:
            continue
        d = h0_bracket(potential, ck, x, xi) - 1j * float(np.dot(omega, k)) * ck(x, xi) + pv
        if not any(k):
            d = d - avg(x, xi)
        worst = max(worst, float(np.max(np.abs(d))))
    return worst
