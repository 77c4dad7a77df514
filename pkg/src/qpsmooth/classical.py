"""Turning points, periods, flows and orbit quadrature for h0 = xi^2 + V(x).

Flow convention: xdot = 2 xi, xidot = -V'(x), which conserves h0. With it
the period is ``T(E) = 2 * int_0^{q_M} dq / sqrt(E - V(q))`` and the harmonic
oscillator has period pi.

Orbit integrals use ``q = q_M y`` followed by ``y = sin(theta)``. The
endpoint factor ``1/sqrt(1 - |y|^{2l})`` then becomes ``1/sqrt(R(theta))``
with ``R = (1 - sin^{2l} theta) / cos^2 theta`` smooth on the closed
interval, so plain Gauss-Legendre in theta converges spectrally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import DomainError, IntegrationError, NoOrbitError, UndefinedAngleError
from .potentials import PotentialModel

N_ORBIT_NODES = 128
TAYLOR_BAND = 1e-6


@dataclass(frozen=True)
class FlowPoint:
    x: float
    xi: float

    def energy(self, p: PotentialModel):
        return float(self.xi**2 + p(self.x))


@dataclass(frozen=True)
class EnergySlice:
    E: float
    q_M: float
    T: float
    q_bar: float


def h0(p: PotentialModel, x, xi):
    return np.asarray(xi) ** 2 + p(x)


@lru_cache(maxsize=8)
def gauss_legendre(n):
    s, w = np.polynomial.legendre.leggauss(n)
    s.flags.writeable = False
    w.flags.writeable = False
    return s, w


def _check_energy(p, E):
    E = np.asarray(E, dtype=float)
    if np.any(E <= float(p(0.0))):
        raise NoOrbitError("energy must exceed V(0)", E=E, V0=float(p(0.0)))
    return E


def turning_point(p: PotentialModel, E):
    """Positive root of V(q) = E (vectorized over E)."""
    E = _check_energy(p, E)
    scalar = E.ndim == 0
    E = np.atleast_1d(E)
    if p.is_exact_power:
        q = E ** (0.5 / p.l)
    else:
        lo = np.zeros_like(E)
        hi = np.maximum(1.0, 2.0 * E ** (0.5 / p.l))
        while np.any(p(hi) < E):
            hi = np.where(p(hi) < E, 2.0 * hi, hi)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            below = p(mid) < E
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        q = 0.5 * (lo + hi)
        for _ in range(4):
            q = q - (p(q) - E) / p.derivative(q, 1)
    return float(q[0]) if scalar else q


def energy_slice(p: PotentialModel, E):
    qm = turning_point(p, E)
    return EnergySlice(float(E), qm, period(p, E), qm * float(E) ** (-0.5 / p.l))


def _log_cos_power(theta, l):
    """Return (1 - sin^{2l} theta, cos^2 theta) computed without cancellation."""
    c2 = np.cos(theta) ** 2
    with np.errstate(divide="ignore"):
        lu = np.log1p(-c2)
    num = -np.expm1(l * lu)
    return num, c2


def endpoint_ratio(theta, l):
    """R(theta) = (1 - sin^{2l} theta) / cos^2 theta, smooth with R(+-pi/2) = l."""
    num, c2 = _log_cos_power(theta, l)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = num / c2
    return np.where(c2 > 0, r, l)


def _tilde_v_parts(p: PotentialModel, E, qm, y):
    """Ratio (1-|y|^{2l}) / (1 - V(q_M y)/E) with a Taylor limit at |y| -> 1."""
    E = np.asarray(E, dtype=float)
    qm = np.asarray(qm, dtype=float)
    ay = np.abs(y)
    delta = 1.0 - ay
    with np.errstate(divide="ignore", invalid="ignore"):
        num = -np.expm1(2.0 * p.l * np.log(ay))
        den = (E - p(qm * ay)) / E
        direct = num / den
    a = qm * p.derivative(qm, 1) / E
    b = qm * qm * p.derivative(qm, 2) / (2.0 * E)
    taylor = (2.0 * p.l - p.l * (2.0 * p.l - 1.0) * delta) / (a - b * delta)
    return np.where(delta < TAYLOR_BAND, taylor, direct)


def tilde_v(p: PotentialModel, E, y):
    """sqrt((1-|y|^{2l}) / (1 - V(q_M y)/E)); identically 1 for pure powers."""
    E = float(_check_energy(p, E))
    y = np.asarray(y, dtype=float)
    if p.is_exact_power:
        out = np.ones_like(y)
    else:
        out = np.sqrt(_tilde_v_parts(p, E, turning_point(p, E), y))
    return float(out) if out.ndim == 0 else out


@dataclass
class OrbitNodes:
    """Quadrature nodes on the orbits of a batch of energies.

    Arrays have shape ``(len(E), n)``; ``dt`` are the time weights for the
    upper branch, so a full-orbit time integral of ``f`` is
    ``sum(dt * (f(x, xi) + f(x, -xi)))``.
    """

    E: np.ndarray
    q_M: np.ndarray
    theta: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    dt_dtheta: np.ndarray
    dt: np.ndarray
    T: np.ndarray


def _orbit_factors(p, E, qm, theta):
    """Return (xi, dt/dtheta) on the upper branch at angles theta."""
    sqE = np.sqrt(E)
    if p.is_exact_power:
        num, c2 = _log_cos_power(theta, p.l)
        xi = sqE * np.sqrt(num)
        vt_over_sqrt_r = 1.0 / np.sqrt(endpoint_ratio(theta, p.l))
    else:
        y = np.sin(theta)
        vt2 = _tilde_v_parts(p, E, qm, y)
        r = endpoint_ratio(theta, p.l)
        xi = sqE * np.abs(np.cos(theta)) * np.sqrt(r / vt2)
        vt_over_sqrt_r = np.sqrt(vt2 / r)
    return xi, qm / (2.0 * sqE) * vt_over_sqrt_r


def orbit_nodes(p: PotentialModel, E, n=N_ORBIT_NODES, theta_range=None) -> OrbitNodes:
    """Gauss-Legendre nodes in theta on [-pi/2, pi/2] (or ``theta_range``)."""
    E = np.atleast_1d(_check_energy(p, E))
    qm = np.atleast_1d(turning_point(p, E))
    s, w = gauss_legendre(n)
    if theta_range is None:
        a = np.full(E.shape, -0.5 * np.pi)
        b = np.full(E.shape, 0.5 * np.pi)
    else:
        a, b = (np.broadcast_to(np.asarray(t, dtype=float), E.shape) for t in theta_range)
    half = 0.5 * (b - a)
    theta = (a + half)[:, None] + half[:, None] * s[None, :]
    Ec, qc = E[:, None], qm[:, None]
    xi, dtdth = _orbit_factors(p, Ec, qc, theta)
    dt = dtdth * w[None, :] * half[:, None]
    x = qc * np.sin(theta)
    if theta_range is None:
        T = 2.0 * dt.sum(axis=1)
    else:
        T = np.full(E.shape, np.nan)
    return OrbitNodes(E, qm, theta, x, xi, dtdth, dt, T)


def period(p: PotentialModel, E, n=N_ORBIT_NODES):
    """T(E) = 2 int_0^{q_M} dq / sqrt(E - V(q)) via endpoint-regular quadrature."""
    scalar = np.ndim(E) == 0
    nodes = orbit_nodes(p, E, n)
    return float(nodes.T[0]) if scalar else nodes.T


def time_of_flight(p: PotentialModel, E, x0, x, n=N_ORBIT_NODES):
    """Time to go from x0 to x on the upper branch: int dq / (2 sqrt(E - V))."""
    qm = turning_point(p, E)
    tol = 1e-12 * qm
    if not (-qm - tol <= x0 <= x <= qm + tol):
        raise DomainError("need -q_M <= x0 <= x <= q_M", x0=x0, x=x, q_M=qm)
    th0 = math.asin(max(-1.0, min(1.0, x0 / qm)))
    th1 = math.asin(max(-1.0, min(1.0, x / qm)))
    nodes = orbit_nodes(p, E, n, theta_range=(th0, th1))
    return float(nodes.dt.sum())


def _flow_steps(p, E, t, steps_per_period):
    if E <= float(p(0.0)):
        return 0, 0.0
    T = period(p, E)
    nsteps = max(1, int(math.ceil(abs(t) / T * steps_per_period)))
    if nsteps > 10**8:
        raise IntegrationError("step count exceeds limit", nsteps=nsteps)
    h = t / nsteps
    if t != 0.0 and abs(h) < 1e-300:
        raise IntegrationError("step size underflow", t=t)
    return nsteps, h


def flow(p: PotentialModel, start: FlowPoint, t: float, steps_per_period=1000) -> FlowPoint:
    """Evolve ``start`` for time ``t`` with a sixth-order symmetric integrator."""
    if t == 0.0:
        return start
    E = start.energy(p)
    nsteps, h = _flow_steps(p, E, t, steps_per_period)
    if nsteps == 0:
        return start
    xs, xis = _kernels.integrate_many(
        p.kind_code, p.l, [d for d, _ in p.corrections], [c for _, c in p.corrections],
        [start.x], [start.xi], [h], nsteps, nsteps,
    )
    if not (np.isfinite(xs[0, -1]) and np.isfinite(xis[0, -1])):
        raise IntegrationError("non-finite state", t=t)
    return FlowPoint(float(xs[0, -1]), float(xis[0, -1]))


def sample_orbits(p: PotentialModel, E, n_samples, steps_per_sample=16):
    """Sample each orbit at ``n_samples`` equally spaced times over one period.

    Trajectories start at ``(0, +sqrt(E - V(0)))``. Returns ``(x, xi, T)``
    with ``x, xi`` of shape ``(len(E), n_samples)``.
    """
    E = np.atleast_1d(np.asarray(E, dtype=float))
    T = np.atleast_1d(period(p, E))
    h = T / (n_samples * steps_per_sample)
    xi0 = np.sqrt(E - float(p(0.0)))
    xs, xis = _kernels.integrate_many(
        p.kind_code, p.l, [d for d, _ in p.corrections], [c for _, c in p.corrections],
        np.zeros_like(E), xi0, h, n_samples * steps_per_sample, steps_per_sample,
    )
    return xs[:, :-1], xis[:, :-1], T


def action_angle_harmonic(x, xi):
    """(x, xi) = (sqrt(A) sin theta, sqrt(A) cos theta) -> (A, theta)."""
    if x == 0 and xi == 0:
        raise UndefinedAngleError("angle undefined at the origin")
    return x * x + xi * xi, math.atan2(x, xi)


def from_action_angle_harmonic(A, theta):
    r = math.sqrt(A)
    return r * math.sin(theta), r * math.cos(theta)
