"""Functions of (x, xi, phi) sampled in orbit coordinates (E, psi, phi).

psi = 2 pi t / T(E) is the time along the orbit of h0 through (0, +sqrt(E - V(0))),
rescaled to [0, 2 pi). With the action A(E), dA/dE = T / (2 pi) = 1 / nu, the pair
(psi, A) is canonical with the same orientation as (x, xi), so

    {a; b} = -d_A a d_psi b + d_A b d_psi a,   d_A = nu(E) d_E,
    {h0; f} = -nu d_psi f.

Derivatives in psi and phi are spectral; d_E uses a seven-point stencil on a
uniform grid in u = log E.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from .classical import period, sample_orbits
from .errors import QPSmoothError
from .potentials import PotentialModel
from .symbols import order_fit_samples, weight_lambda

STENCIL = 7


def fd_weights(offsets, order=1):
    """Finite-difference weights at 0 for the given integer offsets (unit spacing)."""
    offsets = np.asarray(offsets, dtype=float)
    n = offsets.size
    A = np.vander(offsets, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(A, rhs)


def derivative_matrix(n, h, width=STENCIL):
    """Sparse first-derivative matrix, central inside and one-sided at the ends."""
    half = width // 2
    rows, cols, vals = [], [], []
    for i in range(n):
        start = min(max(i - half, 0), n - width)
        offs = np.arange(start, start + width) - i
        w = fd_weights(offs) / h
        rows.extend([i] * width)
        cols.extend(range(start, start + width))
        vals.extend(w)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


@dataclass
class OrbitGrid:
    potential: PotentialModel
    E: np.ndarray
    n_psi: int
    n_phi: int
    x: np.ndarray  # (nE, n_psi)
    xi: np.ndarray
    T: np.ndarray

    @classmethod
    def build(cls, potential: PotentialModel, lam_cover=66.0, E_min=0.5, du=0.1, n_psi=2048, n_phi=8,
              steps_per_sample=8):
        """Log-spaced energies up to the level where lambda reaches ``lam_cover``."""
        l = potential.l
        E_max = 1.05 * lam_cover ** (2.0 * l)
        nE = int(math.ceil(math.log(E_max / E_min) / du)) + 1
        E = np.exp(np.linspace(math.log(E_min), math.log(E_max), nE))
        if n_psi % 2 or n_phi % 2:
            raise QPSmoothError("grid sizes must be even")
        x, xi, T = sample_orbits(potential, E, n_psi, steps_per_sample)
        return cls(potential, E, n_psi, n_phi, x, xi, T)

    @property
    def shape(self):
        return (self.E.size, self.n_psi, self.n_phi)

    @cached_property
    def psi(self):
        return 2.0 * math.pi * np.arange(self.n_psi) / self.n_psi

    @cached_property
    def phi(self):
        return 2.0 * math.pi * np.arange(self.n_phi) / self.n_phi

    @cached_property
    def nu(self):
        return 2.0 * math.pi / self.T

    @cached_property
    def du(self):
        return float(math.log(self.E[1] / self.E[0]))

    @cached_property
    def _Du(self):
        return derivative_matrix(self.E.size, self.du)

    @cached_property
    def lam(self):
        return weight_lambda(self.x, self.xi, self.potential.l)

    @cached_property
    def lam_cover(self):
        return float(self.lam[-1].min())

    @cached_property
    def k_psi(self):
        return np.fft.fftfreq(self.n_psi, 1.0 / self.n_psi)

    @cached_property
    def k_phi(self):
        return np.fft.fftfreq(self.n_phi, 1.0 / self.n_phi)

    # ---------------------------------------------------------------- sampling
    def sample(self, f):
        """Sample f(x, xi, phi) -> array of shape (nE, n_psi, n_phi)."""
        X = self.x[:, :, None]
        XI = self.xi[:, :, None]
        P = self.phi[None, None, :]
        out = np.asarray(f(X, XI, P), dtype=float)
        return np.ascontiguousarray(np.broadcast_to(out, self.shape))

    def sample_energy(self, g):
        """Sample g(E) as a field."""
        return np.broadcast_to(np.asarray(g(self.E), dtype=float)[:, None, None], self.shape).copy()

    # -------------------------------------------------------------- calculus
    def d_psi(self, F):
        k = self.k_psi.copy()
        k[self.n_psi // 2] = 0.0
        return np.fft.ifft(np.fft.fft(F, axis=1) * (1j * k)[None, :, None], axis=1).real

    def d_phi(self, F):
        k = self.k_phi.copy()
        k[self.n_phi // 2] = 0.0
        return np.fft.ifft(np.fft.fft(F, axis=2) * (1j * k)[None, None, :], axis=2).real

    def d_E(self, F):
        G = (self._Du @ F.reshape(self.E.size, -1)).reshape(F.shape)
        return G / self.E[:, None, None]

    def d_A(self, F):
        return self.nu[:, None, None] * self.d_E(F)

    def bracket(self, a, b):
        """{a; b} = -d_A a d_psi b + d_A b d_psi a."""
        return -self.d_A(a) * self.d_psi(b) + self.d_A(b) * self.d_psi(a)

    def h0_bracket(self, F):
        """{h0; F} = -nu d_psi F."""
        return -self.nu[:, None, None] * self.d_psi(F)

    def energy_bracket(self, z, F):
        """{z(h0); F} = z'(E) {h0; F} for z given as a field constant in psi and phi."""
        return self.d_E(z) * self.h0_bracket(F)

    def psi_mean(self, F):
        return np.broadcast_to(F.mean(axis=1, keepdims=True), F.shape).copy()

    def phi_mean(self, F):
        return np.broadcast_to(F.mean(axis=2, keepdims=True), F.shape).copy()

    def dot(self, F, omega):
        """Time derivative through the angles, omega . d_phi F (one frequency)."""
        return omega * self.d_phi(F)

    # ---------------------------------------------------------------- solvers
    def solve_autonomous(self, P):
        """(chi, <P>) with nu d_psi chi = P - <P> and chi mean free in psi."""
        Ph = np.fft.fft(P, axis=1)
        k = self.k_psi
        with np.errstate(divide="ignore", invalid="ignore"):
            div = 1.0 / (1j * k[None, :, None] * self.nu[:, None, None])
        div[:, 0, :] = 0.0
        chi = np.fft.ifft(Ph * div, axis=1).real
        return chi, self.psi_mean(P)

    def solve_torus(self, f, omega):
        """g with omega d_phi g = f - fbar (g mean free in phi), and fbar."""
        fh = np.fft.fft(f, axis=2)
        k = self.k_phi
        with np.errstate(divide="ignore", invalid="ignore"):
            div = 1.0 / (1j * omega * k)
        div[0] = 0.0
        g = np.fft.ifft(fh * div[None, None, :], axis=2).real
        return g, self.phi_mean(f)

    def solve_joint(self, P, omega):
        """chi with nu d_psi chi + omega d_phi chi = P - <P>_{psi, phi} (constant-period case)."""
        Ph = np.fft.fft2(P, axes=(1, 2))
        den = 1j * (self.k_psi[None, :, None] * self.nu[:, None, None] + omega * self.k_phi[None, None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            div = 1.0 / den
        div[:, 0, 0] = 0.0
        chi = np.fft.ifft2(Ph * div, axes=(1, 2)).real
        head = np.broadcast_to(P.mean(axis=(1, 2), keepdims=True), P.shape).copy()
        return chi, head

    def min_denominator(self, omega, k_phi_max):
        """Smallest |n nu + k omega| over retained nonzero modes (constant-period case)."""
        n = self.k_psi[:, None]
        k = self.k_phi[None, :]
        keep = (np.abs(k) <= k_phi_max) & ~((n == 0) & (k == 0))
        vals = np.abs(n * self.nu.mean() + k * omega)[keep]
        return float(vals.min())

    # --------------------------------------------------------------- measures
    def magnitude(self, F):
        return np.abs(F).max(axis=2)

    def order_fit(self, F, j_min=1):
        return order_fit_samples(self.lam, self.magnitude(F), self.lam_cover, j_min=j_min)

    def spectral_tail(self, F):
        """Largest |psi-Fourier coefficient| in the top eighth of the band, relative to the field sup."""
        c = np.abs(np.fft.rfft(F, axis=1)) / self.n_psi
        top = c[:, -max(1, c.shape[1] // 8):, :].max()
        return float(top / max(np.abs(F).max(), 1e-300))
