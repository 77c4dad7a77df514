"""Galerkin evolution of i psi' = (H0 + eps W(omega t)) psi in the H0 eigenbasis.

The perturbation is a0(x) trig(phi) or the Weyl quantization of a0(x) xi trig(phi),
with trig summed over the forcing frequencies. Time stepping uses the
fourth-order Magnus integrator with two Gauss points; each exponential is
taken through an eigendecomposition of a Hermitian matrix, so every step is
unitary to rounding.

With one frequency the evolution over a period is a monodromy matrix M; the
state at t = nP + s is U(s) M^n psi0, which makes long horizons cheap and
gives the quasi-energies as eigenphases of M.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import linear_sum_assignment

from .errors import QPSmoothError
from .potentials import PotentialModel
from .weyl import EigenBasis, h0_eigensystem, sobolev_weights

TRIG = {
    "cos": np.cos,
    "sin": np.sin,
    "one_plus_cos": lambda p: 1.0 + np.cos(p),
}
TRIG_MEAN = {"cos": 0.0, "sin": 0.0, "one_plus_cos": 1.0}
GAUSS = (0.5 - math.sqrt(3.0) / 6.0, 0.5 + math.sqrt(3.0) / 6.0)


def japanese_power(beta):
    return lambda x: (1.0 + x * x) ** (beta / 2.0)


def perturbation_matrix(basis: EigenBasis, a0, with_xi=False):
    """Matrix of a0(x) (or Op^w(a0(x) xi) = (a0 D + D a0)/2) in the eigenbasis."""
    A = np.diag(a0(basis.grid))
    if with_xi:
        D = basis.derivative
        A = 0.5 * (A @ D + D @ A)
    V = basis.vectors
    M = V.conj().T @ A @ V
    return 0.5 * (M + M.conj().T)


@dataclass
class Forcing:
    """eps * sum_i trig(omega_i t) * M."""

    M: np.ndarray
    omega: tuple
    trig: str = "cos"
    epsilon: float = 0.0

    def __post_init__(self):
        if self.trig not in TRIG:
            raise QPSmoothError(f"unknown trig {self.trig!r}", choices=sorted(TRIG))
        self.omega = tuple(float(w) for w in np.atleast_1d(self.omega))

    def coefficient(self, t):
        f = TRIG[self.trig]
        return self.epsilon * sum(f(w * t) for w in self.omega)

    @property
    def period(self):
        if len(self.omega) != 1:
            raise QPSmoothError("a period exists only for one forcing frequency")
        return 2.0 * math.pi / self.omega[0]


def _expm_herm(H, h):
    """exp(-i h H) for Hermitian H."""
    w, U = eigh(H)
    return (U * np.exp(-1j * h * w)) @ U.conj().T


def magnus4_step(lam, forcing: Forcing, t, h):
    """Propagator from t to t + h."""
    f1 = forcing.coefficient(t + GAUSS[0] * h)
    f2 = forcing.coefficient(t + GAUSS[1] * h)
    D = np.diag(lam)
    H1 = D + f1 * forcing.M
    H2 = D + f2 * forcing.M
    # Omega = -i h (H1 + H2)/2 + (sqrt3/12) h^2 [H1, H2], written as -i h Heff
    C = H1 @ H2 - H2 @ H1
    Heff = 0.5 * (H1 + H2) + 1j * (math.sqrt(3.0) / 12.0) * h * C
    Heff = 0.5 * (Heff + Heff.conj().T)
    return _expm_herm(Heff, h)


def propagate(lam, forcing: Forcing, t0, t1, h_max):
    n = max(1, int(math.ceil((t1 - t0) / h_max)))
    h = (t1 - t0) / n
    U = np.eye(lam.size, dtype=complex)
    for i in range(n):
        U = magnus4_step(lam, forcing, t0 + i * h, h) @ U
    return U


def sobolev_norms(c, basis, s_values=(0, 1, 2)):
    return [float(np.sqrt(np.sum((np.abs(c) * sobolev_weights(basis, s)[: c.size]) ** 2))) for s in s_values]


def tail_mass(c, fraction=0.1):
    k = max(1, int(math.ceil(fraction * c.size)))
    return float(np.sum(np.abs(c[-k:]) ** 2) / np.sum(np.abs(c) ** 2))


@dataclass
class EvolutionResult:
    t: np.ndarray
    norms: np.ndarray  # (nt, 3): H^0, H^1, H^2
    tail: np.ndarray
    truncation_warning: bool
    unitarity_drift: float

    @property
    def h1_ratio(self):
        return float(self.norms[:, 1].max() / self.norms[0, 1])


def initial_state(N, j0=0):
    c = np.zeros(N, dtype=complex)
    c[j0] = 1.0
    return c


def evolve(basis: EigenBasis, forcing: Forcing, t_final, samples_per_period=16, h_max=0.01,
           psi0=None, n_samples=400, tail_limit=0.01) -> EvolutionResult:
    """Sobolev norms along the trajectory.

    One frequency: monodromy power stepping (samples at multiples of P/samples_per_period).
    Two frequencies: direct Magnus stepping with n_samples output times.
    """
    lam = basis.lambdas
    c0 = initial_state(lam.size) if psi0 is None else np.asarray(psi0, dtype=complex)
    if len(forcing.omega) == 1:
        P = forcing.period
        sub = [np.eye(lam.size, dtype=complex)]
        ds = P / samples_per_period
        for k in range(samples_per_period):
            sub.append(propagate(lam, forcing, k * ds, (k + 1) * ds, h_max) @ sub[-1])
        M = sub[-1]
        n_per = int(math.ceil(t_final / P))
        ts, cs = [], []
        c = c0
        for n in range(n_per):
            for k in range(samples_per_period):
                t = n * P + k * ds
                if t > t_final:
                    break
                ts.append(t)
                cs.append(sub[k] @ c)
            c = M @ c
        ts.append(n_per * P)
        cs.append(c)
    else:
        ts = list(np.linspace(0.0, t_final, n_samples + 1))
        cs = [c0]
        c = c0
        for a, b in zip(ts[:-1], ts[1:]):
            c = propagate(lam, forcing, a, b, h_max) @ c
            cs.append(c)
    norms = np.array([sobolev_norms(ci, basis) for ci in cs])
    tails = np.array([tail_mass(ci) for ci in cs])
    drift = float(np.abs(norms[:, 0] / norms[0, 0] - 1.0).max())
    return EvolutionResult(np.array(ts), norms, tails, bool(tails.max() > tail_limit), drift)


@dataclass
class QuasiEnergies:
    lambdas: np.ndarray  # unperturbed eigenvalues
    quasi: np.ndarray  # lambda_j^infty estimates
    shift: np.ndarray  # (quasi - lambda) / eps
    overlap: np.ndarray  # |<e_j, v_j>|^2 of the matched Floquet vector
    flagged: np.ndarray  # ambiguous matching


def quasienergies(basis: EigenBasis, forcing: Forcing, h_max=0.005, min_overlap=0.5) -> QuasiEnergies:
    """Floquet exponents matched to the unperturbed states.

    Eigenphases of the monodromy are unwrapped against lambda_j P; the
    assignment maximizes total overlap. A row is flagged when the overlap is
    below ``min_overlap`` or the shift is within 10% of omega/2.
    """
    lam = basis.lambdas
    P = forcing.period
    M = propagate(lam, forcing, 0.0, P, h_max)
    mu, V = np.linalg.eig(M)
    ov = np.abs(V) ** 2  # rows: basis states, columns: Floquet vectors
    rows, cols = linear_sum_assignment(-ov)
    order = np.empty(lam.size, dtype=int)
    order[rows] = cols
    # e^{-i q P} = mu, q = lambda + delta with |delta| < omega / 2
    d = np.angle(mu[order] * np.exp(1j * lam * P))
    delta = -d / P
    quasi = lam + delta
    eps = forcing.epsilon
    shift = delta / eps if eps != 0 else np.zeros_like(delta)
    omega = forcing.omega[0]
    flagged = (ov[np.arange(lam.size), order] < min_overlap) | (np.abs(delta) > 0.45 * omega)
    return QuasiEnergies(lam, quasi, shift, ov[np.arange(lam.size), order], flagged)


def first_order_shift(basis: EigenBasis, forcing: Forcing):
    """<phi_j, W_bar phi_j> with W_bar the time average of the perturbation."""
    return np.real(np.diag(forcing.M)) * TRIG_MEAN[forcing.trig] * len(forcing.omega)


def shift_exponent(j, shift, j_range=(10, 40), flagged=None):
    """Slope of log|shift| against log j on the given range."""
    j = np.asarray(j)
    sel = (j >= j_range[0]) & (j <= j_range[1]) & (np.abs(shift) > 0)
    if flagged is not None:
        sel &= ~np.asarray(flagged)
    if sel.sum() < 3:
        raise QPSmoothError("too few modes for the exponent fit", count=int(sel.sum()))
    return float(np.polyfit(np.log(j[sel]), np.log(np.abs(shift[sel])), 1)[0])


def build_basis(potential: PotentialModel, N, check=True):
    return h0_eigensystem(potential, N, check=check)
