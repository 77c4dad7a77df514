"""Diophantine membership tests and Monte Carlo excluded-measure estimates.

|k| is the l1 norm. Margins are reported as the largest gamma for which the
inequality still holds at the worst k:

* Omega_0: margin(k) = |omega.k| |k|^tau, member iff min margin >= gamma.
* Omega_1: margin(k, k0) = |omega.k + nu k0| (1 + |k|^tau).

For a fixed k' = (k_2, ..., k_n) only the two integers k_1 adjacent to
-omega'.k'/omega_1 can violate the inequality when gamma < 1 (any other
choice has |omega.k| >= omega_1 >= 1), so the scans check just those.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import QPSmoothError

DEFAULT_K_MAX = {1: 200, 2: 200, 3: 50}


@dataclass(frozen=True)
class FrequencyVector:
    omega: tuple

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        if w.ndim != 1 or np.any(w < 1.0) or np.any(w > 2.0):
            raise QPSmoothError("frequencies must lie in [1, 2]", omega=self.omega)

    @property
    def n(self):
        return len(self.omega)


@dataclass(frozen=True)
class Membership:
    member: bool
    worst_k: tuple
    margin: float

    def __bool__(self):
        return self.member

    def __iter__(self):
        return iter((self.member, (self.worst_k, self.margin)))


def _tail_vectors(n, K):
    """All k' in Z^{n-1} with |k'|_1 <= K (a single empty vector when n = 1)."""
    if n == 1:
        return np.zeros((1, 0), dtype=np.int64)
    r = np.arange(-K, K + 1)
    grid = np.array(list(itertools.product(r, repeat=n - 1)), dtype=np.int64)
    return grid[np.abs(grid).sum(axis=1) <= K]


def _candidates(omega, tails):
    """Nearest k1 values: floor/ceil of -omega'.k'/omega_1. omega: (S, n)."""
    rest = omega[:, 1:] @ tails.T.astype(float) if tails.shape[1] else np.zeros((omega.shape[0], 1))
    lo = np.floor(-rest / omega[:, :1])
    return rest, (lo, lo + 1.0)


def _min_margin_omega0(omega, tau, K, tails):
    """Per-sample min over k of |omega.k| |k|^tau, and the argmin (k1, tail index)."""
    omega = np.atleast_2d(omega)
    rest, cands = _candidates(omega, tails)
    tail_norm = np.abs(tails).sum(axis=1)[None, :] if tails.shape[1] else np.zeros((1, 1))
    best = np.full(omega.shape[0], np.inf)
    best_k1 = np.zeros(omega.shape[0])
    best_j = np.zeros(omega.shape[0], dtype=np.int64)
    for k1 in cands:
        norm = np.abs(k1) + tail_norm
        val = np.abs(omega[:, :1] * k1 + rest) * norm**tau
        val = np.where((norm == 0) | (norm > K), np.inf, val)
        j = np.argmin(val, axis=1)
        v = val[np.arange(val.shape[0]), j]
        better = v < best
        best = np.where(better, v, best)
        best_k1 = np.where(better, k1[np.arange(val.shape[0]), j], best_k1)
        best_j = np.where(better, j, best_j)
    return best, best_k1, best_j


def member_omega0(omega, gamma, tau, K_max=None) -> Membership:
    """Check |omega.k| >= gamma |k|^-tau for all 0 < |k| <= K_max."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    n = omega.size
    if gamma <= 0 or K_max is not None and K_max < 1:
        raise QPSmoothError("need gamma > 0 and K_max >= 1")
    K = K_max or DEFAULT_K_MAX.get(n, 50)
    tails = _tail_vectors(n, K)
    m, k1, j = _min_margin_omega0(omega[None, :], tau, K, tails)
    k = (int(k1[0]),) + tuple(int(v) for v in tails[j[0]])
    return Membership(bool(m[0] >= gamma), k, float(m[0]))


def member_omega1(omega, nu, gamma, tau, K_max=None, K0_max=None) -> Membership:
    """Check |omega.k + nu k0| >= gamma / (1 + |k|^tau) for 0 < |k| + |k0|."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    n = omega.size
    K = K_max or DEFAULT_K_MAX.get(n, 50)
    if K0_max is None:
        K0_max = int(np.ceil(K * omega.max() / nu)) + 1
    r = np.arange(-K, K + 1)
    ks = np.array(list(itertools.product(r, repeat=n)), dtype=np.int64)
    norm = np.abs(ks).sum(axis=1)
    ks, norm = ks[norm <= K], norm[norm <= K]
    wk = ks @ omega
    worst = (None, np.inf)
    base = np.floor(-wk / nu)
    for k0 in (base, base + 1.0):
        ok = (np.abs(k0) <= K0_max) & ((norm > 0) | (k0 != 0))
        val = np.where(ok, np.abs(wk + nu * k0) * (1.0 + norm.astype(float) ** tau), np.inf)
        i = int(np.argmin(val))
        if val[i] < worst[1]:
            worst = ((tuple(int(v) for v in ks[i]), int(k0[i])), float(val[i]))
    # k = 0, k0 = +-1 is covered above only if base hits it; add it explicitly
    if K0_max >= 1 and nu < worst[1]:
        worst = ((tuple([0] * n), 1), float(nu))
    return Membership(bool(worst[1] >= gamma), worst[0], worst[1])


@dataclass(frozen=True)
class MeasureEstimate:
    value: float
    stderr: float
    samples: int

    def __float__(self):
        return self.value


def sample_frequencies(n, samples, seed):
    return np.random.default_rng(seed).uniform(1.0, 2.0, size=(samples, n))


def min_margins(omega_samples, tau, K_max=None, kind="omega0", nu=2.0, chunk=2000):
    """Per-sample worst margin; a sample is excluded at gamma iff margin < gamma."""
    omega_samples = np.atleast_2d(omega_samples)
    n = omega_samples.shape[1]
    K = K_max or DEFAULT_K_MAX.get(n, 50)
    out = np.empty(omega_samples.shape[0])
    if kind == "omega0":
        tails = _tail_vectors(n, K)
        for i in range(0, out.size, chunk):
            out[i:i + chunk] = _min_margin_omega0(omega_samples[i:i + chunk], tau, K, tails)[0]
    elif kind == "omega1":
        for i, w in enumerate(omega_samples):
            out[i] = member_omega1(w, nu, 1.0, tau, K).margin
    else:
        raise QPSmoothError(f"unknown set {kind!r}")
    return out


def excluded_measure(n, gamma, tau, kind="omega0", samples=100_000, seed=0, K_max=None,
                     nu=2.0, margins=None) -> MeasureEstimate:
    """Monte Carlo fraction of [1, 2]^n outside the chosen set, with binomial stderr.

    Pass precomputed ``margins`` (from :func:`min_margins`) to evaluate
    several gammas on one shared sample set.
    """
    if samples < 10_000:
        raise QPSmoothError("need at least 1e4 samples", samples=samples)
    if gamma == 0:
        return MeasureEstimate(0.0, 0.0, samples)
    if margins is None:
        margins = min_margins(sample_frequencies(n, samples, seed), tau, K_max, kind, nu)
    frac = float(np.mean(margins < gamma))
    se = float(np.sqrt(max(frac * (1.0 - frac), 1.0 / margins.size) / margins.size))
    return MeasureEstimate(frac, se, int(margins.size))
