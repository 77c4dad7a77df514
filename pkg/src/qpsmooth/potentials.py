"""Confining even potentials V(x) ~ |x|^{2l} with closed-form derivatives.

Three families are supported::

    harmonic        V = x^2                  (l = 1 only)
    pure_power      V = |x|^{2l}
    smoothed_power  V = <x>^{2l} = (1 + x^2)^l

each optionally carrying homogeneous corrections ``c |x|^d`` with
``d = 2l - 2j`` for integer ``j >= 1`` and ``d >= 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import QPSmoothError, UnsupportedOrderError

KINDS = ("harmonic", "pure_power", "smoothed_power")
KIND_CODES = {"harmonic": 0, "pure_power": 1, "smoothed_power": 2}
MAX_DERIVATIVE = 6


def _falling(p, k):
    out = 1.0
    for i in range(k):
        out *= p - i
    return out


def _abs_power_derivative(x, p, k):
    """k-th derivative of |x|^p, valid for x != 0 (and at 0 when p >= k)."""
    x = np.asarray(x, dtype=float)
    c = _falling(p, k)
    if c == 0.0:
        return np.zeros_like(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        mag = np.abs(x) ** (p - k)
        return c * mag * np.sign(x) if k % 2 else c * mag


def _bracket_power_derivative(x, a, k):
    """k-th derivative of (1 + x^2)^a via the term list x^i (1+x^2)^(a-j)."""
    x = np.asarray(x, dtype=float)
    terms = {(0, 0): 1.0}  # (power of x, shift j) -> coeff, meaning x^i u^(a-j)
    for _ in range(k):
        new = {}
        for (i, j), c in terms.items():
            if i > 0:
                new[(i - 1, j)] = new.get((i - 1, j), 0.0) + c * i
            new[(i + 1, j + 1)] = new.get((i + 1, j + 1), 0.0) + c * 2.0 * (a - j)
        terms = {key: val for key, val in new.items() if val != 0.0}
    u = 1.0 + x * x
    out = np.zeros_like(x)
    for (i, j), c in terms.items():
        out = out + c * x**i * u ** (a - j)
    return out


@dataclass(frozen=True)
class PotentialModel:
    """An admissible potential. Immutable.

    ``corrections`` is a tuple of ``(degree, coefficient)`` pairs; each adds
    the homogeneous term ``coefficient * |x|**degree``.
    """

    kind: str
    l: float = 1.0
    corrections: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise QPSmoothError(f"unknown potential kind {self.kind!r}")
        if self.l < 1:
            raise QPSmoothError("exponent l must be >= 1")
        object.__setattr__(self, "l", float(self.l))
        corr = tuple((float(d), float(c)) for d, c in self.corrections)
        object.__setattr__(self, "corrections", corr)
        if self.kind == "harmonic":
            if self.l != 1.0 or corr:
                raise QPSmoothError("harmonic potential is exactly x^2 with l = 1")
        elif self.l == 1.0:
            raise QPSmoothError("for l = 1 only the harmonic potential x^2 is admitted")
        for d, _ in corr:
            j = (2.0 * self.l - d) / 2.0
            if d < 0 or j < 1 or abs(j - round(j)) > 1e-12:
                raise QPSmoothError(
                    f"correction degree {d} is not of the form 2l - 2j, j >= 1"
                )

    @classmethod
    def harmonic(cls):
        return cls("harmonic", 1.0)

    @classmethod
    def pure_power(cls, l, corrections=()):
        if l == 1:
            return cls.harmonic()
        return cls("pure_power", l, tuple(corrections))

    @classmethod
    def smoothed_power(cls, l, corrections=()):
        return cls("smoothed_power", l, tuple(corrections))

    @property
    def kind_code(self):
        return KIND_CODES[self.kind]

    @property
    def is_exact_power(self):
        """True when V(q_M y)/E == |y|^{2l} identically."""
        return self.kind in ("harmonic", "pure_power") and not self.corrections

    def __call__(self, x):
        return self.derivative(x, 0)

    def derivative(self, x, k=0):
        if not (0 <= int(k) <= MAX_DERIVATIVE) or int(k) != k:
            raise UnsupportedOrderError(
                f"derivative order {k} not supported (0..{MAX_DERIVATIVE})", k=k
            )
        k = int(k)
        x = np.asarray(x, dtype=float)
        if self.kind == "harmonic":
            out = {0: x * x, 1: 2.0 * x, 2: np.full_like(x, 2.0)}.get(k)
            if out is None:
                out = np.zeros_like(x)
        elif self.kind == "pure_power":
            out = _abs_power_derivative(x, 2.0 * self.l, k)
        else:
            out = _bracket_power_derivative(x, self.l, k)
        for d, c in self.corrections:
            out = out + c * _abs_power_derivative(x, d, k)
        return out

    def correction_value(self, x, index):
        d, c = self.corrections[index]
        return c * np.abs(np.asarray(x, dtype=float)) ** d

    def to_dict(self):
        return {"kind": self.kind, "l": self.l, "corrections": [list(t) for t in self.corrections]}


def eval_derivative(p: PotentialModel, x, k: int):
    """d^k V / dx^k at x."""
    out = p.derivative(x, k)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    worst_x: float
    worst_value: float
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def validate_assumptions(p: PotentialModel, grid_extent: float, n_points: int) -> ValidationReport:
    """Check symmetry, monotonicity off the origin and the leading asymptotics.

    Failures are reported, never raised.
    """
    if grid_extent <= 0 or n_points < 16:
        raise QPSmoothError("need grid_extent > 0 and n_points >= 16")
    x = np.linspace(-grid_extent, grid_extent, n_points)
    v = p(x)
    dv = p.derivative(x, 1)
    scale = np.maximum(1.0, np.abs(v))

    asym = np.abs(v - p(-x)) / scale
    i = int(np.argmax(asym))
    checks = [AssumptionCheck("symmetry", bool(asym[i] <= 1e-12), float(x[i]), float(asym[i]))]

    # V' != 0 off the origin: on x > 0, x V'(x) must stay positive.
    pos = x > 0
    xp, dvp = x[pos], dv[pos]
    bad = xp * dvp <= 0
    if np.any(bad):
        worst = float(xp[np.argmin(xp * dvp)])
        sign_change = np.nonzero(np.sign(dvp[:-1]) != np.sign(dvp[1:]))[0]
        if sign_change.size:
            i0 = sign_change[-1]
            a, b = xp[i0], xp[i0 + 1]
            if dvp[i0] == 0:
                worst = float(a)
            else:
                worst = float(brentq(lambda s: float(p.derivative(s, 1)), a, b, xtol=1e-14))
        checks.append(
            AssumptionCheck("nondegenerate", False, worst, float(p.derivative(worst, 1)),
                            "critical point of V off the origin")
        )
    else:
        j = int(np.argmin(np.abs(dvp)))
        checks.append(AssumptionCheck("nondegenerate", True, float(xp[j]), float(dvp[j])))

    # V(x)/|x|^{2l} -> 1: deviation small at the edge and shrinking outward.
    outer = xp[xp >= 0.5 * grid_extent]
    dev = np.abs(p(outer) / outer ** (2.0 * p.l) - 1.0)
    shrinking = bool(np.all(np.diff(dev) <= 1e-12 * np.maximum(1.0, dev[1:])))
    ok = bool(dev[-1] <= 0.1 and shrinking)
    checks.append(AssumptionCheck("asymptotic", ok, float(outer[-1]), float(dev[-1])))
    return ValidationReport(checks)
