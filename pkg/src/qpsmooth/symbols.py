"""Sampled symbols on (x, xi) grids and the two-index grade bookkeeping.

A symbol g is of grade (m1, m2) when

    |d_xi^k1 d_x^k2 g| <= C lambda^(m1 - l k1) <x>^(m2 - k2),
    lambda = (1 + xi^2 + |x|^{2l})^{1/2l},   <x> = sqrt(1 + x^2).

Membership is never certified here. ``class_norm_estimate`` evaluates the
discrete seminorm and ``order_fit`` measures the growth exponent in lambda
over dyadic shells, which is the quantity the rest of the package compares
against predicted grades.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InsufficientRangeError, QPSmoothError, ResolutionError

ORDER_FIT_TOL = 0.1


def weight_lambda(x, xi, l):
    x = np.asarray(x, dtype=float)
    return (1.0 + np.asarray(xi, dtype=float) ** 2 + np.abs(x) ** (2.0 * l)) ** (0.5 / l)


def japanese(x):
    """<x> = sqrt(1 + x^2)."""
    return np.sqrt(1.0 + np.asarray(x, dtype=float) ** 2)


def positive_part(m):
    """[m] = max(0, m)."""
    return max(0.0, float(m))


def cutoff(E):
    """Smooth step: 0 for |E| <= 1, 1 for |E| >= 2."""
    t = np.clip(np.abs(np.asarray(E, dtype=float)) - 1.0, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        g = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return f / (f + g)


@dataclass(frozen=True)
class SymbolGrade:
    m1: float
    m2: float = 0.0

    @property
    def total(self):
        return self.m1 + positive_part(self.m2)

    def coarsen(self):
        """The embedding S^{m1,m2} in S^{m1+[m2],0}."""
        return SymbolGrade(self.total, 0.0)

    def __iter__(self):
        yield self.m1
        yield self.m2


def grade_compose(a, b, op, l, j=None):
    """Grade of a composition term.

    ``op`` is ``"product_term"`` (needs ``j``), ``"poisson"`` or
    ``"triple_bracket"`` (the remainder of the quantum bracket beyond the
    Poisson bracket).
    """
    a, b = SymbolGrade(*a), SymbolGrade(*b)
    if op == "product_term":
        if j is None:
            raise QPSmoothError("product_term needs the term index j")
        shift = j
    elif op == "poisson":
        shift = 1
    elif op == "triple_bracket":
        shift = 3
    else:
        raise QPSmoothError(f"unknown composition {op!r}")
    return SymbolGrade(a.m1 + b.m1 - l * shift, a.m2 + b.m2 - shift)


def beta_tilde(beta1, beta2, l, zero_average):
    """Effective order of a perturbation in S^{beta1, beta2}."""
    if l < 1:
        raise QPSmoothError("l must be >= 1")
    if zero_average and l > 1:
        return 2 * beta1 + positive_part(beta2) + positive_part(beta2 - 1) - 2 * l + 1
    return beta1 + positive_part(beta2)


def symbol_axis(extent, linear_step=0.25, per_octave=12, core=4.0):
    """Symmetric, strictly increasing nodes: uniform on |s| <= core, log beyond."""
    core = min(core, extent)
    n_lin = int(round(core / linear_step))
    inner = np.linspace(0.0, core, n_lin + 1)
    if extent > core:
        n_log = max(1, int(math.ceil(per_octave * math.log2(extent / core))))
        outer = np.geomspace(core, extent, n_log + 1)[1:]
        half = np.concatenate([inner, outer])
    else:
        half = inner
    return np.concatenate([-half[:0:-1], half])


def symbol_grid(x_extent, l, xi_extent=None, **kw):
    """Node pair whose rectangle covers lambda up to about ``x_extent``."""
    if xi_extent is None:
        xi_extent = x_extent**l
    return symbol_axis(x_extent, **kw), symbol_axis(xi_extent, **kw)


@dataclass
class GridSymbol:
    """A symbol sampled on the product grid ``x_nodes x xi_nodes``.

    ``values[i, j]`` is g(x_nodes[i], xi_nodes[j]). ``angle_modes`` maps an
    integer multi-index k to an array of the same shape holding the
    coefficient of exp(i k.phi); when present, ``values`` is the k = 0 part.
    """

    x_nodes: np.ndarray
    xi_nodes: np.ndarray
    values: np.ndarray
    grade: SymbolGrade = field(default_factory=lambda: SymbolGrade(0.0, 0.0))
    l: float = 1.0
    angle_modes: dict | None = None

    def __post_init__(self):
        self.x_nodes = np.asarray(self.x_nodes, dtype=float)
        self.xi_nodes = np.asarray(self.xi_nodes, dtype=float)
        self.values = np.asarray(self.values)
        self.grade = SymbolGrade(*self.grade)
        for nodes in (self.x_nodes, self.xi_nodes):
            if nodes.ndim != 1 or np.any(np.diff(nodes) <= 0):
                raise QPSmoothError("nodes must be strictly increasing 1-d arrays")
        shape = (self.x_nodes.size, self.xi_nodes.size)
        if self.values.shape != shape:
            raise QPSmoothError(f"values shape {self.values.shape} != node counts {shape}")
        if not np.all(np.isfinite(self.values)):
            raise QPSmoothError("symbol values must be finite")
        if self.angle_modes is not None:
            self.angle_modes = {
                tuple(int(i) for i in np.atleast_1d(k)): np.broadcast_to(np.asarray(v), shape).copy()
                for k, v in self.angle_modes.items()
            }

    @classmethod
    def from_function(cls, f, x_nodes, xi_nodes, grade=(0.0, 0.0), l=1.0, angle_modes=None):
        X, XI = np.meshgrid(np.asarray(x_nodes, float), np.asarray(xi_nodes, float), indexing="ij")
        modes = None
        if angle_modes is not None:
            modes = {k: fk(X, XI) for k, fk in angle_modes.items()}
        values = np.broadcast_to(f(X, XI), X.shape).copy() if f is not None else np.zeros(X.shape)
        return cls(x_nodes, xi_nodes, values, SymbolGrade(*grade), l, modes)

    @property
    def mesh(self):
        return np.meshgrid(self.x_nodes, self.xi_nodes, indexing="ij")

    @property
    def lam(self):
        X, XI = self.mesh
        return weight_lambda(X, XI, self.l)

    def with_values(self, values, grade=None):
        return GridSymbol(self.x_nodes, self.xi_nodes, values,
                          self.grade if grade is None else grade, self.l)

    def magnitude(self):
        """|g|, or the bound sum_k |g_k| over angle modes when present."""
        out = np.abs(self.values)
        if self.angle_modes:
            out = out + sum(np.abs(v) for k, v in self.angle_modes.items() if any(k))
        return out

    def derivative(self, k_xi=0, k_x=0, values=None):
        v = self.values if values is None else values
        for _ in range(k_x):
            v = np.gradient(v, self.x_nodes, axis=0, edge_order=2)
        for _ in range(k_xi):
            v = np.gradient(v, self.xi_nodes, axis=1, edge_order=2)
        return v

    def to_dict(self):
        def enc(a):
            a = np.asarray(a)
            if np.iscomplexobj(a):
                return {"re": a.real.ravel().tolist(), "im": a.imag.ravel().tolist()}
            return {"re": a.ravel().tolist()}

        out = {
            "format": "qpsmooth.GridSymbol",
            "version": 1,
            "layout": "row-major, x-major",
            "l": self.l,
            "grade": [self.grade.m1, self.grade.m2],
            "x_nodes": self.x_nodes.tolist(),
            "xi_nodes": self.xi_nodes.tolist(),
            "values": enc(self.values),
        }
        if self.angle_modes:
            out["angle_modes"] = [{"k": list(k), "values": enc(v)} for k, v in self.angle_modes.items()]
        return out

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "qpsmooth.GridSymbol":
            raise QPSmoothError("not a GridSymbol container")
        shape = (len(d["x_nodes"]), len(d["xi_nodes"]))

        def dec(v):
            a = np.asarray(v["re"], dtype=float)
            if "im" in v:
                a = a + 1j * np.asarray(v["im"], dtype=float)
            return a.reshape(shape)

        modes = None
        if "angle_modes" in d:
            modes = {tuple(m["k"]): dec(m["values"]) for m in d["angle_modes"]}
        return cls(d["x_nodes"], d["xi_nodes"], dec(d["values"]), SymbolGrade(*d["grade"]), d["l"], modes)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def class_norm_estimate(g: GridSymbol, grade, N: int, values=None):
    """Discrete sup of |d_xi^k1 d_x^k2 g| / (lambda^(m1 - l k1) <x>^(m2 - k2)), k1+k2 <= N."""
    grade = SymbolGrade(*grade)
    if N > 4 or N < 0:
        raise ResolutionError("derivative orders above 4 are not estimated", N=N)
    for nodes in (g.x_nodes, g.xi_nodes):
        if nodes.size < 2 * N + 3:
            raise ResolutionError("grid too coarse for requested N", N=N, nodes=nodes.size)
        rel = np.diff(nodes) / np.minimum(japanese(nodes[:-1]), japanese(nodes[1:]))
        if N > 0 and rel.max() > 0.5:
            raise ResolutionError("node spacing too wide relative to scale", max_rel=float(rel.max()))
    v = g.magnitude() if values is None and g.angle_modes else (g.values if values is None else values)
    X, _ = g.mesh
    lam = g.lam
    jx = japanese(X)
    best = 0.0
    for k2 in range(N + 1):
        dx = g.derivative(0, k2, values=v)
        for k1 in range(N + 1 - k2):
            d = g.derivative(k1, 0, values=dx)
            ratio = np.abs(d) / (lam ** (grade.m1 - g.l * k1) * jx ** (grade.m2 - k2))
            best = max(best, float(ratio.max()))
    return best


@dataclass
class OrderFit:
    slope: float
    intercept: float
    shells: np.ndarray
    shell_max: np.ndarray

    def __float__(self):
        return self.slope


def order_fit_samples(lam, magnitude, lam_cover=None, j_min=1, min_shells=5):
    """Least-squares slope of log2(shell max |g|) against log2(shell lambda).

    Shell j collects samples with 2^j <= lambda < 2^{j+1}; only shells lying
    entirely below ``lam_cover`` (the largest lambda whose level set is fully
    sampled) and with j >= j_min enter the fit. Empty maxima are floored at
    the smallest positive double so compactly supported data fit steeply
    negative instead of failing.
    """
    lam = np.asarray(lam, dtype=float).ravel()
    mag = np.abs(np.asarray(magnitude)).ravel()
    if lam_cover is None:
        lam_cover = lam.max()
    j = np.floor(np.log2(lam)).astype(int)
    j_hi = int(math.floor(math.log2(lam_cover))) - 1
    shells = np.arange(j_min, j_hi + 1)
    if shells.size < min_shells:
        raise InsufficientRangeError(
            f"need {min_shells} complete dyadic shells, have {shells.size}", j_hi=j_hi
        )
    tiny = np.finfo(float).tiny
    smax = np.empty(shells.size)
    for i, s in enumerate(shells):
        sel = j == s
        if not np.any(sel):
            raise InsufficientRangeError(f"dyadic shell {s} is empty")
        smax[i] = max(float(mag[sel].max()), tiny)
    if np.all(smax == tiny):
        # identically zero over the fitted range
        return OrderFit(-math.inf, -math.inf, shells, smax)
    slope, intercept = np.polyfit(shells + 0.5, np.log2(smax), 1)
    return OrderFit(float(slope), float(intercept), shells, smax)


def grid_cover(g: GridSymbol):
    return float(min(weight_lambda(g.x_nodes[-1], 0.0, g.l), weight_lambda(0.0, g.xi_nodes[-1], g.l),
                     weight_lambda(g.x_nodes[0], 0.0, g.l), weight_lambda(0.0, g.xi_nodes[0], g.l)))


def order_fit(g, j_min=1, values=None):
    """Estimated lambda-exponent m1 + [m2] of a GridSymbol (grade-independent)."""
    mag = g.magnitude() if values is None else np.abs(values)
    return order_fit_samples(g.lam, mag, grid_cover(g), j_min=j_min).slope


def stint_integral(m, M, k=0, l=2.0, kind="bracket"):
    """d^k/dM^k of I(M) = int_{-1}^1 W(My) / sqrt(1-|y|^{2l}) dy with W = <x>^m.

    Evaluated as int (d^k W)(My) y^k / sqrt(1 - |y|^{2l}) dy after y = sin theta,
    split at the peak y = 0 so adaptive quadrature resolves the 1/M scale.
    """
    from scipy.integrate import quad

    from .classical import endpoint_ratio
    from .potentials import _bracket_power_derivative

    def integrand(theta):
        y = math.sin(theta)
        d = float(_bracket_power_derivative(M * y, m / 2.0, k))
        return d * y**k / math.sqrt(float(endpoint_ratio(theta, l)))

    total = 0.0
    for a, b in ((-0.5 * math.pi, 0.0), (0.0, 0.5 * math.pi)):
        val, _ = quad(integrand, a, b, epsabs=0.0, epsrel=1e-11, limit=400)
        total += val
    return total
