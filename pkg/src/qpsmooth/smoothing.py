"""Iterative normal-form reduction of h0 + eps W(x, xi, omega t).

The small parameter is kept symbolic: every term is labelled by its power of
eps and (for one frequency) its power of omega, and powers of eps above
``eps_order`` are dropped. One step

1. solves the homological equation for every remainder term (``autonomous``
   in the orbit angle for l > 1, ``harmonic`` jointly in orbit and torus
   angles for l = 1);
2. applies the Lie transform generated by eps^e chi,

       H' = exp(L_G) H - sum_j L_G^j dG/dt / (j+1)!,   L_G f = {f; G},

   truncated in eps, where the first-order identity R + {h0; chi} = <R> is
   inserted exactly rather than recomputed;
3. (l > 1) removes the angle dependence of the new autonomous heads
   f(E, phi) with a torus generator, omega d_phi g = f - fbar;
4. moves the parts depending on h0 only into the normal form.

Every term carries a predicted SymbolGrade next to its measured lambda
exponent from ``order_fit``; the ledger records both.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .averaging import AveragedSymbol
from .diophantine import member_omega0, member_omega1
from .errors import (
    ContractViolation,
    MaxStepsReached,
    OrderRegressionError,
    QPSmoothError,
    SmallDenominatorError,
)
from .orbitgrid import OrbitGrid
from .potentials import PotentialModel
from .symbols import GridSymbol, SymbolGrade, beta_tilde, cutoff, grade_compose

PREDICTION_SLACK = 0.2
ZERO_FIELD = 1e-12  # relative to sup |W|; smaller terms count as identically zero


# ------------------------------------------------------------------ terms

@dataclass
class Term:
    field: np.ndarray
    grade: SymbolGrade
    energy_only: bool = False  # depends on h0 (and phi) only
    source: SymbolGrade | None = None  # generators: grade of the term they solve
    _cache: dict = field(default_factory=dict, repr=False)

    def d(self, grid: OrbitGrid, which):
        if which not in self._cache:
            f = grid.d_A if which == "A" else grid.d_psi
            self._cache[which] = f(self.field)
        return self._cache[which]

    def bare(self):
        return Term(self.field, self.grade, self.energy_only, self.source)

    def scaled(self, c):
        return Term(self.field * c, self.grade, self.energy_only, self.source)


def _max_grade(a: SymbolGrade, b: SymbolGrade):
    if a.total != b.total:
        return a if a.total > b.total else b
    return a if a.m2 >= b.m2 else b


class Series(dict):
    """(eps power, omega power) -> Term."""

    def add(self, key, term: Term):
        if key in self:
            old = self[key]
            self[key] = Term(old.field + term.field, _max_grade(old.grade, term.grade),
                             old.energy_only and term.energy_only)
        else:
            self[key] = term

    def merged(self, other, sign=1.0):
        out = Series(self)
        for k, t in other.items():
            out.add(k, t if sign == 1.0 else t.scaled(sign))
        return out


def _bracket_grade(a: Term, g: Term, l):
    if a.energy_only and g.source is not None:
        # {f(h0); chi} = f'(h0) {h0; chi}, and {h0; chi} has the grade of the solved term
        return SymbolGrade(a.grade.total - 2.0 * l + g.source.m1, g.source.m2)
    return grade_compose(a.grade, g.grade, "poisson", l)


def bracket_series(grid, A: Series, G: Series, K, l, scale=1.0):
    out = Series()
    for (ea, wa), ta in A.items():
        for (eg, wg), tg in G.items():
            if ea + eg > K or (ta.energy_only and tg.energy_only):
                continue
            fld = -ta.d(grid, "A") * tg.d(grid, "psi") + tg.d(grid, "A") * ta.d(grid, "psi")
            out.add((ea + eg, wa + wg), Term(scale * fld, _bracket_grade(ta, tg, l)))
    return out


def lie_transform(grid, H: Series, first_order: Series, G: Series, Y: Series, K, l):
    """first_order + sum_{j>=1} [L^j H / j! + L^j Y / (j+1)!].

    ``first_order`` is H + L_G h0 - dG/dt with the homological identities
    already applied; ``Y`` = L_G h0 - dG/dt as computed fields.
    """
    out = Series(first_order)
    a, b = H, Y
    for j in range(1, K + 1):
        a = bracket_series(grid, a, G, K, l, 1.0 / j)
        b = bracket_series(grid, b, G, K, l, 1.0 / (j + 1))
        if not a and not b:
            break
        for k, t in a.items():
            out.add(k, t)
        for k, t in b.items():
            out.add(k, t)
    return out


# ---------------------------------------------------------------- ledger

@dataclass
class LedgerEntry:
    step: int
    kind: str
    predicted: SymbolGrade
    fitted_order: float
    residual_sup: float

    def row(self):
        return [self.step, self.kind, self.predicted.m1, self.predicted.m2, self.fitted_order, self.residual_sup]


LEDGER_COLUMNS = ["step", "kind", "predicted_m1", "predicted_m2", "fitted_order", "residual_sup"]


def export_ledger(entries, path, header_comment=None):
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(LEDGER_COLUMNS)
        for e in entries:
            w.writerow(e.row())


# ------------------------------------------------------------------ state

@dataclass
class NormalFormState:
    grid: OrbitGrid
    l: float
    omega: float
    eps_order: int
    step: int = 0
    generators: list = field(default_factory=list)  # (kind, Series)
    heads: Series = field(default_factory=Series)  # functions of h0 only
    remainder: Series = field(default_factory=Series)
    ledger: list = field(default_factory=list)
    scale: float = 1.0
    dropped: list = field(default_factory=list)  # (step, predicted grade of the neglected tail)
    terminated: bool = False

    def remainder_order(self):
        """(predicted grade, measured order) of the whole remainder; None when it vanishes."""
        pred, meas = None, -math.inf
        for t in self.remainder.values():
            if np.abs(t.field).max() <= ZERO_FIELD * self.scale:
                continue
            pred = t.grade if pred is None else _max_grade(pred, t.grade)
            meas = max(meas, self.grid.order_fit(t.field).slope)
        return pred, meas

    def _energy_sum(self, select, epsilon):
        vals = np.zeros(self.grid.E.size)
        for (e, w), t in self.heads.items():
            if select(e, w):
                vals = vals + epsilon ** (e - 1) * t.field[:, 0, 0]
        return vals

    def z(self, epsilon=1.0):
        """omega-independent autonomous part, as values on the energy grid."""
        if self.l == 1:
            return self._energy_sum(lambda e, w: e == 1, epsilon)
        return self._energy_sum(lambda e, w: w == 0, epsilon)

    def z_tilde(self, epsilon=1.0):
        if self.l == 1:
            return self._energy_sum(lambda e, w: e != 1, epsilon)
        return self._energy_sum(lambda e, w: w != 0, epsilon)

    def z_symbol(self, epsilon=1.0):
        return AveragedSymbol(self.grid.E, self.z(epsilon), self.grid.potential)

    def r(self, epsilon):
        """Numerical remainder field r with h_reg = h0 + eps z + eps z~ + eps r."""
        out = np.zeros(self.grid.shape)
        for (e, w), t in self.remainder.items():
            out = out + epsilon ** (e - 1) * t.field
        return out


# ------------------------------------------------------------- W handling

def split_cutoff(W: GridSymbol, potential: PotentialModel):
    """(W * eta(h0), W * (1 - eta(h0))) on W's grid."""
    X, XI = W.mesh
    eta = cutoff(XI**2 + potential(X))
    modes0 = {k: v * eta for k, v in W.angle_modes.items()} if W.angle_modes else None
    modesi = {k: v * (1.0 - eta) for k, v in W.angle_modes.items()} if W.angle_modes else None
    W0 = GridSymbol(W.x_nodes, W.xi_nodes, W.values * eta, W.grade, W.l, modes0)
    Wi = GridSymbol(W.x_nodes, W.xi_nodes, W.values - W0.values, W.grade, W.l, modesi)
    return W0, Wi


def _as_angle_callable(W):
    """Callable W(x, xi, phi) from a callable or a GridSymbol (cubic interpolation of modes)."""
    if callable(W) and not isinstance(W, GridSymbol):
        return W
    if not isinstance(W, GridSymbol):
        raise QPSmoothError("W must be callable or a GridSymbol")

    def interp(vals):
        return RegularGridInterpolator((W.x_nodes, W.xi_nodes), np.asarray(vals), method="cubic",
                                       bounds_error=False, fill_value=None)

    if W.angle_modes:
        parts = {k: interp(v) for k, v in W.angle_modes.items()}

        def f(x, xi, phi):
            x, xi, phi = np.broadcast_arrays(x, xi, phi)
            pts = np.stack([x.ravel(), xi.ravel()], -1)
            out = 0.0
            for k, ip in parts.items():
                kk = np.atleast_1d(k)[0]
                out = out + ip(pts).reshape(x.shape) * np.exp(1j * kk * phi)
            return np.real(out)

        return f
    ip = interp(W.values)

    def g(x, xi, phi):
        x, xi, phi = np.broadcast_arrays(x, xi, phi)
        return ip(np.stack([x.ravel(), xi.ravel()], -1)).reshape(x.shape)

    return g


def check_hypotheses(grade: SymbolGrade, l, zero_average):
    beta = grade.m1 + max(grade.m2, 0.0)
    bt = beta_tilde(grade.m1, grade.m2, l, zero_average)
    if not (beta < 2 * l - 1 and bt < l) and l > 1:
        raise ContractViolation("need beta1+[beta2] < 2l-1 and beta~ < l", beta=beta, beta_tilde=bt)
    if l == 1 and not beta < 1:
        raise ContractViolation("l = 1 needs beta < 1", beta=beta)
    return beta, bt


def initial_state(W, grade, potential: PotentialModel, omega, grid: OrbitGrid | None = None,
                  eps_order=None, **grid_kw) -> NormalFormState:
    """State for h0 + eps W0 with W0 = W eta(h0); W * (1 - eta) is left out (compact in energy)."""
    l = potential.l
    omega = float(np.atleast_1d(omega)[0]) if np.size(omega) == 1 else None
    if omega is None:
        raise QPSmoothError("the driver handles one forcing frequency")
    if eps_order is None:
        eps_order = 4 if l == 1 else 2
    if grid is None:
        grid_kw.setdefault("n_phi", 2 * eps_order + 2)
        grid_kw.setdefault("n_psi", 1024)
        grid = OrbitGrid.build(potential, **grid_kw)
    f = _as_angle_callable(W)
    W0 = grid.sample(lambda x, xi, phi: f(x, xi, phi) * cutoff(xi**2 + potential(x)))
    g = SymbolGrade(*grade)
    st = NormalFormState(grid, l, omega, eps_order, scale=float(np.abs(W0).max()))
    st.remainder.add((1, 0), Term(W0, g))
    return st


# ------------------------------------------------------------------- step

def _ledger(st, kind, pred, meas, res):
    st.ledger.append(LedgerEntry(st.step, kind, pred if pred is not None else SymbolGrade(-math.inf, 0.0),
                                 float(meas), float(res)))


def _harvest(grid, S: Series, mean):
    """Split each term into mean(term) and the rest."""
    heads, rest = Series(), Series()
    for k, t in S.items():
        m = mean(t.field)
        heads.add(k, Term(m, SymbolGrade(t.grade.total, 0.0), True))
        rest.add(k, Term(t.field - m, t.grade, t.energy_only))
    return heads, rest


def _psiphi_mean(F):
    return np.broadcast_to(F.mean(axis=(1, 2), keepdims=True), F.shape).copy()


def _series_order(st, S):
    pred, meas = None, -math.inf
    for t in S.values():
        if np.abs(t.field).max() <= ZERO_FIELD * st.scale:
            continue
        pred = t.grade if pred is None else _max_grade(pred, t.grade)
        meas = max(meas, st.grid.order_fit(t.field).slope)
    return pred, meas


def smoothing_step(st: NormalFormState, gamma=1e-3, tau=2.0, check=True) -> NormalFormState:
    """One full cycle; mutates and returns ``st``."""
    grid, l, K, omega = st.grid, st.l, st.eps_order, st.omega
    st.step += 1
    R = st.remainder
    G, Y = Series(), Series()
    first = Series()
    solved_heads = Series()
    res = 0.0
    kind = "harmonic" if l == 1 else "autonomous"
    for (e, w), t in R.items():
        if l == 1:
            chi, head = grid.solve_joint(t.field, omega)
            h0b = grid.h0_bracket(chi)
            dot = grid.dot(chi, omega)
            res = max(res, float(np.abs(t.field + h0b - dot - head).max()))
            gt = Term(chi, SymbolGrade(t.grade.total, 0.0), source=t.grade)
            G.add((e, w), gt)
            Y.add((e, w), Term(h0b - dot, t.grade))
            solved_heads.add((e, w), Term(head, SymbolGrade(t.grade.total, 0.0), True))
        else:
            chi, head = grid.solve_autonomous(t.field)
            h0b = grid.h0_bracket(chi)
            res = max(res, float(np.abs(t.field + h0b - head).max()))
            cg = SymbolGrade(t.grade.total - l + 1.0, 0.0)
            G.add((e, w), Term(chi, cg, source=t.grade))
            dot = Term(-grid.dot(chi, omega), cg)
            Y.add((e, w), Term(h0b, t.grade))
            Y.add((e, w + 1), dot)
            first.add((e, w + 1), dot)
            solved_heads.add((e, w), Term(head, SymbolGrade(t.grade.total, 0.0), True))
    H = Series(st.heads).merged(R)
    out = lie_transform(grid, H, first, G, Y, K, l)
    st.generators.append((kind, Series({k: v.bare() for k, v in G.items()})))
    # measured order of everything created at second order (the ``p1`` of the first step)
    pred_new, meas_new = _series_order(st, Series({k: v for k, v in out.items() if k[0] >= 2}))
    _ledger(st, "second_order", pred_new, meas_new, float("nan"))
    st.dropped.append((st.step, _tail_grade(R, G, l)))
    _ledger(st, "moyal_tail", st.dropped[-1][1], float("nan"), float("nan"))
    # split off h0-only parts and the angle heads
    rest = out.merged(solved_heads)
    new_heads = Series(st.heads)
    if l == 1:
        hh, rr = _harvest(grid, rest, _psiphi_mean)
        for k, t in hh.items():
            new_heads.add(k, t)
        st.remainder = rr
        pred, meas = st.remainder_order()
        _ledger(st, kind, pred, meas, res)
    else:
        angle_heads, rr = _harvest(grid, rest, grid.psi_mean)
        st.remainder = rr
        pred, meas = st.remainder_order()
        _ledger(st, kind, pred, meas, res)
        _torus(st, angle_heads, new_heads, gamma, tau)
    st.heads = Series({k: Term(v.field, v.grade, True) for k, v in new_heads.items()
                       if np.abs(v.field).max() > ZERO_FIELD * st.scale})
    st.remainder = Series({k: Term(v.field, v.grade, v.energy_only) for k, v in st.remainder.items()
                           if np.abs(v.field).max() > ZERO_FIELD * st.scale})
    if check:
        _check_ledger(st)
    return st


def _torus(st, F: Series, heads: Series, gamma, tau):
    """Remove phi from the heads f(E, phi): generator g with omega d_phi g = f - fbar."""
    grid, l, K, omega = st.grid, st.l, st.eps_order, st.omega
    kmax = grid.n_phi // 2 - 1
    ok = member_omega0([omega], gamma, tau, max(kmax, 1))
    if not ok.member:
        raise SmallDenominatorError("omega fails the Diophantine check", k=ok.worst_k, margin=ok.margin)
    G, Y = Series(), Series()
    first = Series()
    res = 0.0
    for (e, w), t in F.items():
        g, fbar = grid.solve_torus(t.field, omega)
        dot = grid.dot(g, omega)
        res = max(res, float(np.abs(dot - (t.field - fbar)).max()))
        G.add((e, w - 1), Term(g, t.grade, True))
        Y.add((e, w), Term(-dot, t.grade, True))
        first.add((e, w), Term(fbar, t.grade, True))
    H = Series(heads).merged(F).merged(st.remainder)
    first = first.merged(st.remainder)
    out = lie_transform(grid, H, first, G, Y, K, l)
    st.generators.append(("torus", Series({k: v.bare() for k, v in G.items()})))
    # h0-only parts join the heads, the rest is remainder
    hh, rr = _harvest(grid, out, _psiphi_mean)
    for k, t in hh.items():
        heads.add(k, t)
    st.remainder = rr
    pred, meas = st.remainder_order()
    _ledger(st, "torus", pred, meas, res)


def _tail_grade(R: Series, G: Series, l):
    """Grade of the first neglected quantum correction (triple bracket of the leading pair)."""
    best = None
    for t in R.values():
        for g in G.values():
            tg = grade_compose(t.grade, g.grade, "triple_bracket", l)
            best = tg if best is None else _max_grade(best, tg)
    return best if best is not None else SymbolGrade(-math.inf, 0.0)


def _check_ledger(st):
    main = [e for e in st.ledger if e.kind in ("autonomous", "harmonic", "torus") and e.step == st.step]
    for e in main:
        if math.isfinite(e.fitted_order) and e.fitted_order > e.predicted.total + PREDICTION_SLACK:
            raise OrderRegressionError("measured order exceeds prediction", entry=e, ledger=st.ledger)
    prev = [e for e in st.ledger if e.kind == main[-1].kind and e.step == st.step - 1]
    if prev and main[-1].fitted_order > prev[-1].fitted_order + PREDICTION_SLACK:
        raise OrderRegressionError("remainder order increased", ledger=st.ledger)


def final_order(st):
    """Measured order of the remainder after the last completed step."""
    return st.remainder_order()[1]


def run_smoothing(W, l, epsilon, omega, gamma, tau, kappa_target, max_steps, grade,
                  potential: PotentialModel | None = None, eps_order=None, grid=None, strict=True,
                  **grid_kw) -> NormalFormState:
    """Iterate smoothing_step until the remainder's fitted order is <= -kappa_target."""
    if potential is None:
        potential = PotentialModel.harmonic() if l == 1 else PotentialModel.pure_power(l)
    if potential.l != l:
        raise QPSmoothError("potential order differs from l")
    st = initial_state(W, grade, potential, omega, grid, eps_order, **grid_kw)
    zero_avg = bool(np.abs(st.grid.psi_mean(st.remainder[(1, 0)].field)).max() <= 1e-10 * st.scale)
    check_hypotheses(SymbolGrade(*grade), l, zero_avg)
    if l == 1:
        nu = float(st.grid.nu.mean())
        m = member_omega1([st.omega], nu, gamma, tau, st.grid.n_phi // 2, st.grid.n_psi // 2)
        if not m.member:
            raise SmallDenominatorError("omega fails the resonance guard", k=m.worst_k, margin=m.margin)
    st.epsilon = epsilon
    for _ in range(max_steps):
        smoothing_step(st, gamma, tau)
        if final_order(st) <= -kappa_target:
            st.terminated = True
            return st
    if strict:
        raise MaxStepsReached("remainder order above target", ledger=st.ledger, state=st)
    return st
