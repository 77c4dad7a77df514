"""Acceptance criteria, one PASS/FAIL line each (see the "acceptance criteria"
section at the end of the pytest output, or run this file directly)."""
import math
import time

import numpy as np
import pytest
from scipy.special import beta as beta_fn

from qpsmooth import classical as C
from qpsmooth.averaging import chi_autonomous, orbit_average
from qpsmooth.diophantine import excluded_measure, min_margins, sample_frequencies
from qpsmooth.floquet import (
    Forcing,
    build_basis,
    evolve,
    first_order_shift,
    japanese_power,
    perturbation_matrix,
    quasienergies,
    shift_exponent,
)
from qpsmooth.potentials import PotentialModel
from qpsmooth.smoothing import run_smoothing
from qpsmooth.symbols import ORDER_FIT_TOL, cutoff, japanese, order_fit, stint_integral, symbol_grid
from qpsmooth.weyl import (
    OperatorMatrix,
    PolySymbol,
    h0_eigensystem,
    lie_transform_matrix,
    moyal_star_truncated,
    weyl_quantize,
)

SQRT2 = math.sqrt(2.0)
GOLDEN = (1 + math.sqrt(5.0)) / 2


def test_1_harmonic_golden(accept, harmonic):
    t0 = time.perf_counter()
    T = C.period(harmonic, np.array([1.0, 4.0, 100.0]))
    dT = float(np.abs(T - math.pi).max())
    pts = np.random.default_rng(0).uniform(-3, 3, size=(2, 200))
    grid = (np.linspace(-3, 3, 13), np.linspace(-3, 3, 11))
    s2 = chi_autonomous(lambda x, xi: x**2, harmonic, grid, validate=pts)
    s1 = chi_autonomous(lambda x, xi: x, harmonic, grid, validate=pts)
    X, XI = s2.chi.mesh
    d_chi = max(np.abs(s2.chi.values + X * XI / 4).max(), np.abs(s1.chi.values + XI / 2).max())
    res = max(s2.residual_sup, s1.residual_sup)
    E = np.array([1.0, 7.0, 300.0])
    d_avg = float(np.abs(orbit_average(lambda x, xi: x**2, E, harmonic) / (E / 2) - 1).max())
    lam = h0_eigensystem(harmonic, 64).lambdas
    d_eig = float(np.abs(lam[:32] - (2 * np.arange(32) + 1)).max())
    el = time.perf_counter() - t0
    ok = dT < 1e-8 and res < 1e-10 and d_chi < 1e-10 and d_avg < 1e-9 and d_eig < 1e-7
    assert accept(1, ok, f"harmonic golden: |T-pi|={dT:.1e} chi residual={res:.1e} |chi-exact|={d_chi:.1e} "
                         f"<x^2>/(E/2)-1={d_avg:.1e} |lambda_j-(2j+1)|={d_eig:.1e}", el, 1.0)


def test_2_quartic_quadrature(accept, quartic):
    t0 = time.perf_counter()
    T1 = float(C.period(quartic, np.array([1.0]))[0])
    oracle = beta_fn(0.25, 0.5) / 2
    E = np.geomspace(10, 1e4, 13)
    slope = float(np.polyfit(np.log(E), np.log(C.period(quartic, E)), 1)[0])
    el = time.perf_counter() - t0
    ok = abs(T1 - 2.62206) <= 1e-4 and abs(T1 - oracle) <= 1e-4 and abs(slope + 0.25) <= 0.02
    assert accept(2, ok, f"quartic T(1)={T1:.6f} (Beta oracle {oracle:.6f}) slope={slope:.4f}", el, 10.0)


def test_3_homological_gain(accept, quartic):
    t0 = time.perf_counter()
    sol = chi_autonomous(lambda x, xi: japanese(x) ** 1.5 * cutoff(xi**2 + quartic(x)), quartic,
                         symbol_grid(66.0, 2), grade=(0.0, 1.5), E_max=1e4)
    o = order_fit(sol.chi)
    od = order_fit(sol.chi, values=sol.chi.derivative(0, 1))
    el = time.perf_counter() - t0
    ok = o <= 0.5 + ORDER_FIT_TOL and od <= o - 1 + ORDER_FIT_TOL
    assert accept(3, ok, f"order(chi)={o:.3f} <= 0.6, order(d_x chi)={od:.3f} <= {o - 0.9:.3f}", el, 60.0)


def test_4_moyal_weyl(accept):
    t0 = time.perf_counter()
    X, XI = PolySymbol.monomial(1, 0), PolySymbol.monomial(0, 1)
    c = moyal_star_truncated(X, XI, 1) - (X * XI + PolySymbol([[0.5j]]))
    exact = c.is_zero(0.0)
    basis = h0_eigensystem(PotentialModel.harmonic(), 64)
    a = X * X + X * XI
    b = XI * XI + X * 2.0
    A, B = weyl_quantize(a, basis).entries, weyl_quantize(b, basis).entries
    n = basis.N - 2  # quadratics couple j to j +- 2 only, so this block of A B is exact
    star = weyl_quantize(moyal_star_truncated(a, b, 2), basis).entries
    d_star = float(np.abs(star[:n, :n] - (A @ B)[:n, :n]).max())
    herm = max(weyl_quantize(s, basis).hermitian_defect for s in (a, b, X * XI))
    U = lie_transform_matrix(OperatorMatrix(np.eye(basis.N)), weyl_quantize(a, basis), 0.01)
    from scipy.linalg import expm

    E = expm(0.01j * 0.5 * (A + A.conj().T))
    unit = float(np.abs(np.linalg.svd(E, compute_uv=False) - 1).max())
    unit = max(unit, float(np.abs(U.entries - np.eye(basis.N)).max()))
    el = time.perf_counter() - t0
    ok = exact and d_star < 1e-8 and herm < 1e-10 and unit < 1e-10
    assert accept(4, ok, f"x#xi exact={exact} star-vs-product={d_star:.1e} hermitian={herm:.1e} "
                         f"unitarity={unit:.1e}", el, 30.0)


@pytest.fixture(scope="module")
def quartic_runs():
    W = lambda x, xi, phi: japanese(x) ** 1.5 * np.cos(phi)
    t0 = time.perf_counter()
    runs = {w: run_smoothing(W, 2, 0.01, w, 1e-3, 2.0, 2.0, 4, (0.0, 1.5),
                             potential=PotentialModel.pure_power(2)) for w in (SQRT2, GOLDEN)}
    return runs, time.perf_counter() - t0


def test_5_smoothing_ledger(accept, quartic_runs):
    runs, el = quartic_runs
    st = runs[SQRT2]
    auto = [e.fitted_order for e in st.ledger if e.kind == "autonomous"]
    drops = [a - b for a, b in zip([1.5] + auto, auto)]
    p1 = next(e for e in st.ledger if e.step == 1 and e.kind == "second_order")
    dz = max(float(np.abs(runs[SQRT2].z(e) - runs[GOLDEN].z(e)).max()) for e in (0.01, 0.1))
    ok = (st.terminated and st.step <= 4 and all(d >= 1 - ORDER_FIT_TOL for d in drops)
          and p1.predicted.total <= -1 and p1.fitted_order <= -1 + ORDER_FIT_TOL and dz < 1e-8)
    assert accept(5, ok, f"steps={st.step} remainder orders={[round(a, 3) for a in auto]} "
                         f"drops={[round(d, 3) for d in drops]} step-1 head predicted {p1.predicted.total:g} "
                         f"fitted {p1.fitted_order:.3f}; |z(sqrt2)-z(golden)|={dz:.1e}", el, 300.0)


def test_6_l1_cascade(accept):
    t0 = time.perf_counter()
    harmonic = PotentialModel.harmonic()
    beta = 0.5
    fits = {}
    for name, trig in (("1+cos", lambda p: 1 + np.cos(p)), ("cos", np.cos)):
        W = lambda x, xi, phi, trig=trig: japanese(x) ** beta * trig(phi)
        st = run_smoothing(W, 1, 0.01, SQRT2, 1e-3, 2.0, 4.5, 4, (0.0, beta), potential=harmonic,
                           eps_order=6, strict=False)
        fits[name] = [e.fitted_order for e in st.ledger if e.kind == "harmonic"]
    el = time.perf_counter() - t0
    f = fits["1+cos"]
    drops = [b - a for a, b in zip(f, f[1:])]
    ok = len(drops) >= 3 and all(abs(d - (beta - 2)) <= ORDER_FIT_TOL for d in drops[:3])
    info = f"pure cos forcing orders {[round(v, 3) for v in fits['cos']]}"
    assert accept(6, ok, f"W=<x>^0.5(1+cos phi) orders={[round(v, 3) for v in f]} "
                         f"differences={[round(d, 3) for d in drops]} vs beta-2={beta - 2}; {info}", el, 300.0)


def test_7_diophantine_measure(accept):
    t0 = time.perf_counter()
    mg = min_margins(sample_frequencies(2, 100_000, 0), 3.0)
    gs = np.array([0.01, 0.02, 0.05, 0.1])
    est = [excluded_measure(2, g, 3.0, margins=mg) for g in gs]
    v = np.array([e.value for e in est])
    slope, icpt = np.polyfit(gs, v, 1)
    r2 = 1 - np.sum((v - slope * gs - icpt) ** 2) / np.sum((v - v.mean()) ** 2)
    ratio = v[2] / excluded_measure(2, 0.025, 3.0, margins=mg).value
    el = time.perf_counter() - t0
    ok = r2 >= 0.9 and abs(ratio - 2) <= 0.3
    assert accept(7, ok, f"R^2={r2:.4f} m(0.05)/m(0.025)={ratio:.3f} intercept={icpt:.1e}", el, 60.0)


def test_8_floquet(accept, quartic):
    t0 = time.perf_counter()
    basis = build_basis(quartic, 128)
    M = perturbation_matrix(basis, japanese_power(1.5))
    r = evolve(basis, Forcing(M, SQRT2, "cos", 0.01), 1000.0)
    j = np.arange(basis.N)
    expo, shifts = {}, []
    for trig in ("one_plus_cos", "cos"):
        q = quasienergies(basis, Forcing(M, SQRT2, trig, 0.005))
        expo[trig] = shift_exponent(j, q.shift, flagged=q.flagged)
        if trig == "one_plus_cos":
            shifts.append(q.shift)
    q2 = quasienergies(basis, Forcing(M, SQRT2, "one_plus_cos", 0.0025))
    low = j <= 20
    # energy shifts at eps and eps/2 should be in ratio 2
    ratio = 0.005 * shifts[0][low] / (0.0025 * q2.shift[low])
    lin = float(np.abs(ratio / 2 - 1).max())
    oracle = float(np.abs(shifts[0][low] / first_order_shift(basis, Forcing(M, SQRT2, "one_plus_cos", 0.005))[low]
                          - 1).max())
    el = time.perf_counter() - t0
    ok = (r.h1_ratio <= 2 and r.unitarity_drift < 1e-6 and all(e <= 0.65 for e in expo.values())
          and lin <= 0.2)
    assert accept(8, ok, f"H1 ratio={r.h1_ratio:.6f} drift={r.unitarity_drift:.1e} exponent "
                         f"(1+cos)={expo['one_plus_cos']:.3f} (cos)={expo['cos']:.3f} linearity={lin:.1e} "
                         f"first-order oracle={oracle:.1e}", el, 1800.0)


def _tilde_v_constant(p, E, k, y=np.linspace(-1, 1, 41)):
    h = 1e-3
    vals = [np.array([C.tilde_v(p, E * math.exp(i * h), yy) for yy in y]) for i in (-1, 0, 1)]
    if k == 1:
        d = (vals[2] - vals[0]) / (2 * h)
    else:
        d = (vals[2] - 2 * vals[1] + vals[0]) / h**2 - (vals[2] - vals[0]) / (2 * h)
    return float(np.abs(d).max())


def test_9_appendix_oracles(accept):
    t0 = time.perf_counter()
    M = np.geomspace(10, 1e4, 10)
    worst = -math.inf
    parts = []
    for m in (1.5, -0.5):
        for k in (0, 1, 2):
            I = np.array([abs(stint_integral(m, Mi, k)) for Mi in M])
            s = float(np.polyfit(np.log(M), np.log(I), 1)[0])
            worst = max(worst, s - (max(m, 0) - k + 0.1))
            parts.append(f"m={m:g},k={k}:{s:.3f}")
    consts = []
    for p in (PotentialModel.smoothed_power(2), PotentialModel.pure_power(3, [(4.0, 1.0), (2.0, 0.25)])):
        for k in (1, 2):
            consts.append([_tilde_v_constant(p, E, k) for E in np.geomspace(10, 1e4, 7)])
    consts = np.array(consts)
    # uniform: the constant at the top of the range does not exceed the one at the bottom
    uniform = bool(np.all(consts[:, -1] <= consts[:, 0] * (1 + 1e-9)))
    el = time.perf_counter() - t0
    ok = worst <= 0 and uniform
    assert accept(9, ok, f"stint slopes {' '.join(parts)}; tilde-v constants max={consts.max():.3e} "
                         f"uniform={uniform}", el, 60.0)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
