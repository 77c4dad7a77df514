import csv
import math

import numpy as np
import pytest

from qpsmooth.errors import ContractViolation, MaxStepsReached, OrderRegressionError, SmallDenominatorError
from qpsmooth.orbitgrid import OrbitGrid
from qpsmooth.potentials import PotentialModel
from qpsmooth.smoothing import (
    LEDGER_COLUMNS,
    LedgerEntry,
    _check_ledger,
    check_hypotheses,
    export_ledger,
    initial_state,
    run_smoothing,
    smoothing_step,
    split_cutoff,
)
from qpsmooth.symbols import GridSymbol, SymbolGrade, beta_tilde, cutoff, japanese, order_fit, symbol_grid

QUARTIC = PotentialModel.pure_power(2)
SQRT2 = math.sqrt(2.0)
GOLDEN = (1 + math.sqrt(5.0)) / 2


def W_cos(x, xi, phi):
    return japanese(x) ** 1.5 * np.cos(phi)


@pytest.fixture(scope="module")
def grid():
    return OrbitGrid.build(QUARTIC, n_psi=512, n_phi=6)


@pytest.fixture(scope="module")
def runs(grid):
    return {w: run_smoothing(W_cos, 2, 0.01, w, 1e-3, 2.0, 2.0, 4, (0.0, 1.5), potential=QUARTIC, grid=grid)
            for w in (SQRT2, GOLDEN)}


def test_split_cutoff_constant():
    xn, xin = symbol_grid(66.0, 2)
    W = GridSymbol.from_function(lambda x, xi: np.ones_like(x * xi), xn, xin, grade=(0, 0), l=2)
    W0, Wi = split_cutoff(W, QUARTIC)
    X, XI = W.mesh
    eta = cutoff(XI**2 + QUARTIC(X))
    assert np.array_equal(W0.values, eta)
    assert np.allclose(Wi.values, 1 - eta, atol=1e-15)
    assert np.array_equal(W0.values + Wi.values, W.values)


def test_split_cutoff_compact_remainder():
    xn, xin = symbol_grid(66.0, 2)
    W = GridSymbol.from_function(lambda x, xi: japanese(x) ** 1.5 + xi, xn, xin, grade=(2, 1.5), l=2)
    W0, Wi = split_cutoff(W, QUARTIC)
    X, XI = W.mesh
    assert np.all(Wi.values[XI**2 + QUARTIC(X) > 2] == 0.0)
    assert np.array_equal(W0.values + Wi.values, W.values)
    assert order_fit(Wi) <= -5


def test_hypotheses_gate():
    assert check_hypotheses(SymbolGrade(0, 1.5), 2, True) == (1.5, -1.0)
    with pytest.raises(ContractViolation):
        check_hypotheses(SymbolGrade(0, 3.5), 2, True)
    with pytest.raises(ContractViolation):
        check_hypotheses(SymbolGrade(0, 1.0), 1, False)
    with pytest.raises(ContractViolation):
        run_smoothing(lambda x, xi, phi: japanese(x) ** 3.5 * np.cos(phi), 2, 0.01, SQRT2, 1e-3, 2.0, 2.0, 1,
                      (0.0, 3.5), potential=QUARTIC, n_psi=64)


def test_first_step_grades(runs, grid):
    led = runs[SQRT2].ledger
    p1 = next(e for e in led if e.step == 1 and e.kind == "second_order")
    # beta + m - l - 1 = -1 and beta1 + m - l = -1.5 with beta2 - 1 = 0.5
    assert p1.predicted.total <= -1.0
    assert p1.fitted_order <= -1.0 + 0.1
    auto = [e for e in led if e.kind == "autonomous"]
    assert all(e.residual_sup <= 1e-4 * runs[SQRT2].scale for e in auto)
    assert all(e.fitted_order <= e.predicted.total + 0.2 for e in auto)


def test_cascade_terminates(runs):
    st = runs[SQRT2]
    assert st.terminated and st.step <= 4
    auto = [e.fitted_order for e in st.ledger if e.kind == "autonomous"]
    assert all(a - b >= 1.0 - 0.1 for a, b in zip(auto, auto[1:]))
    totals = [e.predicted.total for e in st.ledger if e.kind == "autonomous"]
    assert all(b <= a for a, b in zip(totals, totals[1:]))
    assert st.remainder_order()[1] <= -2.0


def test_z_is_omega_independent(runs):
    a, b = runs[SQRT2], runs[GOLDEN]
    for eps in (0.01, 0.1):
        assert np.abs(a.z(eps) - b.z(eps)).max() < 1e-8
        assert np.abs(a.z_tilde(eps) - b.z_tilde(eps)).max() > 1e-3 * np.abs(a.z_tilde(eps)).max()


def test_z_order(runs, grid):
    st = runs[SQRT2]
    bt = beta_tilde(0.0, 1.5, 2, True)
    z = st.heads[(2, 0)].field
    assert grid.order_fit(z).slope <= bt + 0.2


def test_z_tilde_class(runs, grid):
    st = runs[SQRT2]
    bound = 2 * beta_tilde(0.0, 1.5, 2, True) - 2 * 2 + 1
    fits = [grid.order_fit(t.field).slope for (e, w), t in st.heads.items() if w != 0]
    assert max(fits) <= bound + 0.2


def test_function_of_energy_is_trivial(grid):
    W = lambda x, xi, phi: (1 + xi**2 + QUARTIC(x)) ** 0.25 + 0 * phi
    st = initial_state(W, (0.0, 1.0), QUARTIC, SQRT2, grid=grid)
    smoothing_step(st)
    assert not st.remainder
    expected = grid.sample(lambda x, xi, phi: W(x, xi, phi) * cutoff(xi**2 + QUARTIC(x)))
    assert np.abs(st.heads[(1, 0)].field - expected).max() < 1e-12 * np.abs(expected).max()
    assert np.allclose(st.z(0.3), expected[:, 0, 0], rtol=1e-12)
    auto = next(e for e in st.ledger if e.kind == "autonomous")
    assert auto.residual_sup < 1e-10


def test_energy_and_angle_only_reduces_to_torus(grid):
    W = lambda x, xi, phi: (1 + xi**2 + QUARTIC(x)) ** 0.25 * np.cos(phi)
    st = initial_state(W, (0.0, 1.0), QUARTIC, SQRT2, grid=grid)
    smoothing_step(st)
    kinds = [k for k, _ in st.generators]
    assert kinds == ["autonomous", "torus"]
    assert all(np.abs(t.field).max() < 1e-10 for t in st.generators[0][1].values())
    g = st.generators[1][1][(1, -1)].field
    expected = grid.sample(lambda x, xi, phi: W(x, xi, phi - math.pi / 2) * cutoff(xi**2 + QUARTIC(x)) / SQRT2)
    assert np.abs(g - expected).max() < 1e-10


def test_zero_average_head(grid):
    W = lambda x, xi, phi: japanese(x) ** 0.5 * xi * np.cos(phi)
    st = initial_state(W, (2.0, 0.5), QUARTIC, SQRT2, grid=grid)
    smoothing_step(st)
    bt = beta_tilde(2.0, 0.5, 2, True)
    assert bt == 1.5
    assert max(grid.order_fit(t.field).slope for t in st.heads.values()) <= bt + 0.2


def test_addenda_independence(grid):
    Wa = lambda x, xi, phi: japanese(x) ** 1.5 * (1 + np.cos(phi))
    Wb = lambda x, xi, phi: japanese(x) * np.sin(phi) + japanese(x) ** 0.5
    sts = []
    for W, g in ((Wa, (0, 1.5)), (Wb, (0, 1.0)), (lambda *a: Wa(*a) + Wb(*a), (0, 1.5))):
        st = initial_state(W, g, QUARTIC, SQRT2, grid=grid)
        smoothing_step(st)
        sts.append(st)
    h = lambda st, eps: eps * (st.z(eps) + st.z_tilde(eps))
    d = [np.abs(h(sts[2], e) - h(sts[0], e) - h(sts[1], e)).max() for e in (0.01, 0.005)]
    assert d[0] / d[1] == pytest.approx(4.0, rel=0.05)
    first = [st.heads[(1, 0)].field for st in sts]
    assert np.abs(first[2] - first[0] - first[1]).max() < 1e-12 * np.abs(first[2]).max()


def test_max_steps_reached(grid):
    with pytest.raises(MaxStepsReached) as ei:
        run_smoothing(W_cos, 2, 0.01, SQRT2, 1e-3, 2.0, 2.0, 1, (0.0, 1.5), potential=QUARTIC, grid=grid)
    assert ei.value.diagnostics["ledger"]
    st = run_smoothing(W_cos, 2, 0.01, SQRT2, 1e-3, 2.0, 2.0, 1, (0.0, 1.5), potential=QUARTIC, grid=grid,
                       strict=False)
    assert st.step == 1 and not st.terminated


def test_order_regression_detected(grid):
    st = initial_state(W_cos, (0.0, 1.5), QUARTIC, SQRT2, grid=grid)
    st.step = 1
    st.ledger.append(LedgerEntry(1, "autonomous", SymbolGrade(-1.0, 0.0), 0.5, 0.0))
    with pytest.raises(OrderRegressionError):
        _check_ledger(st)
    st.ledger[-1] = LedgerEntry(1, "autonomous", SymbolGrade(1.0, 0.0), 0.5, 0.0)
    _check_ledger(st)
    st.step = 2
    st.ledger.append(LedgerEntry(2, "autonomous", SymbolGrade(1.0, 0.0), 0.9, 0.0))
    with pytest.raises(OrderRegressionError):
        _check_ledger(st)


def test_resonant_frequency_rejected(grid):
    # |k omega| |k|^tau = 1 at k = 1 is below gamma
    st = initial_state(W_cos, (0.0, 1.5), QUARTIC, 1.0, grid=grid)
    with pytest.raises(SmallDenominatorError):
        smoothing_step(st, gamma=1.5, tau=2.0)


def test_ledger_export(runs, tmp_path):
    path = tmp_path / "ledger.csv"
    export_ledger(runs[SQRT2].ledger, path, "quartic cos run")
    lines = path.read_text().splitlines()
    assert lines[0] == "# quartic cos run"
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == LEDGER_COLUMNS
    assert len(rows) == 1 + len(runs[SQRT2].ledger)
    assert {r[1] for r in rows[1:]} == {"second_order", "moyal_tail", "autonomous", "torus"}
