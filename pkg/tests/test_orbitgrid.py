import math

import numpy as np
import pytest

from qpsmooth.errors import QPSmoothError
from qpsmooth.orbitgrid import OrbitGrid, derivative_matrix, fd_weights
from qpsmooth.potentials import PotentialModel


@pytest.fixture(scope="module")
def hgrid():
    return OrbitGrid.build(PotentialModel.harmonic(), lam_cover=30, n_psi=128, n_phi=4)


@pytest.fixture(scope="module")
def qgrid():
    return OrbitGrid.build(PotentialModel.pure_power(2), lam_cover=66, n_psi=256, n_phi=4)


def test_fd_weights_exact_on_polynomials():
    offs = np.arange(-3, 4)
    w = fd_weights(offs)
    for d in range(7):
        assert np.dot(w, offs.astype(float) ** d) == pytest.approx(1.0 if d == 1 else 0.0, abs=1e-12)
    D = derivative_matrix(20, 0.1)
    u = 0.1 * np.arange(20)
    assert np.allclose(D @ u**3, 3 * u**2, atol=1e-10)


def test_harmonic_orbits_are_circles(hgrid):
    rootE = np.sqrt(hgrid.E)[:, None]
    assert np.allclose(hgrid.x, rootE * np.sin(hgrid.psi), atol=1e-9 * rootE.max())
    assert np.allclose(hgrid.xi, rootE * np.cos(hgrid.psi), atol=1e-9 * rootE.max())
    assert np.allclose(hgrid.nu, 2.0, atol=1e-12)


def test_energy_conserved_on_grid(qgrid):
    h = qgrid.xi**2 + qgrid.potential(qgrid.x)
    assert np.abs(h / qgrid.E[:, None] - 1).max() < 1e-10


def test_canonical_pair(qgrid):
    X = qgrid.sample(lambda x, xi, phi: x)
    XI = qgrid.sample(lambda x, xi, phi: xi)
    one = qgrid.bracket(X, XI)
    inner = slice(3, -3)
    assert np.abs(one[inner] - 1).max() < 1e-5


def test_h0_bracket(qgrid):
    p = qgrid.potential
    H = qgrid.sample(lambda x, xi, phi: xi**2 + p(x))
    F = qgrid.sample(lambda x, xi, phi: x * xi)
    # {h0; x xi} = -2 xi^2 + x V'(x)
    exact = qgrid.sample(lambda x, xi, phi: -2 * xi**2 + x * p.derivative(x, 1))
    scale = np.abs(exact).max(axis=(1, 2), keepdims=True)
    assert np.abs((qgrid.h0_bracket(F) - exact) / scale).max() < 1e-9
    inner = slice(3, -3)
    assert np.abs((qgrid.bracket(H, F) - exact)[inner] / scale[inner]).max() < 1e-5


def test_psi_mean_of_energy(qgrid):
    p = qgrid.potential
    H = qgrid.sample(lambda x, xi, phi: xi**2 + p(x))
    assert np.allclose(qgrid.psi_mean(H)[:, 0, 0], qgrid.E, rtol=1e-12)
    assert np.abs(qgrid.psi_mean(qgrid.sample(lambda x, xi, phi: xi))).max() < 1e-8 * np.sqrt(qgrid.E[-1])


def test_solve_autonomous_harmonic(hgrid):
    P = hgrid.sample(lambda x, xi, phi: x**2)
    chi, avg = hgrid.solve_autonomous(P)
    exact = hgrid.sample(lambda x, xi, phi: -x * xi / 4)
    assert np.abs(chi - exact).max() < 1e-9 * hgrid.E[-1]
    assert np.allclose(avg[:, 0, 0], hgrid.E / 2, rtol=1e-12)
    assert np.abs(P + hgrid.h0_bracket(chi) - avg).max() < 1e-9 * hgrid.E[-1]


def test_solve_torus_and_joint(qgrid):
    w = math.sqrt(2.0)
    f = qgrid.sample(lambda x, xi, phi: x * np.cos(phi) + xi**2)
    g, fbar = qgrid.solve_torus(f, w)
    assert np.abs(qgrid.dot(g, w) - (f - fbar)).max() < 1e-9 * np.abs(f).max()
    hg = OrbitGrid.build(PotentialModel.harmonic(), lam_cover=20, n_psi=64, n_phi=4)
    P = hg.sample(lambda x, xi, phi: x**2 * (1 + np.cos(phi)))
    chi, head = hg.solve_joint(P, w)
    res = P + hg.h0_bracket(chi) - hg.dot(chi, w) - head
    assert np.abs(res).max() < 1e-9 * np.abs(P).max()
    assert hg.min_denominator(w, 2) == pytest.approx(2 - w, rel=1e-9)


@pytest.mark.parametrize("f, order", [(lambda x, xi, phi: x, 1.0), (lambda x, xi, phi: xi, 2.0),
                                      (lambda x, xi, phi: xi**2 + x**4, 4.0)])
def test_order_fit_on_grid(qgrid, f, order):
    assert qgrid.order_fit(qgrid.sample(f)).slope == pytest.approx(order, abs=0.1)


def test_grid_sizes_must_be_even():
    with pytest.raises(QPSmoothError):
        OrbitGrid.build(PotentialModel.harmonic(), lam_cover=10, n_psi=63)


def test_spectral_tail_small_for_smooth_data(qgrid):
    assert qgrid.spectral_tail(qgrid.sample(lambda x, xi, phi: x * xi)) < 1e-10
