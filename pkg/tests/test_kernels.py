import os
import subprocess
import sys

import numpy as np
import pytest

from qpsmooth import _flow_py, _kernels
from qpsmooth.classical import period
from qpsmooth.potentials import PotentialModel

try:
    from qpsmooth import _flowcore
except ImportError:
    _flowcore = None

POTS = [PotentialModel.harmonic(), PotentialModel.pure_power(2), PotentialModel.pure_power(1.5),
        PotentialModel.smoothed_power(3), PotentialModel.pure_power(2, ((2.0, 0.5),))]


def _args(p, steps=256):
    E = float(p(0.0)) + np.geomspace(1.0, 1e3, 7)
    T = np.atleast_1d(period(p, E))
    return (p.kind_code, p.l, [d for d, _ in p.corrections], [c for _, c in p.corrections],
            np.zeros_like(E), np.sqrt(E - float(p(0.0))), T / steps, steps, 16)


@pytest.mark.skipif(_flowcore is None, reason="extension not built")
@pytest.mark.parametrize("p", POTS, ids=lambda p: f"{p.kind}-{p.l}-{len(p.corrections)}")
def test_compiled_matches_python(p):
    a = _args(p)
    xp, xip = _flow_py.integrate_many(*a)
    xc, xic = _flowcore.integrate_many(*a)
    scale = np.abs(xp).max() + np.abs(xip).max()
    assert np.abs(xp - xc).max() <= 1e-12 * scale and np.abs(xip - xic).max() <= 1e-12 * scale
    x = np.linspace(-5, 5, 101)
    dv = _flow_py.dV(p.kind_code, p.l, a[2], a[3], x)
    assert np.allclose(_flowcore.dV(p.kind_code, p.l, a[2], a[3], x), dv, rtol=1e-13, atol=1e-13)


def test_orbit_closes_after_one_period(quartic):
    xs, xis = _kernels.integrate_many(*_args(quartic, 4096)[:-1], 4096)
    E = np.geomspace(1.0, 1e3, 7)
    assert np.abs(xs[:, -1]).max() < 1e-8 * np.sqrt(E).max()
    assert np.abs(xis[:, -1] - np.sqrt(E)).max() < 1e-8 * np.sqrt(E).max()


def test_env_forces_fallback():
    env = dict(os.environ, QPSMOOTH_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import qpsmooth; print(qpsmooth.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_backend_reported():
    assert _kernels.BACKEND in ("python", "cython")
    if _flowcore is not None and os.environ.get("QPSMOOTH_PURE_PYTHON") is None:
        assert _kernels.BACKEND == "cython"
