"""Compiled vs numpy flow kernel: wall time and agreement.

    python benchmarks/bench_kernels.py [--traj 256] [--steps 4096] [--repeat 3]
"""
import argparse
import time

import numpy as np

from qpsmooth import _flow_py
from qpsmooth.classical import period
from qpsmooth.potentials import PotentialModel

try:
    from qpsmooth import _flowcore
except ImportError:
    _flowcore = None


def _case(pot, ntraj, steps):
    E = float(pot(0.0)) + np.geomspace(1.0, 1e4, ntraj)
    T = np.atleast_1d(period(pot, E))
    args = (pot.kind_code, pot.l, [d for d, _ in pot.corrections], [c for _, c in pot.corrections],
            np.zeros_like(E), np.sqrt(E - float(pot(0.0))), T / steps, steps, steps // 16)
    return args


def _time(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--traj", type=int, default=256)
    ap.add_argument("--steps", type=int, default=4096)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args(argv)
    print(f"{'potential':<22}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}{'max |dx|':>12}")
    for name, pot in [("harmonic", PotentialModel.harmonic()), ("quartic", PotentialModel.pure_power(2)),
                      ("smoothed l=3", PotentialModel.smoothed_power(3))]:
        args = _case(pot, a.traj, a.steps)
        tp, (xp, _) = _time(_flow_py.integrate_many, args, a.repeat)
        if _flowcore is None:
            print(f"{name:<22}{tp:>12.4f}{'n/a':>12}")
            continue
        tc, (xc, _) = _time(_flowcore.integrate_many, args, a.repeat)
        print(f"{name:<22}{tp:>12.4f}{tc:>12.4f}{tp / tc:>10.1f}{np.abs(xp - xc).max():>12.2e}")


if __name__ == "__main__":
    main()
