"""Pure-numpy flow kernel. Same contract as the compiled ``_flowcore``."""
import numpy as np

# Yoshida sixth-order composition of the Stormer-Verlet step (solution A).
_W1 = -1.17767998417887
_W2 = 0.235573213359357
_W3 = 0.784513610477560
_W0 = 1.0 - 2.0 * (_W1 + _W2 + _W3)
STAGES = np.array([_W3, _W2, _W1, _W0, _W1, _W2, _W3])


def dV(kind, l, deg, coef, x):
    if kind == 0:
        out = 2.0 * x
    elif kind == 1:
        out = 2.0 * l * np.abs(x) ** (2.0 * l - 1.0) * np.sign(x)
    else:
        out = 2.0 * l * x * (1.0 + x * x) ** (l - 1.0)
    for d, c in zip(deg, coef):
        if d != 0.0:
            with np.errstate(divide="ignore", invalid="ignore"):
                term = c * d * np.abs(x) ** (d - 1.0) * np.sign(x)
            out = out + np.where(x == 0.0, 0.0, term)
    return out


def integrate_many(kind, l, deg, coef, x0, xi0, h, nsteps, record_every):
    """Integrate xdot = 2 xi, xidot = -V'(x) for many trajectories at once.

    ``h`` holds one step size per trajectory. Returns arrays of shape
    ``(ntraj, nsteps // record_every + 1)`` with the initial point first.
    """
    x = np.array(x0, dtype=float)
    xi = np.array(xi0, dtype=float)
    h = np.asarray(h, dtype=float)
    deg = np.asarray(deg, dtype=float)
    coef = np.asarray(coef, dtype=float)
    nrec = nsteps // record_every + 1
    xs = np.empty((x.size, nrec))
    xis = np.empty((x.size, nrec))
    xs[:, 0], xis[:, 0] = x, xi
    r = 1
    for step in range(1, nsteps + 1):
        for w in STAGES:
            hw = h * w
            xi -= 0.5 * hw * dV(kind, l, deg, coef, x)
            x += 2.0 * hw * xi
            xi -= 0.5 * hw * dV(kind, l, deg, coef, x)
        if step % record_every == 0:
            xs[:, r], xis[:, r] = x, xi
            r += 1
    return xs, xis
