"""Command-line entry point: ``qpsmooth <command> --config PATH --out PATH``.

Every CSV starts with one ``#`` metadata line (schema version, command,
config hash, seed, package version, gate status). A JSON summary is written
next to the CSV. Errors are printed as JSON with a machine-readable code and
exit status 2.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .averaging import chi_autonomous, orbit_average
from .classical import period
from .config import ExperimentConfig, load_config
from .diophantine import excluded_measure, member_omega0, min_margins, sample_frequencies
from .errors import QPSmoothError
from .floquet import (
    Forcing,
    build_basis,
    evolve,
    first_order_shift,
    japanese_power,
    perturbation_matrix,
    quasienergies,
    shift_exponent,
)
from .smoothing import LEDGER_COLUMNS, run_smoothing
from .symbols import cutoff, order_fit, symbol_grid

CSV_SCHEMA = "qpsmooth-csv/1"
COMMANDS = ("period", "average", "homolog", "smooth", "evolve", "quasienergy", "measure")


class Emitter:
    def __init__(self, cmd, cfg: ExperimentConfig, seed, conforming, out):
        self.meta = {"schema": CSV_SCHEMA, "command": cmd, "config_hash": cfg.hash, "seed": seed,
                     "version": __version__, "conforming": conforming}
        self.out = Path(out) if out else None

    def csv(self, header, rows):
        buf = io.StringIO()
        buf.write("# " + " ".join(f"{k}={v}" for k, v in self.meta.items()) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        text = buf.getvalue()
        if self.out is None:
            sys.stdout.write(text)
        else:
            self.out.write_text(text)
        return text

    def summary(self, data):
        doc = dict(self.meta, **data)
        text = json.dumps(doc, indent=2, sort_keys=True, default=_json_default)
        if self.out is None:
            sys.stderr.write(text + "\n")
        else:
            self.out.with_suffix(".json").write_text(text + "\n")
        return doc


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if dataclasses.is_dataclass(o):
        return dataclasses.asdict(o)
    return str(o)


def resolve_omega(cfg: ExperimentConfig, seed):
    """Explicit frequencies, or the first Diophantine draw from the seeded sampler."""
    fs = cfg.omega
    if fs.values is not None:
        return np.atleast_1d(np.asarray(fs.values, dtype=float))
    rng_seed = fs.seed if fs.seed is not None else seed
    for w in sample_frequencies(fs.n, 1000, rng_seed):
        if member_omega0(w, fs.gamma, fs.tau).member:
            return w
    raise QPSmoothError("no Diophantine frequency found in 1000 draws", gamma=fs.gamma, tau=fs.tau)


def _amplitude(cfg):
    a0 = japanese_power(cfg.perturbation.exponent)
    if cfg.perturbation.family == "a0xi_trig":
        return lambda x, xi: a0(x) * xi
    return lambda x, xi: a0(x) + 0.0 * xi


def _trig(cfg):
    from .floquet import TRIG

    return TRIG[cfg.perturbation.trig]


def cmd_period(cfg, em, seed):
    pot = cfg.potential.build()
    E = np.asarray(cfg.sweep.energies, dtype=float)
    T = period(pot, E)
    em.csv(["E", "T"], zip(E, T))
    slope = float(np.polyfit(np.log(E), np.log(T), 1)[0]) if E.size > 1 else None
    return em.summary({"loglog_slope": slope})


def cmd_average(cfg, em, seed):
    pot = cfg.potential.build()
    E = np.asarray(cfg.sweep.energies, dtype=float)
    avg = orbit_average(_amplitude(cfg), E, pot)
    em.csv(["E", "average"], zip(E, avg))
    return em.summary({})


def cmd_homolog(cfg, em, seed):
    pot = cfg.potential.build()
    l = pot.l
    amp = _amplitude(cfg)
    g = cfg.perturbation.grade(l)

    def p(x, xi):
        return amp(x, xi) * cutoff(xi**2 + pot(x))

    grid = symbol_grid(66.0, l)
    sol = chi_autonomous(p, pot, grid, grade=tuple(g), E_max=max(cfg.sweep.energies))
    fit = order_fit(sol.chi)
    fit_dx = order_fit(sol.chi, values=sol.chi.derivative(0, 1))
    rows = [("residual_sup", sol.residual_sup), ("order_chi", fit), ("order_dx_chi", fit_dx),
            ("predicted_chi", g.total - l + 1.0), ("predicted_dx_chi", g.total - l)]
    em.csv(["quantity", "value"], rows)
    return em.summary(dict(rows))


def cmd_smooth(cfg, em, seed):
    pot = cfg.potential.build()
    omega = resolve_omega(cfg, seed)
    amp = _amplitude(cfg)
    trig = _trig(cfg)
    g = cfg.perturbation.grade(pot.l)
    st = run_smoothing(lambda x, xi, phi: amp(x, xi) * trig(phi), pot.l, cfg.epsilon, omega,
                       cfg.omega.gamma, cfg.omega.tau, cfg.smooth.kappa, cfg.smooth.max_steps, tuple(g),
                       potential=pot, eps_order=cfg.smooth.eps_order, strict=False, n_psi=cfg.smooth.n_psi)
    em.csv(LEDGER_COLUMNS, [e.row() for e in st.ledger])
    return em.summary({"omega": omega, "steps": st.step, "terminated": st.terminated,
                       "z_sup": float(np.abs(st.z(cfg.epsilon)).max())})


def _forcing(cfg, seed, basis, epsilon=None):
    omega = resolve_omega(cfg, seed)
    M = perturbation_matrix(basis, japanese_power(cfg.perturbation.exponent),
                            cfg.perturbation.family == "a0xi_trig")
    return Forcing(M, omega, cfg.perturbation.trig, cfg.epsilon if epsilon is None else epsilon)


def cmd_evolve(cfg, em, seed):
    pot = cfg.potential.build()
    basis = build_basis(pot, cfg.evolve.N)
    fo = _forcing(cfg, seed, basis)
    psi0 = np.zeros(basis.N, dtype=complex)
    psi0[cfg.evolve.initial_mode] = 1.0
    r = evolve(basis, fo, cfg.evolve.t_final, cfg.evolve.samples_per_period, cfg.evolve.h_max, psi0)
    em.csv(["t", "norm_h0", "norm_h1", "norm_h2", "tail_mass"],
           [(t, *n, tm) for t, n, tm in zip(r.t, r.norms, r.tail)])
    return em.summary({"omega": fo.omega, "h1_ratio": r.h1_ratio, "unitarity_drift": r.unitarity_drift,
                       "truncation_warning": r.truncation_warning})


def cmd_quasienergy(cfg, em, seed):
    pot = cfg.potential.build()
    basis = build_basis(pot, cfg.evolve.N)
    fo = _forcing(cfg, seed, basis)
    if len(fo.omega) != 1:
        raise QPSmoothError("quasi-energies need one forcing frequency")
    q = quasienergies(basis, fo)
    oracle = first_order_shift(basis, fo)
    j = np.arange(basis.N)
    em.csv(["j", "lambda", "quasi_energy", "shift", "first_order", "flagged"],
           zip(j, q.lambdas, q.quasi, q.shift, oracle, q.flagged))
    try:
        expo = shift_exponent(j, q.shift, flagged=q.flagged)
    except QPSmoothError:
        expo = None
    return em.summary({"omega": fo.omega, "shift_exponent": expo, "flagged": int(q.flagged.sum())})


def cmd_measure(cfg, em, seed):
    sw = cfg.sweep
    samples = sample_frequencies(sw.n, sw.samples, seed)
    margins = min_margins(samples, sw.tau, kind=sw.kind)
    rows = []
    for gamma in sw.gammas:
        m = excluded_measure(sw.n, gamma, sw.tau, sw.kind, sw.samples, seed, margins=margins)
        rows.append((gamma, m.value, m.stderr))
    em.csv(["gamma", "excluded", "stderr"], rows)
    g = np.array([r[0] for r in rows])
    v = np.array([r[1] for r in rows])
    slope, icpt = np.polyfit(g, v, 1)
    r2 = 1.0 - np.sum((v - (slope * g + icpt)) ** 2) / max(np.sum((v - v.mean()) ** 2), 1e-300)
    return em.summary({"slope": slope, "intercept": icpt, "r2": r2})


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def build_parser():
    ap = argparse.ArgumentParser(prog="qpsmooth", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="YAML experiment file (defaults when omitted)")
        sp.add_argument("--out", type=Path, help="CSV path; the JSON summary goes next to it")
        sp.add_argument("--seed", type=int, help="overrides the config seed")
        sp.add_argument("--force", action="store_true", help="run configurations that fail the hypotheses")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        seed = cfg.seed if args.seed is None else args.seed
        conforming, _ = cfg.check_gate(args.force)
        em = Emitter(args.command, cfg, seed, conforming, args.out)
        HANDLERS[args.command](cfg, em, seed)
    except QPSmoothError as exc:
        err = {"error": exc.code, "type": type(exc).__name__, "message": str(exc),
               "diagnostics": {k: _json_default(v) if not isinstance(v, (int, float, str)) else v
                               for k, v in getattr(exc, "diagnostics", {}).items() if k not in ("ledger", "state")}}
        sys.stderr.write(json.dumps(err, default=str) + "\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
