"""Experiment configuration: a YAML file whose keys mirror ExperimentConfig.

Unknown keys anywhere are errors. ``config_hash`` is a SHA-256 of the
canonical JSON form, stamped on every output.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import yaml

from .errors import ConfigError, GateViolation
from .potentials import PotentialModel
from .symbols import SymbolGrade, beta_tilde, positive_part


@dataclass
class PotentialSpec:
    kind: str = "pure_power"
    l: float = 2.0
    corrections: list = field(default_factory=list)

    def build(self) -> PotentialModel:
        corr = tuple(tuple(c) for c in self.corrections)
        if self.kind == "harmonic":
            return PotentialModel.harmonic()
        if self.kind == "pure_power":
            return PotentialModel.pure_power(self.l, corr)
        if self.kind == "smoothed_power":
            return PotentialModel.smoothed_power(self.l, corr)
        raise ConfigError(f"unknown potential kind {self.kind!r}")


@dataclass
class PerturbationSpec:
    family: str = "a0_trig"  # a0_trig | a0xi_trig
    exponent: float = 1.5  # a0 = <x>^exponent
    trig: str = "cos"

    def grade(self, l) -> SymbolGrade:
        if self.family == "a0_trig":
            return SymbolGrade(0.0, self.exponent)
        if self.family == "a0xi_trig":
            return SymbolGrade(float(l), self.exponent)
        raise ConfigError(f"unknown perturbation family {self.family!r}")


@dataclass
class FrequencySpec:
    values: Optional[list] = None
    n: int = 1
    gamma: float = 1e-3
    tau: float = 2.0
    seed: Optional[int] = None


@dataclass
class EvolveSpec:
    N: int = 128
    t_final: float = 1000.0
    h_max: float = 0.01
    samples_per_period: int = 16
    initial_mode: int = 0


@dataclass
class SmoothSpec:
    kappa: float = 2.0
    max_steps: int = 4
    eps_order: Optional[int] = None
    n_psi: int = 1024


@dataclass
class SweepSpec:
    energies: list = field(default_factory=lambda: [1.0, 10.0, 100.0, 1000.0, 10000.0])
    gammas: list = field(default_factory=lambda: [0.01, 0.02, 0.05, 0.1])
    tau: float = 3.0
    samples: int = 100_000
    kind: str = "omega0"
    n: int = 2


@dataclass
class ExperimentConfig:
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    epsilon: float = 0.01
    omega: FrequencySpec = field(default_factory=FrequencySpec)
    evolve: EvolveSpec = field(default_factory=EvolveSpec)
    smooth: SmoothSpec = field(default_factory=SmoothSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    seed: int = 0
    expect_reducible: bool = True

    def canonical(self):
        return json.dumps(dataclasses.asdict(self), sort_keys=True, separators=(",", ":"))

    @property
    def hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def gate(self):
        """(conforming, details) for the reducibility hypotheses."""
        l = self.potential.l if self.potential.kind != "harmonic" else 1.0
        g = self.perturbation.grade(l)
        zero_avg = self.perturbation.trig != "one_plus_cos"
        b = g.m1 + positive_part(g.m2)
        bt = beta_tilde(g.m1, g.m2, l, zero_avg)
        ok = b < 2 * l - 1 and bt < l
        return ok, {"beta": b, "beta_tilde": bt, "l": l}

    def check_gate(self, force=False):
        ok, info = self.gate()
        if self.expect_reducible and not ok and not force:
            raise GateViolation("configuration violates the reducibility hypotheses", **info)
        return ok, info


def _build(cls, data, path):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown keys in {path or 'config'}: {sorted(unknown)}")
    kw = {}
    for k, v in data.items():
        sub = _SECTIONS.get((cls, k))
        kw[k] = _build(sub, v, f"{path}.{k}" if path else k) if sub else v
    return cls(**kw)


_SECTIONS = {
    (ExperimentConfig, "potential"): PotentialSpec,
    (ExperimentConfig, "perturbation"): PerturbationSpec,
    (ExperimentConfig, "omega"): FrequencySpec,
    (ExperimentConfig, "evolve"): EvolveSpec,
    (ExperimentConfig, "smooth"): SmoothSpec,
    (ExperimentConfig, "sweep"): SweepSpec,
}


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    return _build(ExperimentConfig, data or {}, "")


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())
