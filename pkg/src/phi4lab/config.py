"""Experiment configuration and run manifests.

A run is described by a single JSON document validated against the schema
published as :data:`CONFIG_SCHEMA`.  Constraints that relate several fields
(band containment, the admissible window for the regularity budget, time
grid divisibility) are checked after schema validation, and all violations
are reported together, each tagged with the offending field.

:class:`RunManifest` records what a command produced: the configuration
echo, the code version, the per-replica seed bindings and a content digest
for every output file.  Two manifests that agree outside the wall-clock
entry certify byte-identical numerical outputs.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from . import __version__
from .coeffs import CoefficientSet, as_poly, poly_extrema
from .grids import TorusGrid
from .noise import TimeGrid

__all__ = [
    "CONFIG_SCHEMA",
    "ConfigError",
    "ExperimentConfig",
    "RunManifest",
]

_POLY = {
    "type": ["number", "array"],
    "items": {"type": "number"},
    "minItems": 1,
    "maxItems": 9,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "phi4lab experiment configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["dimension", "N", "cutoff", "T", "dt", "sigma", "master_seed"],
    "properties": {
        "dimension": {"type": "integer", "minimum": 1, "maximum": 3},
        "N": {"type": "integer", "minimum": 2, "multipleOf": 2},
        "cutoff": {"type": "integer", "minimum": 1},
        "cutoff_list": {
            "type": "array",
            "items": {"type": "integer", "minimum": 1},
            "minItems": 1,
        },
        "T": {"type": "number", "exclusiveMinimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "sigma": {
            "anyOf": [
                {"type": "number", "minimum": 0},
                {
                    "type": "array",
                    "items": {"type": "number", "minimum": 0},
                    "minItems": 1,
                },
            ]
        },
        "f2": _POLY,
        "a": _POLY,
        "b0": _POLY,
        "gamma": _POLY,
        "a3": _POLY,
        "eps": {"type": "number"},
        "lam": {"type": "number"},
        "replicas": {"type": "integer", "minimum": 1},
        "h_grid": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "out_dir": {"type": "string", "minLength": 1},
        "record_every": {"type": "integer", "minimum": 1},
        "ctilde_replicas": {"type": "integer", "minimum": 1},
        "label": {"type": "string"},
    },
}

_VALIDATOR = Draft202012Validator(CONFIG_SCHEMA)


class ConfigError(ValueError):
    """Invalid configuration; ``fields`` names every offending entry."""

    def __init__(self, problems):
        self.problems = list(problems)
        self.fields = [f for f, _ in self.problems]
        lines = "; ".join(f"{f}: {msg}" for f, msg in self.problems)
        super().__init__(f"invalid config: {lines}")


def _poly_or_none(value):
    return None if value is None else as_poly(value)


class ExperimentConfig:
    """Validated experiment description.

    Build one with :meth:`from_dict` or :meth:`from_json`; the constructor
    itself assumes already-validated values.  ``sigma`` is normalized to a
    tuple so commands can iterate noise levels uniformly.
    """

    def __init__(self, doc: dict):
        self.dimension = int(doc["dimension"])
        self.N = int(doc["N"])
        self.cutoff = int(doc["cutoff"])
        self.T = float(doc["T"])
        self.dt = float(doc["dt"])
        sig = doc["sigma"]
        self.sigmas = tuple(float(s) for s in (sig if isinstance(sig, list) else [sig]))
        self.f2 = as_poly(doc.get("f2", 0.0))
        self.a = as_poly(doc.get("a", -1.0))
        self.b0 = as_poly(doc.get("b0", 0.0))
        self.gamma = _poly_or_none(doc.get("gamma"))
        self.a3 = _poly_or_none(doc.get("a3"))
        self.eps = float(doc.get("eps", 0.05))
        self.lam = float(doc.get("lam", self.eps / 6.0))
        self.replicas = int(doc.get("replicas", 1))
        hg = doc.get("h_grid")
        self.h_grid = None if hg is None else np.asarray(hg, dtype=np.float64)
        self.master_seed = int(doc["master_seed"])
        self.out_dir = str(doc.get("out_dir", "out"))
        self.cutoff_list = tuple(int(n) for n in doc.get("cutoff_list", [self.cutoff]))
        self.record_every = int(doc.get("record_every", 1))
        self.ctilde_replicas = int(doc.get("ctilde_replicas", 24))
        self.label = str(doc.get("label", "run"))

    # -- construction ------------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        problems = []
        for err in sorted(_VALIDATOR.iter_errors(doc), key=lambda e: str(e.path)):
            field = ".".join(str(p) for p in err.absolute_path) or "<document>"
            problems.append((field, err.message))
        if problems:
            raise ConfigError(problems)
        cfg = cls(doc)
        problems = cfg._cross_field_problems()
        if problems:
            raise ConfigError(problems)
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ConfigError([("<document>", "config must be a JSON object")])
        return cls.from_dict(doc)

    def _cross_field_problems(self):
        problems = []
        if 2 * self.cutoff > self.N:
            problems.append(
                ("cutoff", f"band cutoff {self.cutoff} exceeds N/2 = {self.N // 2}")
            )
        steps = round(self.T / self.dt)
        if steps < 1 or abs(steps * self.dt - self.T) > 1e-9 * self.T:
            problems.append(("dt", f"dt = {self.dt} does not divide the horizon T = {self.T}"))
        if not 0.0 < self.eps < 1.0 / 16.0:
            problems.append(("eps", f"eps must lie in (0, 1/16), got {self.eps}"))
        lam_hi = min(self.eps / 3.0, 1.0)
        if not 0.0 < self.lam < lam_hi:
            problems.append(
                ("lam", f"lam must lie in (0, min(eps/3, 1)) = (0, {lam_hi:g}), got {self.lam}")
            )
        if self.h_grid is not None:
            if np.any(self.h_grid < 0) or np.any(np.diff(self.h_grid) <= 0):
                problems.append(
                    ("h_grid", "thresholds must be non-negative and strictly increasing")
                )
        if self.a3 is not None:
            hi = poly_extrema(self.a3, 0.0, self.T)[1]
            if hi >= 0:
                problems.append(
                    ("a3", f"cubic leading coefficient must stay negative on [0, T], max = {hi:g}")
                )
        return problems

    # -- derived objects ---------------------------------------------------

    @property
    def steps(self) -> int:
        return round(self.T / self.dt)

    def grid(self) -> TorusGrid:
        return TorusGrid(self.N, self.dimension)

    def timegrid(self) -> TimeGrid:
        return TimeGrid(self.T, self.steps)

    def coeffs(self) -> CoefficientSet:
        return CoefficientSet(self.f2, self.a, self.T)

    def replica_seeds(self) -> list[list[int]]:
        """The (master seed, replica index) stream bindings actually used."""
        return [[self.master_seed, r] for r in range(self.replicas)]

    def to_dict(self) -> dict:
        """Canonical echo: defaults resolved, sigma always a list."""
        doc = {
            "dimension": self.dimension,
            "N": self.N,
            "cutoff": self.cutoff,
            "cutoff_list": list(self.cutoff_list),
            "T": self.T,
            "dt": self.dt,
            "sigma": list(self.sigmas),
            "f2": self.f2.coef.tolist(),
            "a": self.a.coef.tolist(),
            "b0": self.b0.coef.tolist(),
            "gamma": None if self.gamma is None else self.gamma.coef.tolist(),
            "a3": None if self.a3 is None else self.a3.coef.tolist(),
            "eps": self.eps,
            "lam": self.lam,
            "replicas": self.replicas,
            "h_grid": None if self.h_grid is None else self.h_grid.tolist(),
            "master_seed": self.master_seed,
            "out_dir": self.out_dir,
            "record_every": self.record_every,
            "ctilde_replicas": self.ctilde_replicas,
            "label": self.label,
        }
        return doc


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest:
    """Inventory of one command invocation.

    ``outputs`` maps file names (relative to the output directory) to their
    SHA-256 digests, so equality of two manifests outside ``wall_clock``
    certifies byte-identical outputs.
    """

    def __init__(self, config_echo: dict, seeds, wall_clock: float, outputs: dict,
                 version: str = __version__, command: str = ""):
        self.config = dict(config_echo)
        self.version = str(version)
        self.seeds = [list(s) for s in seeds]
        self.wall_clock = float(wall_clock)
        self.outputs = dict(outputs)
        self.command = str(command)

    @classmethod
    def collect(cls, config: ExperimentConfig, out_dir, files, wall_clock: float,
                command: str = "") -> "RunManifest":
        """Digest the named files (paths relative to ``out_dir``)."""
        outputs = {str(name): _sha256(Path(out_dir) / name) for name in files}
        return cls(config.to_dict(), config.replica_seeds(), wall_clock, outputs,
                   command=command)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "version": self.version,
            "seeds": self.seeds,
            "wall_clock": self.wall_clock,
            "outputs": self.outputs,
        }

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path) as fh:
            doc = json.load(fh)
        return cls(doc["config"], doc["seeds"], doc["wall_clock"], doc["outputs"],
                   version=doc["version"], command=doc.get("command", ""))

    def equal_modulo_timing(self, other: "RunManifest") -> bool:
        a, b = self.to_dict(), other.to_dict()
        a.pop("wall_clock")
        b.pop("wall_clock")
        return a == b
