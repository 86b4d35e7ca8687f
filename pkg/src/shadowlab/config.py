"""Experiment configuration: parsing, validation and round-trip serialization."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from .fields import BUILTIN_NAMES, VectorFieldSpec, builtin_field, field_from_dict
from .frames import normal_basis
from .flow import FlowEngine

PATTERNS = ("zero", "constant-normal", "random")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field."""


@dataclass
class ExperimentConfig:
    flow: object                       # built-in name or inline field definition
    base_point: list
    N: int = 5
    N_list: list = None
    d: float = 1e-2
    d_ladder: list = None
    kappa: int = 0
    r: float = 0.1
    inhomogeneity: str = "constant-normal"
    seed: int = None
    trials: int = 0
    L_sweep: list = None
    budget: int = 20
    strict: bool = True
    t_uniform: int = 60
    s_uniform: int = 24
    negative_fraction: float = 0.1
    ub_points_per_axis: int = 7
    step: float = 1e-3

    # -- construction -------------------------------------------------------

    @classmethod
    def from_dict(cls, data) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be a mapping")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"{unknown[0]}: unknown field (known: {', '.join(sorted(known))})")
        for req in ("flow", "base_point"):
            if req not in data:
                raise ConfigError(f"{req}: required field is missing")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text()
        try:
            data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
        except (yaml.YAMLError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: cannot parse {path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    # -- validation ---------------------------------------------------------

    def validate(self):
        if isinstance(self.flow, str):
            if self.flow not in BUILTIN_NAMES:
                raise ConfigError(f"flow: unknown flow {self.flow!r}; known flows: {', '.join(BUILTIN_NAMES)}")
        elif not isinstance(self.flow, dict):
            raise ConfigError("flow: must be a built-in name or a field definition mapping")
        try:
            self.base_point = [float(v) for v in self.base_point]
        except (TypeError, ValueError):
            raise ConfigError("base_point: must be a list of numbers") from None
        _positive_int(self, "N")
        if self.N_list is not None:
            if not self.N_list or any(int(n) != n or n < 1 for n in self.N_list):
                raise ConfigError("N_list: must be a nonempty list of positive integers")
            if list(self.N_list) != sorted(set(self.N_list)):
                raise ConfigError("N_list: must be strictly increasing")
            self.N_list = [int(n) for n in self.N_list]
        if not (isinstance(self.d, (int, float)) and 0 < self.d <= 0.04):
            raise ConfigError("d: must be a number in (0, 0.04]")
        self.d = float(self.d)
        if self.d_ladder is not None:
            if not self.d_ladder or any(not 0 < x <= 0.04 for x in self.d_ladder):
                raise ConfigError("d_ladder: entries must lie in (0, 0.04]")
            self.d_ladder = [float(x) for x in self.d_ladder]
        if self.kappa not in (0, 1):
            raise ConfigError("kappa: must be 0 or 1")
        if not (isinstance(self.r, (int, float)) and self.r > 0):
            raise ConfigError("r: must be positive")
        self.r = float(self.r)
        if self.inhomogeneity not in PATTERNS:
            raise ConfigError(f"inhomogeneity: must be one of {', '.join(PATTERNS)}")
        if self.seed is not None and (int(self.seed) != self.seed or self.seed < 0):
            raise ConfigError("seed: must be a nonnegative integer")
        if self.trials < 0 or int(self.trials) != self.trials:
            raise ConfigError("trials: must be a nonnegative integer")
        if self.L_sweep is not None:
            if not self.L_sweep or any(x <= 0 for x in self.L_sweep):
                raise ConfigError("L_sweep: entries must be positive")
            self.L_sweep = [float(x) for x in self.L_sweep]
        _positive_int(self, "budget")
        _positive_int(self, "t_uniform")
        _positive_int(self, "s_uniform")
        _positive_int(self, "ub_points_per_axis")
        if not 0 <= self.negative_fraction <= 1:
            raise ConfigError("negative_fraction: must lie in [0, 1]")
        if not self.step > 0:
            raise ConfigError("step: must be positive")

    def require_seed(self, command: str):
        """Seeds are mandatory whenever the command draws random numbers."""
        random = (
            self.inhomogeneity == "random"
            or (command == "probe" and self.trials > 0)
            or command == "defect"  # UB sampling and negative-offset spot checks
        )
        if random and self.seed is None:
            raise ConfigError(f"seed: required for '{command}' with this configuration")

    # -- resolution ---------------------------------------------------------

    def field_spec(self) -> VectorFieldSpec:
        if isinstance(self.flow, str):
            return builtin_field(self.flow)
        try:
            return field_from_dict(self.flow)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"flow: {exc}") from None

    def engine(self) -> FlowEngine:
        spec = self.field_spec()
        if len(self.base_point) != spec.dim:
            raise ConfigError(f"base_point: expected {spec.dim} coordinates, got {len(self.base_point)}")
        return FlowEngine(spec, h=self.step)


def _positive_int(cfg, name):
    val = getattr(cfg, name)
    if isinstance(val, bool) or not isinstance(val, (int, np.integer)) or val < 1:
        raise ConfigError(f"{name}: must be a positive integer")
    setattr(cfg, name, int(val))


def inhomogeneity_along(engine: FlowEngine, p0, N: int, pattern: str, seed=None) -> np.ndarray:
    """z_j for j = 0 .. 2N along the orbit of p0 at integer times.

    ``constant-normal`` is the first normal basis vector at each orbit point,
    ``random`` draws unit vectors uniformly on the sphere.
    """
    n = engine.dim
    if pattern == "zero":
        return np.zeros((2 * N + 1, n))
    if pattern == "constant-normal":
        pts = engine.trajectory(np.asarray(p0, float), np.arange(2 * N + 1.0))
        return np.array([normal_basis(engine.field.eval(p))[:, 0] for p in pts])
    if pattern == "random":
        if seed is None:
            raise ConfigError("seed: required for a random inhomogeneity")
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((2 * N + 1, n))
        return z / np.linalg.norm(z, axis=1, keepdims=True)
    raise ConfigError(f"inhomogeneity: unknown pattern {pattern!r}")
