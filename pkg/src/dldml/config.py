"""Declarative experiment configuration read from TOML.

Every table and key is optional; omitted values fall back to the module
defaults. Unknown keys are rejected so a typo never silently does nothing.

.. code-block:: toml

    seed = 0
    output_dir = "runs/desk"

    [design]        # d_p_um, g_um, n, m_columns, n_rows, margins_um, lateral
    [fluid]         # density, viscosity
    [solver]        # reynolds, cells_per_gap, tolerance, max_iterations, ...
    [tracer]        # dt, particle_density, lift_coefficient, target_samples, ...
    [sweep]         # n_values, sizes_um or size_range = [lo, hi, count], jobs
    [ml]            # split_ratio, folds, train_samples_per_case, ...
    [ml.grids.knn_reg]
    k = [1, 3, 5]
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dataset import SweepConfig, uniform_sizes
from .errors import ConfigurationError
from .flowfield import FluidProperties, SolverConfig
from .geometry import DldDesign
from .ml.models import KINDS
from .ml.pipeline import TrainingConfig
from .tracer import TracerConfig

OUTPUT_ROOT_ENV = "DLDML_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "dldml-runs"

_TOP_KEYS = {"seed", "output_dir", "design", "fluid", "solver", "tracer", "sweep", "ml"}
_SWEEP_KEYS = {"n_values", "sizes_um", "size_range", "jobs"}
_ML_KEYS = {"split_ratio", "folds", "train_samples_per_case", "eval_samples_per_case", "grids"}


def default_output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT))


def _fields(cls) -> set:
    return {f.name for f in dataclasses.fields(cls)}


def _reject_unknown(where: str, data: dict, allowed: set):
    unknown = set(data) - allowed
    if unknown:
        raise ConfigurationError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")


def _table(data: dict, name: str) -> dict:
    t = data.get(name, {})
    if not isinstance(t, dict):
        raise ConfigurationError(f"[{name}] must be a table")
    return dict(t)


@dataclass
class RunConfig:
    design: dict = field(default_factory=dict)
    fluid: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    tracer: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    ml: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str | None = None

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        _reject_unknown("top level", data, _TOP_KEYS)
        cfg = cls(**{k: _table(data, k) for k in
                     ("design", "fluid", "solver", "tracer", "sweep", "ml")},
                  seed=int(data.get("seed", 0)), output_dir=data.get("output_dir"))
        # validate eagerly so errors surface before any work starts
        _reject_unknown("design", cfg.design,
                        {"d_p_um", "g_um", "n", "m_columns", "n_rows", "margins_um", "lateral"})
        _reject_unknown("fluid", cfg.fluid, {"density", "viscosity"})
        _reject_unknown("solver", cfg.solver, _fields(SolverConfig))
        _reject_unknown("tracer", cfg.tracer, _fields(TracerConfig) - {"fluid"})
        _reject_unknown("sweep", cfg.sweep, _SWEEP_KEYS)
        _reject_unknown("ml", cfg.ml, _ML_KEYS)
        _reject_unknown("ml.grids", cfg.ml.get("grids", {}), set(KINDS))
        cfg.solver_config()
        cfg.tracer_config()
        cfg.sweep_config()
        cfg.training_config()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigurationError(f"config file {path} not found") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
        return cls.from_mapping(data)

    # -- resolution into module configs; ``overrides`` carry CLI flags (flags win)

    def design_for(self, **overrides) -> DldDesign:
        d = dict(self.design)
        d.update({k: v for k, v in overrides.items() if v is not None})
        return DldDesign.from_dict(d)

    def fluid_properties(self) -> FluidProperties:
        return FluidProperties(**self.fluid)

    def solver_config(self, **overrides) -> SolverConfig:
        d = dict(self.solver)
        d.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return SolverConfig(**d)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None

    def tracer_config(self, **overrides) -> TracerConfig:
        d = dict(self.tracer)
        d.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return TracerConfig(fluid=self.fluid_properties(), **d)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None

    def sweep_config(self, n_values=None, sizes_um=None, cells_per_gap=None) -> SweepConfig:
        s = self.sweep
        sizes = sizes_um
        if sizes is None and "sizes_um" in s and "size_range" in s:
            raise ConfigurationError("give either sweep.sizes_um or sweep.size_range, not both")
        if sizes is None and "size_range" in s:
            lo, hi, count = s["size_range"]
            sizes = uniform_sizes(float(lo), float(hi), int(count))
        if sizes is None:
            sizes = s.get("sizes_um")
        kw = {}
        if n_values is not None or "n_values" in s:
            kw["n_values"] = tuple(n_values if n_values is not None else s["n_values"])
        if sizes is not None:
            kw["sizes_um"] = tuple(sizes)
        d = self.design
        if "d_p_um" in d:
            kw["post_diameter_um"] = float(d["d_p_um"])
        if "g_um" in d:
            kw["gap_um"] = float(d["g_um"])
        if "m_columns" in d:
            kw["n_columns"] = int(d["m_columns"])
        if "lateral" in d:
            kw["lateral"] = d["lateral"]
        return SweepConfig(solver=self.solver_config(cells_per_gap=cells_per_gap),
                           tracer=self.tracer_config(), seed=self.seed, **kw)

    def training_config(self, folds=None) -> TrainingConfig:
        m = self.ml
        kw = {k: m[k] for k in ("train_samples_per_case", "eval_samples_per_case") if k in m}
        return TrainingConfig(folds=int(folds or m.get("folds", 5)), seed=self.seed,
                              grids=dict(m.get("grids", {})), **kw)

    @property
    def split_ratio(self) -> float:
        return float(self.ml.get("split_ratio", 0.2))

    @property
    def jobs(self) -> int:
        return int(self.sweep.get("jobs", 1))
