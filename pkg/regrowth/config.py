"""Run configuration: cerberus schema, YAML loading and model builders.

Regimes are numbered from 1 in the file (``theta0``, ``baseline_regime``)
and from 0 everywhere inside the package.
"""
import copy
import logging
import re
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Union

from core.artifacts import config_hash
from core.errors import ConfigError, DomainError, _raise_error
from core.settings import FlexibleDict, settings
from core.validate import Marks, annotate_lines, load_yaml, verify
from regrowth.bellman import IncomeGrid, StopRule
from regrowth.markov import validate_chain
from regrowth.model import ModelSpec
from regrowth.shock import QuadratureRule, ShockModel
from regrowth.stationary import SimulationConfig

logger = logging.getLogger(__name__)

__all__ = ("RUN_CONFIG_SCHEMA", "RunConfig", "load_run_config")

DEFAULT_TRANSITION = [
    [0.50, 0.40, 0.10],
    [0.25, 0.50, 0.25],
    [0.10, 0.40, 0.50],
]


def _empty_block(value):
    return {} if value is None else value


def _number(default, **rules) -> Dict[str, Any]:
    return {"type": "number", "default": default, **rules}


def _integer(default, **rules) -> Dict[str, Any]:
    return {"type": "integer", "default": default, **rules}


def _block(schema: Dict[str, Any]) -> Dict[str, Any]:
    return {"type": "dict", "default": {}, "coerce": _empty_block, "schema": schema}


SHOCK_SCHEMA = {
    "kind": {"type": "string", "allowed": ["lognormal", "discrete"], "default": "lognormal"},
    "mu": _number(0.0),
    "sigma_z": _number(1.0),
    "points": {"type": "list", "schema": {"type": "number"}},
    "weights": {"type": "list", "schema": {"type": "number"}},
}

RUN_CONFIG_SCHEMA = {
    "model": _block({
        "beta": _number(0.9),
        "gamma": _number(1.0, min=0),
        "sigma": _number(0.5),
        "r": _number(633, min=1),
        "omega": {"type": "list", "schema": {"type": "number"}, "default": [0.3, 0.5, 0.9]},
        "transition": {
            "type": "list",
            "schema": {"type": "list", "schema": {"type": "number"}},
            "default_setter": lambda _: copy.deepcopy(DEFAULT_TRANSITION),
        },
        "shock": _block(SHOCK_SCHEMA),
    }),
    "numerics": _block({
        "x_max": _number(10.0),
        "x_min": {"type": "number", "nullable": True, "default": None},
        "x_count": _integer(121, min=2),
        "x_spacing": {"type": "string", "allowed": ["linear", "log-linear"], "default": "linear"},
        "y_count": _integer(30, min=2),
        "quad_intervals": _integer(18, min=1),
        "quad_epsilon": _number(1e-6),
        "max_iters": _integer(500, min=1),
        "tol_w": _number(1e-8, min=0),
        "refine": {"type": "boolean", "default": False},
        "concave_projection": {"type": "boolean", "default": True},
    }),
    "simulation": _block({
        "T": _integer(100000, min=1),
        "burn_in": _integer(1000, min=0),
        "seed": _integer(20240601, min=0),
        "x0": _number(1.0),
        "theta0": _integer(2, min=1),
        "n_bins": _integer(40, min=1),
        "write_path": {"type": "boolean", "default": False},
    }),
    "output": _block({
        "directory": {"type": "string", "default": settings.DEFAULT_OUT},
        "formats": {
            "type": "list",
            "schema": {"type": "string", "allowed": ["csv", "svg"]},
            "default": ["csv", "svg"],
        },
        "baseline": {"type": "boolean", "default": True},
        "baseline_regime": _integer(2, min=1),
    }),
}

_ROW_KEY = re.compile(r"^row (\d+)$")


@verify(RUN_CONFIG_SCHEMA)
def _read_document(path: Union[str, Path]):
    return load_yaml(path)


@dataclass(frozen=True)
class RunConfig:
    document: FlexibleDict
    marks: Marks = field(default_factory=dict)
    source: Optional[str] = None

    @property
    def model(self) -> FlexibleDict:
        return FlexibleDict(self.document["model"])

    @property
    def numerics(self) -> FlexibleDict:
        return FlexibleDict(self.document["numerics"])

    @property
    def simulation(self) -> FlexibleDict:
        return FlexibleDict(self.document["simulation"])

    @property
    def output(self) -> FlexibleDict:
        return FlexibleDict(self.document["output"])

    @property
    def out_dir(self) -> Path:
        return Path(self.output.directory)

    @property
    def seed(self) -> int:
        return int(self.simulation.seed)

    @property
    def hash(self) -> str:
        return config_hash(self.document)

    def with_overrides(self, seed: Optional[int] = None, out: Optional[str] = None) -> "RunConfig":
        document = FlexibleDict({block: dict(values) for block, values in self.document.items()})
        if seed is not None:
            if not 0 <= seed < 2 ** 64:
                _raise_error(ConfigError, error_details={"--seed": ["must be a 64-bit unsigned integer"]})
            document["simulation"]["seed"] = int(seed)
        if out is not None:
            document["output"]["directory"] = str(out)
        return replace(self, document=document)

    @contextmanager
    def _located(self, prefix: str = ""):
        """Attach YAML line numbers to ConfigErrors raised by the builders."""
        try:
            yield
        except ConfigError as e:
            details = {}
            for key, problems in e.details.items():
                match = _ROW_KEY.match(key)
                if match:
                    key = f"{prefix}.{int(match.group(1)) - 1}"
                elif key == "__all__" and prefix:
                    key = prefix
                details[key] = problems
            raise type(e)(str(e), details=annotate_lines(details, self.marks)) from e

    def build_shock(self) -> ShockModel:
        shock = FlexibleDict(self.model.shock)
        with self._located("model.shock"):
            if shock.kind == "discrete":
                if "points" not in shock or "weights" not in shock:
                    _raise_error(ConfigError, error_details={
                        "model.shock": ["a discrete shock needs points and weights"],
                    })
                return ShockModel.discrete(shock.points, shock.weights)
            unused = sorted({"points", "weights"} & set(shock))
            if unused:
                _raise_error(ConfigError, error_details={
                    f"model.shock.{unused[0]}": ["only allowed for a discrete shock"],
                })
            return ShockModel.lognormal(shock.mu, shock.sigma_z)

    def build_model(self) -> ModelSpec:
        model = self.model
        with self._located("model.transition"):
            chain = validate_chain(model.transition)
        shock = self.build_shock()
        with self._located("model"):
            return ModelSpec(
                beta=float(model.beta),
                gamma=float(model.gamma),
                sigma=float(model.sigma),
                r=float(model.r),
                omega=model.omega,
                chain=chain,
                shock=shock,
            )

    def grid(self) -> IncomeGrid:
        numerics = self.numerics
        with self._located("numerics.x_max"):
            if not numerics.x_max > 0:
                _raise_error(ConfigError, error_details={"numerics.x_max": ["must be positive"]})
            if numerics.x_spacing == "log-linear":
                return IncomeGrid.log_linear(numerics.x_max, numerics.x_count, numerics.x_min)
            return IncomeGrid.linear(numerics.x_max, numerics.x_count)

    def rule(self) -> QuadratureRule:
        with self._located("numerics.quad_epsilon"):
            try:
                return QuadratureRule(self.numerics.quad_intervals, self.numerics.quad_epsilon)
            except DomainError as e:
                _raise_error(ConfigError, error_details={"numerics.quad_epsilon": [str(e)]})

    def stop(self) -> StopRule:
        with self._located("numerics"):
            return StopRule(self.numerics.max_iters, self.numerics.tol_w)

    def simulation_config(self, n_states: Optional[int] = None) -> SimulationConfig:
        simulation = self.simulation
        with self._located("simulation"):
            if n_states is not None and simulation.theta0 > n_states:
                _raise_error(ConfigError, error_details={"simulation.theta0": [f"must lie in 1..{n_states}"]})
            return SimulationConfig(
                horizon=simulation.T,
                burn_in=simulation.burn_in,
                seed=simulation.seed,
                x0=float(simulation.x0),
                theta0=simulation.theta0 - 1,
            )

    def baseline_regime(self, spec: ModelSpec) -> int:
        regime = self.output.baseline_regime
        if regime > spec.n_states:
            _raise_error(ConfigError, error_details=annotate_lines(
                {"output.baseline_regime": [f"must lie in 1..{spec.n_states}"]}, self.marks,
            ))
        return regime - 1


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    seed: Optional[int] = None,
    out: Optional[str] = None,
) -> RunConfig:
    path = Path(path or settings.DEFAULT_CONFIG)
    document, marks = _read_document(path)
    run = RunConfig(document, marks, str(path)).with_overrides(seed=seed, out=out)
    logger.debug(f"Loaded run configuration {path}", extra={"config_hash": run.hash})
    return run
