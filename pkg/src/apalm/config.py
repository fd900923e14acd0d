"""Run configuration: JSON parsing with strict validation.

Unknown keys are rejected and every constraint of AlmConfig/EngineConfig is
checked before any run starts. Runs are seed-free: the system is
deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .alm import AlmConfig
from .engine import EngineConfig


class ConfigError(ValueError):
    """Configuration document violates the schema; names the offending key."""


@dataclass(frozen=True)
class RunConfig:
    problem_name: str
    problem_params: dict = field(default_factory=dict)
    alm: AlmConfig = field(default_factory=AlmConfig)
    engine: EngineConfig | None = None
    workers: int = 1
    transport: str = "thread"
    output: str | None = None
    observable_index: int = 0


_ALM_KEYS = {"constraint", "psi", "newton_tol", "max_newton_iters",
             "max_step_cuts", "bif_tol", "branch_perturbation", "step_delay"}
_ENGINE_KEYS = {"delta_L", "steps", "subintervals", "tol_lower", "tol_upper",
                "max_level", "bifurcation_enabled", "branch_delta_L",
                "branch_steps", "max_branches"}
_TOP_KEYS = {"problem", "alm", "engine", "workers", "transport", "output",
             "observable_index"}
_PROBLEM_KEYS = {"name", "params"}


def _check_keys(section: dict, allowed: set, where: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}")


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON run configuration."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}")
    if not isinstance(doc, dict):
        raise ConfigError("top-level document must be an object")
    _check_keys(doc, _TOP_KEYS, "top level")
    if "problem" not in doc:
        raise ConfigError("missing required key 'problem'")
    if "engine" not in doc:
        raise ConfigError("missing required key 'engine'")
    prob = doc["problem"]
    if not isinstance(prob, dict) or "name" not in prob:
        raise ConfigError("'problem' must be an object with a 'name'")
    _check_keys(prob, _PROBLEM_KEYS, "problem")
    alm_section = doc.get("alm", {})
    _check_keys(alm_section, _ALM_KEYS, "alm")
    engine_section = doc["engine"]
    _check_keys(engine_section, _ENGINE_KEYS, "engine")
    try:
        alm_cfg = AlmConfig(**alm_section)
        engine_cfg = EngineConfig(**engine_section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))
    workers = doc.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("'workers' must be a positive integer")
    transport = doc.get("transport", "thread")
    if transport not in ("thread", "process"):
        raise ConfigError("'transport' must be 'thread' or 'process'")
    obs = doc.get("observable_index", 0)
    if not isinstance(obs, int) or obs < 0:
        raise ConfigError("'observable_index' must be a non-negative integer")
    return RunConfig(
        problem_name=prob["name"],
        problem_params=prob.get("params", {}),
        alm=alm_cfg,
        engine=engine_cfg,
        workers=workers,
        transport=transport,
        output=doc.get("output"),
        observable_index=obs,
    )


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
