# SPDX-FileCopyrightText: © Atakama, Inc <support@atakama.com>
# SPDX-License-Identifier: LGPL-3.0-or-later

"""Pumpshape: scenario configs, parameter schemas and seed derivation"""
import copy
import hashlib
import logging as log
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence

import yaml

from .errors import ConfigError

OUT_DIR_ENV = "PUMPSHAPE_OUT_DIR"
DEFAULT_OUT_ROOT = "pumpshape-out"

TOP_LEVEL_KEYS = ("scenario_id", "master_seed", "output_dir", "parameters")

# scenario_id -> parameter schema, filled in as scenario classes are defined
SCHEMAS: Dict[str, Dict[str, "Param"]] = {}


def positive(v) -> bool:
    return v > 0


def nonnegative(v) -> bool:
    return v >= 0


def unit_interval(v) -> bool:
    return 0 <= v <= 1


def at_least(lo) -> Callable:
    def check(v):
        return v >= lo

    check.__name__ = ">= %s" % lo
    return check


@dataclass(frozen=True)
class Param:
    """One scenario parameter.

    kind is int, float, str, or a one-element list [int] / [float] for sequences.  check
    is applied to the value, or to each item of a sequence.
    """

    name: str
    kind: Any
    default: Any
    check: Optional[Callable] = None
    doc: str = ""

    def coerce(self, value):
        if isinstance(self.kind, list):
            if not isinstance(value, (list, tuple)) or not value:
                raise ConfigError("parameter %r must be a nonempty list" % self.name, key=self.name)
            return [self._scalar(v, self.kind[0]) for v in value]
        return self._scalar(value, self.kind)

    def _scalar(self, value, kind):
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind is float and isinstance(value, str):
            # yaml 1.1 reads 1e-16 as a string
            try:
                value = float(value)
            except ValueError:
                pass
        if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
            raise ConfigError(
                "parameter %r must be %s, got %r" % (self.name, kind.__name__, value), key=self.name
            )
        if self.check is not None and not self.check(value):
            raise ConfigError(
                "parameter %r is out of range (%s): %r" % (self.name, self.check.__name__, value), key=self.name
            )
        return value


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: str
    parameters: Dict[str, Any]
    master_seed: int = 0
    output_dir: Optional[str] = None
    echo: Dict[str, Any] = field(default_factory=dict)


def register_schema(scenario_id: str, params: Sequence[Param]):
    SCHEMAS[scenario_id] = {p.name: p for p in params}


def list_scenarios() -> List[str]:
    return sorted(SCHEMAS)


def _load(raw) -> Mapping:
    if isinstance(raw, Mapping):
        return raw
    if isinstance(raw, os.PathLike) or isinstance(raw, str) and "\n" not in raw and os.path.isfile(raw):
        with open(raw, "r", encoding="utf8") as f:
            raw = f.read()
    try:
        doc = yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigError("config is not valid YAML: %s" % e) from e
    if not isinstance(doc, Mapping):
        raise ConfigError("config must be a mapping with a scenario_id")
    return doc


def validate_config(raw) -> ScenarioConfig:
    """Parse and validate a scenario config.

    raw is YAML text, a path to a YAML file, or an already-parsed mapping. Defaults are
    filled in for missing parameters; unknown keys and out-of-range values raise
    ConfigError naming the key.
    """
    doc = _load(raw)
    for key in doc:
        if key not in TOP_LEVEL_KEYS:
            raise ConfigError("unknown config key %r" % (key,), key=key)
    if "scenario_id" not in doc:
        raise ConfigError("config is missing 'scenario_id'", key="scenario_id")
    scenario_id = doc["scenario_id"]
    schema = SCHEMAS.get(scenario_id)
    if schema is None:
        raise ConfigError("unknown scenario %r" % (scenario_id,), key="scenario_id")

    master_seed = doc.get("master_seed", 0)
    if not isinstance(master_seed, int) or isinstance(master_seed, bool) or master_seed < 0:
        raise ConfigError("master_seed must be a nonnegative integer", key="master_seed")

    output_dir = doc.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        raise ConfigError("output_dir must be a path", key="output_dir")

    given = doc.get("parameters") or {}
    if not isinstance(given, Mapping):
        raise ConfigError("parameters must be a mapping", key="parameters")
    for key in given:
        if key not in schema:
            raise ConfigError("unknown parameter %r for %s" % (key, scenario_id), key=key)

    params = {}
    for name, param in schema.items():
        if name in given:
            params[name] = param.coerce(given[name])
        else:
            params[name] = copy.deepcopy(param.default)
    log.debug("%s: resolved %d parameters", scenario_id, len(params))
    return ScenarioConfig(scenario_id, params, master_seed, output_dir, copy.deepcopy(dict(doc)))


def derive_seed(master_seed: int, scenario_id: str, task_index: int) -> int:
    """Child seed for one task: 63 bits of sha256(master:scenario:task)."""
    digest = hashlib.sha256(("%d:%s:%d" % (master_seed, scenario_id, task_index)).encode("utf8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def resolve_output_dir(cfg: ScenarioConfig, override: Optional[str] = None) -> str:
    """--out, then the config's output_dir, then $PUMPSHAPE_OUT_DIR/<id>, then ./pumpshape-out/<id>."""
    if override:
        return override
    if cfg.output_dir:
        return cfg.output_dir
    env = os.environ.get(OUT_DIR_ENV)
    if env:
        return os.path.join(env, cfg.scenario_id)
    return os.path.join(DEFAULT_OUT_ROOT, cfg.scenario_id)
