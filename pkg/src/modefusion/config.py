"""Run configuration.

One JSON document drives every pipeline stage. Paths are resolved relative
to the file they came from, so a generated fixture directory is
self-contained and relocatable.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field, fields

from .classifiers import METHODS
from .errors import ConfigError, IoError
from .ml_harness import SCENARIOS

log = logging.getLogger(__name__)

# JSON "paths" keys in stable order; each maps to a RunConfig attribute
PATH_KEYS = (
    ("gtfs", "gtfs_dir"),
    ("street_nodes", "street_nodes"),
    ("street_edges", "street_edges"),
    ("zones", "zones"),
    ("ttbc_traffic", "ttbc_traffic"),
    ("ttbc_freeflow", "ttbc_freeflow"),
    ("td_car", "td_car"),
    ("sensors", "sensors"),
    ("spatial", "spatial_dir"),
    ("survey", "survey"),
    ("traces", "traces_dir"),
    ("segments", "segments_dir"),
    ("real_gtfs", "real_gtfs_dir"),
    ("out", "out_dir"),
)

_SCALAR_DEFAULTS = {
    "window_before_s": 300,
    "window_after_s": 600,
    "built_env_radius_m": 500.0,
    "max_connections": 5,
    "pricing": None,
    "survey_columns": (),
    "scenarios": tuple(SCENARIOS),
    "methods": METHODS,
    "k_folds": 10,
    "alpha": 0.2,
    "importance_repeats": 3,
    "grids": None,
}


@dataclass(frozen=True)
class RunConfig:
    seed: int
    gtfs_dir: str = ""
    street_nodes: str = ""
    street_edges: str = ""
    zones: str = ""
    ttbc_traffic: str = ""
    ttbc_freeflow: str = ""
    td_car: str = ""
    sensors: str = ""
    spatial_dir: str = ""
    survey: str = ""
    traces_dir: str = ""
    segments_dir: str = ""
    real_gtfs_dir: str = ""
    out_dir: str = "out"
    window_before_s: int = 300
    window_after_s: int = 600
    built_env_radius_m: float = 500.0
    max_connections: int = 5
    pricing: dict | None = None
    survey_columns: tuple = ()
    scenarios: tuple = field(default_factory=lambda: tuple(SCENARIOS))
    methods: tuple = METHODS
    k_folds: int = 10
    alpha: float = 0.2
    importance_repeats: int = 3
    grids: dict | None = None

    def __post_init__(self):
        if not isinstance(self.seed, int):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.k_folds < 3:
            raise ConfigError(f"k_folds must be >= 3, got {self.k_folds}")
        if self.window_before_s < 0 or self.window_after_s < 0:
            raise ConfigError("window extents must be nonnegative")
        for name in self.scenarios:
            if name not in SCENARIOS:
                raise ConfigError(
                    f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}")
        for name in self.methods:
            if name not in METHODS:
                raise ConfigError(
                    f"unknown method {name!r}; known: {', '.join(METHODS)}")
        if self.importance_repeats < 1:
            raise ConfigError("importance_repeats must be >= 1")

    def to_mapping(self) -> dict:
        """Canonical mapping over every field, for hashing."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


def _resolve(base: str, p: str) -> str:
    return p if os.path.isabs(p) else os.path.normpath(os.path.join(base, p))


def load_config(path: str) -> RunConfig:
    """Parse a run configuration file; paths become absolute relative to it."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a JSON object at top level")
    if "seed" not in doc:
        raise ConfigError(f"{path}: seed is mandatory")

    base = os.path.dirname(os.path.abspath(path))
    kwargs = {"seed": doc["seed"]}
    paths = doc.get("paths", {})
    if not isinstance(paths, dict):
        raise ConfigError(f"{path}: paths must be an object")
    known_path_keys = {k for k, _ in PATH_KEYS}
    for key in paths:
        if key not in known_path_keys:
            raise ConfigError(f"{path}: unknown path entry {key!r}")
    for key, attr in PATH_KEYS:
        if key in paths:
            kwargs[attr] = _resolve(base, str(paths[key]))

    for key, default in _SCALAR_DEFAULTS.items():
        if key not in doc:
            continue
        v = doc[key]
        if v is None and default is None:
            continue
        if isinstance(default, tuple):
            v = tuple(v)
        kwargs[key] = v

    unknown = set(doc) - {"seed", "paths"} - set(_SCALAR_DEFAULTS)
    if unknown:
        raise ConfigError(f"{path}: unknown fields {sorted(unknown)}")
    cfg = RunConfig(**kwargs)
    log.debug("loaded config from %s (seed=%d)", path, cfg.seed)
    return cfg
