"""Declarative pipeline configuration: one TOML file drives every stage.

The effective configuration (file values plus command-line overrides) is
hashed, and that hash keys the managed output directory and is embedded
in every artifact, so outputs from different configurations never
collide or mix.
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, replace

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigurationError

VARIANT_NAMES = (
    "linear",
    "quadratic",
    "cubic",
    "fine-gaussian",
    "medium-gaussian",
    "coarse-gaussian",
)

THREADS_ENV = "BLIGHTPIPE_THREADS"


@dataclass(frozen=True)
class PipelineConfig:
    # paths
    image_root: str = ""
    preprocessed: str = ""
    features: tuple = ()
    features_out: str = ""
    labels: str = ""
    out: str = "runs"
    # preprocessing
    size: tuple = (300, 300)
    equalize: bool = True
    # selection
    population: int = 10
    max_iter: int = 30
    a1: float = 2.0
    a2: float = 1.0
    generation_prob: float = 0.5
    k_list: tuple = (150, 250, 550)
    penalty_weight: float = 0.99
    seed: int = 0
    fitness_folds: int = 3
    search_kernel: str = "linear"
    per_fold: bool = True
    # svm
    box_constraint: float = 1.0
    tol: float = 1e-3
    max_passes: int = 200
    cache_rows: int = 1024
    standardize: bool = True
    # evaluation
    folds: int = 5
    variants: tuple = VARIANT_NAMES
    # execution
    threads: int = 1

    def __post_init__(self):
        if self.folds < 2:
            raise ConfigurationError("folds must be >= 2")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")
        if len(self.size) != 2 or min(self.size) < 1:
            raise ConfigurationError("size must be two positive integers")
        if not self.k_list or min(self.k_list) < 1:
            raise ConfigurationError("k list must hold positive integers")
        if self.search_kernel not in VARIANT_NAMES:
            raise ConfigurationError(
                f"search_kernel must be one of {VARIANT_NAMES}"
            )
        for name in self.variants:
            if name not in VARIANT_NAMES:
                raise ConfigurationError(f"unknown variant {name!r}")


_SECTIONS = {
    "paths": {
        "image_root": "image_root",
        "preprocessed": "preprocessed",
        "features": "features",
        "features_out": "features_out",
        "labels": "labels",
        "out": "out",
    },
    "preprocess": {"size": "size", "equalize": "equalize"},
    "select": {
        "population": "population",
        "max_iter": "max_iter",
        "a1": "a1",
        "a2": "a2",
        "generation_prob": "generation_prob",
        "k": "k_list",
        "penalty_weight": "penalty_weight",
        "seed": "seed",
        "fitness_folds": "fitness_folds",
        "search_kernel": "search_kernel",
        "per_fold": "per_fold",
    },
    "svm": {
        "box_constraint": "box_constraint",
        "tol": "tol",
        "max_passes": "max_passes",
        "cache_rows": "cache_rows",
        "standardize": "standardize",
    },
    "eval": {"folds": "folds", "variants": "variants"},
    "run": {"threads": "threads"},
}

_TUPLE_FIELDS = {"features", "size", "k_list", "variants"}


def config_from_dict(data: dict) -> PipelineConfig:
    values = {}
    for section, content in data.items():
        if section not in _SECTIONS:
            raise ConfigurationError(f"unknown config section [{section}]")
        if not isinstance(content, dict):
            raise ConfigurationError(f"[{section}] must be a table")
        mapping = _SECTIONS[section]
        for key, value in content.items():
            if key not in mapping:
                raise ConfigurationError(f"unknown key {key!r} in [{section}]")
            field = mapping[key]
            if field in _TUPLE_FIELDS:
                value = tuple(value)
            values[field] = value
    return PipelineConfig(**values)


def load_config(path) -> PipelineConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    return config_from_dict(data)


def apply_overrides(cfg: PipelineConfig, threads=None, seed=None, out=None):
    """Command-line overrides; the threads env var fills an absent flag."""
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        if env is not None:
            try:
                threads = int(env)
            except ValueError:
                raise ConfigurationError(
                    f"{THREADS_ENV} must be an integer, got {env!r}"
                ) from None
    updates = {}
    if threads is not None:
        updates["threads"] = threads
    if seed is not None:
        updates["seed"] = seed
    if out is not None:
        updates["out"] = out
    return replace(cfg, **updates) if updates else cfg


def canonical_dict(cfg: PipelineConfig) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(cfg).items()}


def config_hash(cfg: PipelineConfig) -> str:
    """First 12 hex chars of the sha256 of the canonical effective config."""
    blob = json.dumps(canonical_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]
