"""Run configuration: a strict JSON file mirroring every tunable, one seed.

Every field is optional and defaults to the values baked into the
dataclasses; unknown keys are rejected at every level to catch typos. All
randomness flows from the single top-level `seed`, which is injected into
each section; CLI flags override file values.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .data import SyntheticSpec
from .fusion import CLASSIFIER_NAMES
from .model import BaselineConfig
from .training import SplitSpec, TrainConfig


class ConfigError(ValueError):
    """Invalid configuration file or values."""


@dataclass(frozen=True)
class AblationSettings:
    icf_values: tuple = (2.0, 1.9, 1.8, 1.7, 1.6, 1.5, 1.4, 1.3, 1.2, 1.1, 1.0)
    neuron_start: tuple = (48, 24, 3)
    neuron_step: tuple = (6, 3, 0)
    neuron_floor: int = 12


@dataclass(frozen=True)
class FusionSettings:
    classifier: str = "nb"
    k_folds: int = 5
    use_grid_search: bool = True
    grid: dict | None = None  # None -> the classifier's default grid

    def __post_init__(self):
        if self.classifier not in CLASSIFIER_NAMES:
            raise ValueError(
                f"fusion classifier must be one of {CLASSIFIER_NAMES}, got {self.classifier!r}"
            )
        if self.k_folds < 2:
            raise ValueError(f"k_folds must be >= 2, got {self.k_folds}")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    model: BaselineConfig = BaselineConfig()
    train: TrainConfig = TrainConfig()
    split: SplitSpec = SplitSpec()
    synthetic: SyntheticSpec = SyntheticSpec()
    ablation: AblationSettings = AblationSettings()
    fusion: FusionSettings = FusionSettings()


_SECTIONS = {
    "model": BaselineConfig,
    "train": TrainConfig,
    "split": SplitSpec,
    "synthetic": SyntheticSpec,
    "ablation": AblationSettings,
    "fusion": FusionSettings,
}

# sections whose seed is supplied by the top-level key, not by the file
_SEEDED = {"train", "split", "synthetic"}

_TUPLE_FIELDS = {
    "fc_neurons",
    "class_priors",
    "coverage_ranges",
    "ambiguous_full_range",
    "weather_means",
    "weather_stds",
    "icf_values",
    "neuron_start",
    "neuron_step",
}


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def _build_section(name, cls, payload, seed):
    allowed = {f.name for f in dataclasses.fields(cls)}
    if name in _SEEDED:
        allowed.discard("seed")
    unknown = sorted(set(payload) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {', '.join(unknown)}")
    kwargs = {
        k: (_tuplify(v) if k in _TUPLE_FIELDS else v) for k, v in payload.items()
    }
    if name in _SEEDED:
        kwargs["seed"] = seed
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid '{name}' configuration: {exc}") from exc


def run_config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be an object, got {type(raw).__name__}")
    unknown = sorted(set(raw) - set(_SECTIONS) - {"seed"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    sections = {}
    for name, cls in _SECTIONS.items():
        payload = raw.get(name, {})
        if not isinstance(payload, dict):
            raise ConfigError(f"section '{name}' must be an object, got {type(payload).__name__}")
        sections[name] = _build_section(name, cls, payload, seed)
    return RunConfig(seed=seed, **sections)


def run_config_to_dict(cfg: RunConfig) -> dict:
    out = {"seed": cfg.seed}
    for name in _SECTIONS:
        section = dataclasses.asdict(getattr(cfg, name))
        section.pop("seed", None)
        out[name] = section
    return out


def load_run_config(path=None, seed_override=None) -> RunConfig:
    """Read the JSON config file (or defaults when path is None)."""
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if seed_override is not None:
        raw = dict(raw)
        raw["seed"] = seed_override
    return run_config_from_dict(raw)


def write_effective_config(cfg: RunConfig, out_dir):
    """Echo the effective configuration next to a command's outputs."""
    path = Path(out_dir) / "effective_config.json"
    path.write_text(json.dumps(run_config_to_dict(cfg), indent=2, sort_keys=True) + "\n")
    return path
