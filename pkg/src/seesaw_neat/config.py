"""Run configuration: one JSON file mirroring the hyper-parameter tables.

Sections: "neat", "attention", "cmaes", "pipeline", "env", plus top-level
"seed" and "out".  Unspecified fields take the standard defaults; unknown
keys are rejected with the offending field path.
"""

import json
from dataclasses import dataclass, field, fields, asdict

from .attention import AttentionConfig
from .errors import BadConfig, ConfigError
from .neat import NeatConfig


@dataclass
class CmaesSection:
    population_size: int = 32
    init_sigma: float = 0.1

    def __post_init__(self):
        if self.population_size < 2:
            raise BadConfig("cmaes.population_size must be >= 2")
        if self.init_sigma <= 0:
            raise BadConfig("cmaes.init_sigma must be > 0")


@dataclass
class PipelineSection:
    generations: int = 50
    stage2_generations: int = 100
    trials: int = 3
    seed_mode: str = "fresh"
    checkpoint_keep_last: int = 3

    def __post_init__(self):
        if self.generations < 0 or self.stage2_generations < 0:
            raise BadConfig("generation counts must be >= 0")
        if self.trials < 1:
            raise BadConfig("pipeline.trials must be >= 1")
        if self.seed_mode not in ("fresh", "fixed"):
            raise BadConfig(f"unknown seed_mode {self.seed_mode!r}")


@dataclass
class EnvSection:
    name: str = "patch_chase"
    max_frames: int | None = None
    executable: str | None = None   # external envs only
    timeout: float = 10.0
    failure_fitness: float = 0.0


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "runs/default"
    neat: NeatConfig = field(default_factory=NeatConfig)
    attention: AttentionConfig = field(default_factory=AttentionConfig)
    cmaes: CmaesSection = field(default_factory=CmaesSection)
    pipeline: PipelineSection = field(default_factory=PipelineSection)
    env: EnvSection = field(default_factory=EnvSection)

    def to_dict(self):
        return asdict(self)


_SECTIONS = {"neat": NeatConfig, "attention": AttentionConfig,
             "cmaes": CmaesSection, "pipeline": PipelineSection,
             "env": EnvSection}


def _build_section(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError("expected an object", field=path)
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError("unknown key", field=f"{path}.{key}")
    try:
        return cls(**data)
    except (BadConfig, TypeError) as e:
        raise ConfigError(str(e), field=path)


def config_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    known = {"seed", "out"} | set(_SECTIONS)
    for key in data:
        if key not in known:
            raise ConfigError("unknown key", field=key)
    kwargs = {}
    if "seed" in data:
        if not isinstance(data["seed"], int):
            raise ConfigError("must be an integer", field="seed")
        kwargs["seed"] = data["seed"]
    if "out" in data:
        kwargs["out"] = str(data["out"])
    for name, cls in _SECTIONS.items():
        if name in data:
            kwargs[name] = _build_section(cls, data[name], name)
    return RunConfig(**kwargs)


def load_config(path):
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}")
    return config_from_dict(data)


def save_config(cfg, path):
    with open(path, "w") as f:
        json.dump(cfg.to_dict(), f, indent=1)
