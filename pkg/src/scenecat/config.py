"""Run configuration: defaults, JSON files, overrides, resolved snapshots.

The JSON layout mirrors the section dataclasses below; command-line flags
override file values, and every command writes the fully resolved
configuration next to its outputs so a run can be repeated exactly.
"""

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError


@dataclass
class PathsParams:
    images: str | None = None
    dictionary: str | None = None
    representations: str | None = None
    out_dir: str | None = None
    ground_truth: str | None = None


@dataclass
class DictionaryParams:
    n_itw: int = 500
    n_htw: int = 500
    per_image: int = 200
    pool_cap: int = 200_000
    kmeans_iters: int = 100
    kmeans_tol: float = 1e-4
    seed: int = 0


@dataclass
class PatchParams:
    sides: list = field(default_factory=lambda: [16, 24, 32])
    stride_fraction: float = 0.5
    cslbp_radius: int = 2
    cslbp_threshold: float = 1.0


@dataclass
class RepresentationParams:
    saturation: float = 8.0


@dataclass
class GraphParams:
    tau: float = 0.2
    max_neighbors: int = 6
    smoothing: float = 1e-6


@dataclass
class SamplerSection:
    beta: float = 300.0
    max_features: int = 40
    max_iters: int = 5000
    mode: str = "cswc"
    n_select: list = field(default_factory=lambda: [1, 3])
    seed: int = 0
    init: str = "singletons"
    plateau: int | None = None
    trace_stride: int = 1
    log_every: int = 100


_SECTIONS = {
    "paths": PathsParams,
    "dictionary": DictionaryParams,
    "patches": PatchParams,
    "representation": RepresentationParams,
    "graph": GraphParams,
    "sampler": SamplerSection,
}


@dataclass
class PipelineConfig:
    paths: PathsParams = field(default_factory=PathsParams)
    dictionary: DictionaryParams = field(default_factory=DictionaryParams)
    patches: PatchParams = field(default_factory=PatchParams)
    representation: RepresentationParams = field(default_factory=RepresentationParams)
    graph: GraphParams = field(default_factory=GraphParams)
    sampler: SamplerSection = field(default_factory=SamplerSection)

    def validate(self):
        if any(s < 8 for s in self.patches.sides):
            raise ConfigError(f"patch sides must be >= 8, got {self.patches.sides}")
        if not 0 < self.patches.stride_fraction <= 1:
            raise ConfigError("stride_fraction must be in (0, 1]")
        if self.dictionary.n_itw < 1 or self.dictionary.n_htw < 1:
            raise ConfigError("word counts must be >= 1")
        if self.graph.tau <= 0:
            raise ConfigError("tau must be > 0")
        if self.graph.max_neighbors < 1:
            raise ConfigError("max_neighbors must be >= 1")
        if self.representation.saturation <= 0:
            raise ConfigError("saturation must be > 0")

    def to_dict(self):
        return dataclasses.asdict(self)

    def snapshot(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_config(path=None):
    """Defaults merged with an optional JSON file; unknown keys are rejected."""
    cfg = PipelineConfig()
    if path is None:
        return cfg
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    for section, values in raw.items():
        if section not in _SECTIONS:
            raise ConfigError(f"{path}: unknown config section {section!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: section {section!r} must be an object")
        target = getattr(cfg, section)
        known = {f.name for f in dataclasses.fields(target)}
        for key, value in values.items():
            if key not in known:
                raise ConfigError(f"{path}: unknown key {section}.{key}")
            setattr(target, key, value)
    cfg.validate()
    return cfg
