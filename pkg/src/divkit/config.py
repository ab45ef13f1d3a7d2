"""Run configuration: strict JSON schema shared by all CLI subcommands.

Unknown keys anywhere in the file are rejected so typos fail loudly.  Every
run writes a resolved_config.json snapshot; re-running from that snapshot
reproduces the run exactly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .model import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class VerifierSettings:
    trials: int = 100
    kinds: list | None = None       # None = all bound kinds
    collapse_depth: int = 20
    collapse_variant: str = "vanilla-MSA"
    collapse_weight_scale: float = 0.9
    dims_n: int = 16
    dims_d: int = 16
    dims_h: int = 4


@dataclass
class AnalysisSettings:
    epsilon: float = 0.8
    drop: int = 1
    pca_k: int = 3
    sample_len: int = 128
    bench_iterations: int = 20
    bench_warmup: int = 3
    target_position: int | None = None


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=lambda: ModelConfig(d_model=64, n_heads=4, n_layers=2, reduction_r=4))
    train: TrainConfig = field(default_factory=TrainConfig)
    verifier: VerifierSettings = field(default_factory=VerifierSettings)
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)
    out_dir: str = "runs/default"
    seed: int = 0
    workers: int = 1

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        _reject_unknown(raw, {f.name for f in dataclasses.fields(cls)}, "root")
        kwargs: dict = {}
        for name, sub_cls in (("model", ModelConfig), ("train", TrainConfig),
                              ("verifier", VerifierSettings), ("analysis", AnalysisSettings)):
            if name in raw:
                section = raw[name]
                if not isinstance(section, dict):
                    raise ConfigError(f"section {name!r} must be an object")
                _reject_unknown(section, {f.name for f in dataclasses.fields(sub_cls)}, name)
                try:
                    kwargs[name] = sub_cls(**section)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"invalid {name} config: {exc}") from exc
        for name in ("out_dir", "seed", "workers"):
            if name in raw:
                kwargs[name] = raw[name]
        cfg = cls(**kwargs)
        if cfg.workers < 1:
            raise ConfigError("workers must be >= 1")
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def snapshot(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "resolved_config.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))
        tmp.replace(path)
        return path


def _reject_unknown(section: dict, allowed: set, where: str):
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
