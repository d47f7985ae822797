"""Run configuration: one flat JSON object plus ablation switches."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ContractError
from .losses import AlignmentConfig, LossWeights
from .model import ModelConfig

ABLATION_FLAGS = ("replay", "sal", "nuclear", "rcl", "pcl", "snl")


def _default_ablation() -> dict[str, str]:
    return {name: "on" for name in ABLATION_FLAGS}


@dataclass
class RunConfig:
    seed: int = 0
    # training schedule
    epochs: int = 50
    batch_size: int = 64
    gen_per_step: int | None = None  # generated rows per step for L_pcl / L_snl; None = batch_size
    mean_samples: int = 16  # generated rows per class for the alignment means
    replay_per_class: int = 150
    replay_budget: int = 10  # candidate draws per requested replay row
    # optimizer
    lr: float = 0.005
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    # architecture
    d_z: int | None = None
    hidden_g: int | None = None
    hidden_d: int | None = None
    temperature: float = 10.0
    # loss weights and alignment
    lambda_gan: float = 1.0
    lambda_cls: float = 1.0
    lambda_snl: float = 1.0
    lambda_iba: float = 1.0
    align_eps: float = 0.1
    n_neighbors: int = 3
    ablation: dict[str, str] = field(default_factory=_default_ablation)
    # reporting
    trace_classes: list[int] | None = None
    trace_top_k: int = 3

    def __post_init__(self):
        flags = _default_ablation()
        for key, value in dict(self.ablation).items():
            if key not in flags:
                raise ContractError(f"unknown ablation flag {key!r}")
            if isinstance(value, bool):
                value = "on" if value else "off"
            if value not in ("on", "off"):
                raise ContractError(f"ablation.{key} must be 'on' or 'off'")
            flags[key] = value
        self.ablation = flags
        for name in ("epochs", "replay_per_class"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} must be >= 0")
        for name in ("batch_size", "mean_samples", "replay_budget", "trace_top_k"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        if self.gen_per_step is not None and self.gen_per_step < 1:
            raise ContractError("gen_per_step must be >= 1")
        if not self.lr > 0:
            raise ContractError("lr must be positive")
        self.weights  # validates lambdas
        self.alignment

    def enabled(self, flag: str) -> bool:
        return self.ablation[flag] == "on"

    def disable(self, *flags: str) -> "RunConfig":
        for flag in flags:
            if flag not in ABLATION_FLAGS:
                raise ContractError(f"unknown ablation flag {flag!r}")
            self.ablation[flag] = "off"
        return self

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_gan, self.lambda_cls, self.lambda_snl, self.lambda_iba)

    @property
    def alignment(self) -> AlignmentConfig:
        return AlignmentConfig(self.align_eps, self.n_neighbors)

    def model_config(self, d_x: int, d_a: int) -> ModelConfig:
        return ModelConfig(d_x, d_a, self.d_z, self.hidden_g, self.hidden_d, self.temperature)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(obj) - known)
        if unknown:
            raise ContractError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            obj = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ContractError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(obj, dict):
            raise ContractError(f"{path}: config must be a JSON object")
        return cls.from_json(obj)
