"""Run configuration: every training-protocol default in one place.

Serializes to YAML with sorted keys so serialize -> parse -> serialize is
byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, fields
from pathlib import Path

import yaml

from .errors import ConfigurationError


@dataclass
class TrainConfig:
    # paths
    data_dir: str = "data"
    knowledge_path: str = "knowledge.jsonl"
    vectors_path: str = ""
    checkpoint_dir: str = "runs/checkpoint"
    dataset_format: str = "reuters21578"
    # sequence / width defaults
    max_len: int = 250
    label_dim: int = 300
    hidden: int = 300
    plm_dim: int = 300
    proj_dim: int = 300
    bottleneck: int = 300
    bilinear: int = 300
    head_dim: int = 300
    # optimization protocol
    batch_size: int = 128
    learning_rate: float = 1.0e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    max_epochs: int = 200
    early_stop_patience: int = 10
    # fusion / decision
    beta_doc: float = 0.5
    beta_know: float = 0.5
    threshold: float = 0.5
    nonempty_guard: bool = True
    label_attention_softmax: bool = False
    shared_encoder: bool = False
    # embedder
    embedder_backend: str = "frozen_lookup"
    embedder_checkpoint: str = ""
    # data handling
    validation_fraction: float = 0.1
    min_token_count: int = 1
    max_vocab_size: int = 50000
    # reproducibility / variant
    seed: int = 13
    variant: str = "full"

    def __post_init__(self):
        if abs(self.beta_doc + self.beta_know - 1.0) > 1e-9 or not 0.0 <= self.beta_doc <= 1.0:
            raise ConfigurationError(
                f"beta_doc + beta_know must be 1 with beta_doc in [0,1]; "
                f"got {self.beta_doc}, {self.beta_know}"
            )

    def to_yaml(self) -> str:
        return yaml.safe_dump(asdict(self), sort_keys=True, default_flow_style=False)

    @classmethod
    def from_yaml(cls, text: str) -> "TrainConfig":
        data = yaml.safe_load(text) or {}
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def save(self, path) -> None:
        Path(path).write_text(self.to_yaml(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TrainConfig":
        return cls.from_yaml(Path(path).read_text(encoding="utf-8"))

    def replace(self, **overrides) -> "TrainConfig":
        data = asdict(self)
        data.update(overrides)
        return TrainConfig(**data)
