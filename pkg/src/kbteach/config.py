"""Engine configuration: one flat record covering model and session knobs.

Loaded from JSON; unknown keys are rejected so typos fail loudly instead
of silently running defaults.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .decision import ThresholdVariant
from .engine import SamplingStrategy, SessionConfig
from .model import ModelHyper


@dataclass
class EngineConfig:
    # embedding model
    dim: int = 250
    learning_rate: float = 0.001
    l2_coeff: float = 0.001
    negatives_per_positive: int = 4
    batch_size: int = 128
    init_epochs: int = 100
    # session behavior
    alpha: float = 0.9
    rho: float = 20.0
    max_train_sample: int = 500
    valid_sample: int = 50
    valid_negatives_per_positive: int = 4
    max_clues: int = 1
    max_entity_facts: int = 3
    epochs_closed: int = 5
    epochs_open: int = 2
    threshold_variant: str = "max"
    sampling: str = "both"
    use_performance_buffer: bool = True
    seed: int = 1000

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name in ("threshold_variant", "sampling"):
                if not isinstance(value, str):
                    raise ValueError(f"{f.name} must be a string, got {value!r}")
            elif f.name == "use_performance_buffer":
                if not isinstance(value, bool):
                    raise ValueError(f"{f.name} must be a boolean, got {value!r}")
            elif isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(f"{f.name} must be a number, got {value!r}")
        ThresholdVariant(self.threshold_variant)
        SamplingStrategy(self.sampling)
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.rho <= 100.0:
            raise ValueError(f"rho must lie in [0, 100], got {self.rho}")
        for name in ("dim", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    def model_hyper(self) -> ModelHyper:
        return ModelHyper(
            dim=self.dim,
            learning_rate=self.learning_rate,
            l2_coeff=self.l2_coeff,
            negatives_per_positive=self.negatives_per_positive,
            batch_size=self.batch_size,
        )

    def session_config(self) -> SessionConfig:
        return SessionConfig(
            alpha=self.alpha,
            rho=self.rho,
            max_train_sample=self.max_train_sample,
            valid_sample=self.valid_sample,
            valid_negatives_per_positive=self.valid_negatives_per_positive,
            max_clues=self.max_clues,
            max_entity_facts=self.max_entity_facts,
            epochs_closed=self.epochs_closed,
            epochs_open=self.epochs_open,
            threshold_variant=ThresholdVariant(self.threshold_variant),
            sampling=SamplingStrategy(self.sampling),
            use_performance_buffer=self.use_performance_buffer,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str) -> "EngineConfig":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)
