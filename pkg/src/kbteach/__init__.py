"""Interactive knowledge-base completion with learned answer thresholds."""

from .config import EngineConfig
from .decision import (
    Decision,
    Direction,
    PerformanceBuffer,
    Query,
    ThresholdBuffer,
    ThresholdVariant,
    Verdict,
)
from .engine import Engine, SamplingStrategy, SessionConfig, SessionOutcome, initial_training
from .kb import KnowledgeBase, Split, Triple, load_kb, save_kb
from .model import EmbeddingModel, ModelHyper, train
from .simulate import SimulatedUser, SimWorld, WorldBuildConfig, build_world, load_world, save_world
from .synth import SynthConfig, synthetic_original_kb

__version__ = "0.1.0"

__all__ = [
    "Decision",
    "Direction",
    "EmbeddingModel",
    "Engine",
    "EngineConfig",
    "KnowledgeBase",
    "ModelHyper",
    "PerformanceBuffer",
    "Query",
    "SamplingStrategy",
    "SessionConfig",
    "SessionOutcome",
    "SimWorld",
    "SimulatedUser",
    "Split",
    "SynthConfig",
    "ThresholdBuffer",
    "ThresholdVariant",
    "Triple",
    "Verdict",
    "WorldBuildConfig",
    "build_world",
    "initial_training",
    "load_kb",
    "load_world",
    "save_kb",
    "save_world",
    "synthetic_original_kb",
    "train",
    "__version__",
]
