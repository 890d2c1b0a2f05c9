"""Partial-label-learning experimentation toolkit for EEG-style feature vectors."""

from .backbone import Backbone, BackboneConfig, QueryKeyPair, load_checkpoint, save_checkpoint
from .data import Dataset, SynthConfig, assign_folds, load_dataset, synth_generate, write_dataset
from .harness import AggregateTable, GridConfig, RunResult, RunSpec, run_grid, train_run, write_report
from .kernel import OptimizerState, ParameterSet, Tensor, gradcheck, sgd_step
from .labels import (
    CandidateLabelSet,
    EmotionWheel,
    build_similarity,
    emotion_distance,
    gen_similarity_candidates,
    gen_uniform_candidates,
    uniformize,
)
from .methods import ContrastiveState, MethodConfig, MethodRuntime

__version__ = "0.1.0"

__all__ = [
    "Backbone", "BackboneConfig", "QueryKeyPair", "save_checkpoint", "load_checkpoint",
    "Dataset", "SynthConfig", "synth_generate", "load_dataset", "write_dataset", "assign_folds",
    "AggregateTable", "GridConfig", "RunResult", "RunSpec", "run_grid", "train_run", "write_report",
    "Tensor", "ParameterSet", "OptimizerState", "gradcheck", "sgd_step",
    "CandidateLabelSet", "EmotionWheel", "build_similarity", "emotion_distance",
    "gen_uniform_candidates", "gen_similarity_candidates", "uniformize",
    "MethodConfig", "MethodRuntime", "ContrastiveState",
]
