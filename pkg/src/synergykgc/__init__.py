"""Dual-tower knowledge-graph completion with density-anchored synergy attention."""

from .config import DataConfig, TrainConfig, load_config
from .evaluator import MetricsReport, evaluate_split, filtered_rank, score_candidates
from .kg_store import (DegreeProfile, TripleStore, Vocabulary, augment_inverses, degree_profile,
                       load_dataset, random_kg)
from .model import SynergyKGC, joint_loss, semantic_loss
from .trainer import EpochRecord, Phase, phase_of, train

__version__ = "0.1.0"

__all__ = [
    "DataConfig", "TrainConfig", "load_config", "MetricsReport", "evaluate_split", "filtered_rank",
    "score_candidates", "DegreeProfile", "TripleStore", "Vocabulary", "augment_inverses",
    "degree_profile", "load_dataset", "random_kg", "SynergyKGC", "joint_loss", "semantic_loss",
    "EpochRecord", "Phase", "phase_of", "train", "__version__",
]
