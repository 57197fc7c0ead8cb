"""Dynamic graph representation learning with self-attention on GCN weights,
for predicting viewer-to-viewer capacities in live video streaming events."""

from .dataio import SynthConfig, event_stats, generate_event, load_event, save_event
from .errors import (ConfigError, ContractError, DataError, DimensionError, EmptyTestSetError,
                     NumericError, ParseError, UndefinedMetricError, VStreamError)
from .evaluation import (EvalReport, MlpHead, TestSet, build_test_set, evaluate_embedding,
                         predict_inner, predict_mlp, score, train_mlp_head)
from .graphcore import (DynamicGraph, EvolutionStats, GraphSnapshot, edge_evolution, neighborhood,
                        node_evolution, normalize_adjacency)
from .model import (Embedding, ModelConfig, ModelState, evolve_weights, gcn_forward, init_state,
                    load_checkpoint, reconstruction_loss, save_checkpoint, static_gcn_baseline,
                    vstream_forward)
from .train import TrainConfig, TrainTrace, fit, train_all_steps, train_at_step

__version__ = "0.1.0"

__all__ = [
    "SynthConfig",
    "event_stats",
    "generate_event",
    "load_event",
    "save_event",
    "ConfigError",
    "ContractError",
    "DataError",
    "DimensionError",
    "EmptyTestSetError",
    "NumericError",
    "ParseError",
    "UndefinedMetricError",
    "VStreamError",
    "EvalReport",
    "MlpHead",
    "TestSet",
    "build_test_set",
    "evaluate_embedding",
    "predict_inner",
    "predict_mlp",
    "score",
    "train_mlp_head",
    "DynamicGraph",
    "EvolutionStats",
    "GraphSnapshot",
    "edge_evolution",
    "neighborhood",
    "node_evolution",
    "normalize_adjacency",
    "Embedding",
    "ModelConfig",
    "ModelState",
    "evolve_weights",
    "gcn_forward",
    "init_state",
    "load_checkpoint",
    "reconstruction_loss",
    "save_checkpoint",
    "static_gcn_baseline",
    "vstream_forward",
    "TrainConfig",
    "TrainTrace",
    "fit",
    "train_all_steps",
    "train_at_step",
]
