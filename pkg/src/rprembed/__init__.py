"""Inductive node embeddings from rooted PageRank structure and node content."""

from .config import TrainConfig, load_config
from .errors import (DegenerateNodeError, NonFiniteError, ParseError, RprEmbedError,
                     ValidationError)
from .graph import Graph, LabelSet, load_graph, save_graph
from .structfeat import FeatureTable, RprConfig, all_structural_features, exact_rpr
from .trainer import TrainedModel, infer, load_model, save_model, train

__version__ = "0.1.0"

__all__ = [
    "TrainConfig", "load_config", "DegenerateNodeError", "NonFiniteError", "ParseError",
    "RprEmbedError", "ValidationError", "Graph", "LabelSet", "load_graph", "save_graph",
    "FeatureTable", "RprConfig", "all_structural_features", "exact_rpr", "TrainedModel",
    "infer", "load_model", "save_model", "train",
]
