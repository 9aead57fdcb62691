"""Graph classification with attention-scored node-drop pooling."""

from .data import Graph, GraphBatch, make_batch, parse_tu_dataset
from .model import forward, init_params
from .pooling import grepool_layer, select_nodes
from .training import TrainConfig, run_experiment, train, uniform_loss_wrapper
from .wl import wl_equivalent, wl_refine

__all__ = [
    "Graph", "GraphBatch", "make_batch", "parse_tu_dataset",
    "forward", "init_params", "grepool_layer", "select_nodes",
    "TrainConfig", "run_experiment", "train", "uniform_loss_wrapper",
    "wl_equivalent", "wl_refine",
]
__version__ = "0.1.0"
