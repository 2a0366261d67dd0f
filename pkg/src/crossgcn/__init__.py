"""Graph convolution with explicit multiplicative feature crossing.

The main entry points are re-exported here; see the submodules for the rest.
"""

from .graphdata import (DatasetError, GraphDataset, SplitSpec, load_dataset, make_cross_dataset,
                        make_random_split, normalize_adjacency, save_dataset, synthesize_cross_features)
from .model import (CrossConvLayer, GinLayer, LayerSpec, ModelConfig, cross_transform_backward,
                    cross_transform_forward, dropout_apply, graph_conv_backward, graph_conv_forward,
                    init_params, load_checkpoint, model_backward, model_forward, param_count,
                    save_checkpoint)
from .training import (AdamState, DivergenceError, ExperimentConfig, ExperimentSummary, RunResult,
                       adam_step, evaluate_accuracy, masked_loss, run_experiment, train_run)

__version__ = "0.1.0"

__all__ = [
    "AdamState", "CrossConvLayer", "DatasetError", "DivergenceError", "ExperimentConfig",
    "ExperimentSummary", "GinLayer", "GraphDataset", "LayerSpec", "ModelConfig", "RunResult", "SplitSpec",
    "adam_step", "cross_transform_backward", "cross_transform_forward", "dropout_apply",
    "evaluate_accuracy", "graph_conv_backward", "graph_conv_forward", "init_params", "load_checkpoint",
    "load_dataset", "make_cross_dataset", "make_random_split", "masked_loss", "model_backward",
    "model_forward", "normalize_adjacency", "param_count", "run_experiment", "save_checkpoint",
    "save_dataset", "synthesize_cross_features", "train_run",
]
