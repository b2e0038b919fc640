"""Structured inference networks over layered label-relation graphs."""

from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .data import Dataset, DataError, Sample, SynthSpec, generate_synthetic, load_dataset, save_dataset, split
from .graph import (
    GraphError,
    LabelGraph,
    MaskSet,
    compile_masks,
    hierarchy_graph,
    make_graph,
    parse_graph,
    serialize_graph,
    validate_graph,
)
from .metrics import EvalResult, average_precision, evaluate_scores, map_per_image, map_per_label
from .model import VARIANTS, ForwardTrace, ModelParams, forward, init_params, predict, run, visual_activations
from .observation import ObservationConfig, ObservationSet, observed_activation
from .training import TrainConfig, backward, fit, loss, sgd_step

__version__ = "0.1.0"
