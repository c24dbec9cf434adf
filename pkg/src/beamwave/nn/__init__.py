"""Small numpy CNN engine: layers, Adam, training and model files."""

from .functional import (
    conv_backward,
    conv_forward,
    cross_entropy,
    dense_forward,
    maxpool_backward,
    maxpool_forward,
    relu,
    softmax,
    softmax_cross_entropy,
)
from .model import (
    VARIANTS,
    LayerSpec,
    Model,
    ModelFormatError,
    ModelSpec,
    activation_map,
    build_model,
    build_spec,
    load_model,
    save_model,
)
from .optim import Adam, adam_step
from .train import TrainingDiverged, TrainLog, evaluate_arrays, train
