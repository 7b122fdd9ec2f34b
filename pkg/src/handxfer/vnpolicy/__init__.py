"""Vector-neuron point policy: layers, model, training and model files."""
from .config import PolicyConfig, TransformerConfig, desk_config, paper_config, tiny_config
from .fileio import load_model, save_model
from .layers import vn_activation, vn_linear
from .model import PolicyModel, build_model, encode_point_history, predict
from .train import TrainingSample, augment, gradients, mse_loss, train

__all__ = [
    "PolicyConfig", "TransformerConfig", "desk_config", "paper_config", "tiny_config",
    "load_model", "save_model", "vn_activation", "vn_linear", "PolicyModel", "build_model",
    "encode_point_history", "predict", "TrainingSample", "augment", "gradients", "mse_loss",
    "train",
]
