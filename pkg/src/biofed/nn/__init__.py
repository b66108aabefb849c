from .layers import Conv2d, Dense, Flatten, MaxPool2d, ReLU, infer_shapes
from .loss import softmax_cross_entropy, softmax_cross_entropy_backward
from .network import Network, reference_network
from .params import ModelParameters, check_same_schema
from .train import TrainConfig, sgd_step, train_local

__all__ = [
    "Conv2d",
    "Dense",
    "Flatten",
    "MaxPool2d",
    "ReLU",
    "infer_shapes",
    "softmax_cross_entropy",
    "softmax_cross_entropy_backward",
    "Network",
    "reference_network",
    "ModelParameters",
    "check_same_schema",
    "TrainConfig",
    "sgd_step",
    "train_local",
]
