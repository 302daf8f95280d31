from .layers import BatchNorm2d, Conv2d, Linear, ReLU, conv2d_forward, softmax, softmax_cross_entropy
from .network import (DEFAULT_ARCH, TINY_ARCH, Architecture, Network, network_backward,
                      network_forward, predict)
from .train import TrainConfig, format_history, sgd_step, train
from .io import load_model, save_model

__all__ = [
    "Architecture", "BatchNorm2d", "Conv2d", "DEFAULT_ARCH", "Linear", "Network", "ReLU",
    "TINY_ARCH", "TrainConfig", "conv2d_forward", "format_history", "load_model",
    "network_backward", "network_forward", "predict", "save_model", "sgd_step", "softmax",
    "softmax_cross_entropy", "train",
]
