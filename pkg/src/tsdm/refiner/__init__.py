"""Depth-refiner: pretreatment, fusion network, loss, trainer and weights I/O."""

from .loss import RefinerOutput, loss, loss_grad, smooth_l1
from .model import Arch, RefinerModel, backward, forward
from .pretreat import (
    INPUT_SIZE,
    RefinerInput,
    amplify,
    denormalize_box,
    nms_merge,
    normalize_box,
    predict,
    prepare_input,
    pretreat,
    refine,
)
from .train import TrainConfig, grad_check, lr_at, train
from .weights import WeightsFormatError, load_weights, save_weights

__all__ = [
    "Arch", "INPUT_SIZE", "RefinerInput", "RefinerModel", "RefinerOutput", "TrainConfig",
    "WeightsFormatError", "amplify", "backward", "denormalize_box", "forward", "grad_check",
    "load_weights", "loss", "loss_grad", "lr_at", "nms_merge", "normalize_box", "predict",
    "prepare_input", "pretreat", "refine", "save_weights", "smooth_l1", "train",
]
