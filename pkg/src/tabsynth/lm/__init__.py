from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import LmConfig, TrainConfig
from .model import (
    KvCache,
    decode_step,
    forward,
    gradients,
    init_params,
    nll,
    pad_batch,
    prefill,
)
from .train import train

__all__ = [
    "Checkpoint",
    "KvCache",
    "LmConfig",
    "TrainConfig",
    "decode_step",
    "forward",
    "gradients",
    "init_params",
    "load_checkpoint",
    "nll",
    "pad_batch",
    "prefill",
    "save_checkpoint",
    "train",
]
