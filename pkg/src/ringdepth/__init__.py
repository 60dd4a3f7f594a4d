"""ringdepth: surround-view depth estimation on procedural scenes.

A numpy-backed stack — reverse-mode autodiff tensors, a multi-camera
scene renderer, ring attention across adjacent views, an
encoder/decoder depth network, supervised losses, depth metrics, and an
Adam training loop — small enough to verify end to end against
finite differences and closed-form oracles.
"""

from .attention import (AttentionLayerParams, AttentionStackConfig,
                        adjacent_attention, attention_context,
                        attention_stack, self_attention)
from .camera import CameraRig, make_rig, project, unproject
from .conv import conv2d, upsample_bilinear
from .dataset import read_dataset, write_dataset
from .errors import (AggregationError, ConfigError, DimensionError,
                     DomainError, FormatError, GraphError, RingDepthError,
                     TrainingError)
from .gradcheck import GradCheckReport, gradcheck, micro_model_suite
from .io import (load_checkpoint, read_rdt, save_checkpoint, write_pgm16,
                 write_rdt)
from .losses import LossBreakdown, LossConfig, depth_loss, smooth_loss, total_loss
from .metrics import MetricsReport, aggregate, compute_metrics, format_table
from .model import (DepthPrediction, FeaturePyramid, ModelConfig, decode,
                    depth_head, encode, forward, init_params)
from .optim import OptimState, adam_step
from .scene import (Box, Scene, Sphere, SurroundSample, generate_sample,
                    random_scene, render, rotate_scene, sparsify)
from .tensor import (GradTape, Tensor, absolute, add, backward, clip, concat,
                     div, exp, log, matmul, mul, narrow, neg, ones, reshape,
                     roll, scale, sigmoid, softmax_lastdim, sqrt, stack, sub,
                     tensor_mean, tensor_sum, transpose, zeros)
from .trainer import RunConfig, TrainResult, evaluate, load_model, predict, train

__version__ = "0.1.0"

__all__ = [
    "AggregationError", "AttentionLayerParams", "AttentionStackConfig",
    "Box", "CameraRig", "ConfigError", "DepthPrediction", "DimensionError",
    "DomainError", "FeaturePyramid", "FormatError", "GradCheckReport",
    "GradTape", "GraphError", "LossBreakdown", "LossConfig", "MetricsReport",
    "ModelConfig", "OptimState", "RingDepthError", "RunConfig", "Scene",
    "Sphere", "SurroundSample", "Tensor", "TrainResult", "TrainingError",
    "absolute", "adam_step", "add", "adjacent_attention", "aggregate",
    "attention_context",
    "attention_stack", "backward", "clip", "compute_metrics", "concat",
    "conv2d",
    "decode", "depth_head", "depth_loss", "div", "encode", "evaluate", "exp",
    "format_table", "forward", "generate_sample", "gradcheck", "init_params",
    "load_checkpoint", "load_model", "log", "make_rig", "matmul",
    "micro_model_suite",
    "mul", "narrow", "neg", "ones", "predict", "project", "random_scene",
    "read_dataset", "read_rdt", "render", "reshape", "roll", "rotate_scene",
    "save_checkpoint", "scale", "self_attention", "sigmoid",
    "smooth_loss", "softmax_lastdim", "sparsify", "sqrt", "stack", "sub",
    "tensor_mean", "tensor_sum", "total_loss", "train", "transpose",
    "unproject", "upsample_bilinear", "write_dataset", "write_pgm16",
    "write_rdt", "zeros",
]
