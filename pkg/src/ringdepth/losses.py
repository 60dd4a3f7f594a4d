"""Supervised objective: masked L1 depth loss plus edge-aware smoothness.

The depth term averages |pred - gt| over pixels with a depth return
(gt > 0); pixels without one contribute nothing. The smoothness term
penalizes forward differences of the mean-normalized prediction, each
weighted by exp(-|image gradient|) so depth may vary where the image
does. The total averages (depth + lambda * smooth) uniformly over the
four output scales.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import DimensionError
from .tensor import (Tensor, absolute, add, div, mul, narrow, scale, sub,
                     tensor_mean, tensor_sum)


@dataclass
class LossConfig:
    lambda_smooth: float = 0.01
    eps_norm: float = 1e-7
    inverse_norm: bool = False  # normalize 1/depth instead of depth
    scales_weighting: str = "uniform"


@dataclass
class LossBreakdown:
    """Scalar objective plus per-term floats for logging."""

    total: Tensor
    depth_term: float
    smooth_term: float
    per_scale: list = field(default_factory=list)  # (depth, smooth) pairs
    n_valid: int = 0
    n_empty: int = 0  # scales that saw no valid pixel


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def depth_loss(pred: Tensor, gt) -> Tensor:
    """Mean absolute error over valid (gt > 0) pixels; 0 when none are."""
    gt_arr = _as_array(gt)
    if pred.shape != gt_arr.shape:
        raise DimensionError(f"pred {pred.shape} vs gt {gt_arr.shape}")
    mask = (gt_arr > 0).astype(pred.data.dtype)
    n_valid = int(mask.sum())
    if n_valid == 0:
        return Tensor(np.asarray(0.0, dtype=pred.data.dtype))
    residual = absolute(sub(pred, Tensor(gt_arr.astype(pred.data.dtype))))
    return scale(tensor_sum(mul(residual, Tensor(mask))), 1.0 / n_valid)


def count_valid(gt) -> int:
    return int((_as_array(gt) > 0).sum())


def smooth_loss(pred: Tensor, image, eps: float = 1e-7,
                inverse_norm: bool = False) -> Tensor:
    """Edge-aware first-order smoothness of the normalized prediction.

    ``pred`` is [N,H,W], ``image`` [N,Cin,H,W] (treated as a constant).
    d' = pred / (per-view mean + eps); the penalty is
    mean(|dx d'| * exp(-mean_c|dx I|)) + mean(|dy d'| * exp(-mean_c|dy I|))
    with forward differences dropping the last column / row.
    """
    img = _as_array(image)
    if pred.data.ndim != 3 or img.ndim != 4 or pred.shape != \
            (img.shape[0],) + img.shape[2:]:
        raise DimensionError(
            f"pred {pred.shape} does not spatially match image {img.shape}")
    _, h, w = pred.shape

    d = div(1.0, pred) if inverse_norm else pred
    m = tensor_mean(d, axis=(1, 2), keepdims=True)
    dn = div(d, add(m, eps))

    wx = np.exp(-np.abs(np.diff(img, axis=3)).mean(axis=1)).astype(pred.data.dtype)
    wy = np.exp(-np.abs(np.diff(img, axis=2)).mean(axis=1)).astype(pred.data.dtype)

    ddx = sub(narrow(dn, 2, 1, w - 1), narrow(dn, 2, 0, w - 1))
    ddy = sub(narrow(dn, 1, 1, h - 1), narrow(dn, 1, 0, h - 1))
    term_x = tensor_mean(mul(absolute(ddx), Tensor(wx)))
    term_y = tensor_mean(mul(absolute(ddy), Tensor(wy)))
    return add(term_x, term_y)


def total_loss(pred_scales: Sequence[Tensor], gt, images,
               config: LossConfig) -> LossBreakdown:
    """Mean over scales of depth_loss + lambda * smooth_loss.

    Every scale map must already be at full [N,H,W] resolution. The
    returned ``total`` is the differentiable scalar; the floats beside it
    are detached values for logging.
    """
    pred_scales = list(pred_scales)
    if not pred_scales:
        raise DimensionError("no scale maps given")
    gt_arr = _as_array(gt)
    n_valid = count_valid(gt_arr)
    lam = float(config.lambda_smooth)

    per_scale = []
    n_empty = 0
    total = None
    for pred in pred_scales:
        ld = depth_loss(pred, gt_arr)
        if n_valid == 0:
            n_empty += 1
        ls = smooth_loss(pred, images, eps=config.eps_norm,
                         inverse_norm=config.inverse_norm)
        contrib = add(ld, scale(ls, lam)) if lam != 0.0 else ld
        total = contrib if total is None else add(total, contrib)
        per_scale.append((float(ld.data), float(ls.data)))
    total = scale(total, 1.0 / len(pred_scales))
    return LossBreakdown(
        total=total,
        depth_term=float(np.mean([d for d, _ in per_scale])),
        smooth_term=float(np.mean([s for _, s in per_scale])),
        per_scale=per_scale, n_valid=n_valid, n_empty=n_empty)
