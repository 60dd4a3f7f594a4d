"""Ring attention over surround views.

Each camera view is a token grid. A view first attends to itself
(multi-head self-attention), then its ring neighbors query it: for view
j, the adjacent block computes attention where Q comes from neighbor
features (j-1 and j+1, wrapping mod N) while K and V come from view j
itself, so information flows along the camera ring. The two alternate
for a configured number of rounds at every pyramid scale, with weights
shared across views but separate per scale, per round, and per block
type.

Per head h (d_head = C / n_heads):

    out_h = softmax(Q_h K_h^T / sqrt(d_head)) V_h

with Q, K, V affine projections of the inputs. Heads are concatenated,
output-projected, and (by default) residual-added; the residual and
output projection can be disabled to expose the bare equations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import (Tensor, add, matmul, mul, reshape, roll, softmax_lastdim,
                     stack, tensor_mean, transpose)

NEIGHBOR_MODES = ("both_averaged", "left_only", "right_only")


@dataclass
class AttentionLayerParams:
    """Projection weights of one attention block.

    ``wq, wk, wv, wo`` are [C, C]; ``bq, bk, bv, bo`` are [C]. Tokens are
    rows, so projections apply as ``x @ w + b``.
    """

    wq: Tensor
    wk: Tensor
    wv: Tensor
    bq: Tensor
    bk: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    n_heads: int

    def __post_init__(self):
        c = self.wq.shape[0]
        if self.wq.shape != (c, c):
            raise DimensionError(f"wq must be square, got {self.wq.shape}")
        if c % self.n_heads != 0:
            raise ConfigError(f"channels {c} not divisible by {self.n_heads} heads")

    @property
    def channels(self) -> int:
        return self.wq.shape[0]


@dataclass
class AttentionStackConfig:
    """Shape of the alternating stack.

    ``z_alternations`` rounds of (self, adjacent) run at each scale in
    ``scales`` (pyramid downsampling divisors); ``channels`` is the token
    width C.
    """

    z_alternations: int = 2
    scales: tuple = (2, 4, 8, 16)
    channels: int = 32
    n_heads: int = 1
    neighbor_mode: str = "both_averaged"

    def __post_init__(self):
        self.scales = tuple(self.scales)
        if self.z_alternations < 1:
            raise ConfigError(f"z_alternations must be >= 1, got {self.z_alternations}")
        if not set(self.scales) <= {2, 4, 8, 16}:
            raise ConfigError(f"scales must be drawn from {{2,4,8,16}}, got {self.scales}")
        if self.channels % self.n_heads != 0:
            raise ConfigError(f"channels {self.channels} not divisible by "
                              f"{self.n_heads} heads")
        if self.neighbor_mode not in NEIGHBOR_MODES:
            raise ConfigError(f"neighbor_mode must be one of {NEIGHBOR_MODES}, "
                              f"got {self.neighbor_mode!r}")


def layer_params(params: Mapping[str, Tensor], prefix: str,
                 n_heads: int) -> AttentionLayerParams:
    """Build a block's parameter view from a flat registry (``prefix.wq`` ...)."""
    try:
        return AttentionLayerParams(
            wq=params[f"{prefix}.wq"], wk=params[f"{prefix}.wk"],
            wv=params[f"{prefix}.wv"], bq=params[f"{prefix}.bq"],
            bk=params[f"{prefix}.bk"], bv=params[f"{prefix}.bv"],
            wo=params[f"{prefix}.wo"], bo=params[f"{prefix}.bo"],
            n_heads=n_heads)
    except KeyError as e:
        raise ConfigError(f"missing attention parameter {e} under {prefix!r}") from e


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    """[.., T, C] -> [.., h, T, C/h]"""
    *lead, t, c = x.shape
    nl = len(lead)
    y = reshape(x, (*lead, t, n_heads, c // n_heads))
    return transpose(y, tuple(range(nl)) + (nl + 1, nl, nl + 2))


def _merge_heads(x: Tensor) -> Tensor:
    """[.., h, T, C/h] -> [.., T, C]"""
    *lead, h, t, dh = x.shape
    nl = len(lead)
    y = transpose(x, tuple(range(nl)) + (nl + 1, nl, nl + 2))
    return reshape(y, (*lead, t, h * dh))


def _affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return add(matmul(x, w), b)


def attention_context(q_src: Tensor, kv_src: Tensor, p: AttentionLayerParams,
                      return_weights: bool = False):
    """Multi-head scaled dot-product attention, pre output-projection.

    Queries come from ``q_src``, keys and values from ``kv_src``. Both
    are [.., T, C]; ``q_src`` may carry extra leading dimensions that
    broadcast against ``kv_src`` (used to batch the two ring neighbors).
    Returns the merged-head context [.., T, C], plus the row-stochastic
    attention weights [.., h, T, T] when asked.
    """
    if q_src.shape[-1] != p.channels or kv_src.shape[-1] != p.channels:
        raise DimensionError(
            f"token width mismatch: inputs {q_src.shape} / {kv_src.shape} "
            f"vs params C={p.channels}")
    d_head = p.channels // p.n_heads
    q = mul(_affine(q_src, p.wq, p.bq), 1.0 / math.sqrt(d_head))
    k = _affine(kv_src, p.wk, p.bk)
    v = _affine(kv_src, p.wv, p.bv)
    qh = _split_heads(q, p.n_heads)
    kh = _split_heads(k, p.n_heads)
    vh = _split_heads(v, p.n_heads)
    nd = kh.ndim
    scores = matmul(qh, transpose(kh, tuple(range(nd - 2)) + (nd - 1, nd - 2)))
    weights = softmax_lastdim(scores)
    ctx = _merge_heads(matmul(weights, vh))
    if return_weights:
        return ctx, weights
    return ctx


def self_attention(f: Tensor, p: AttentionLayerParams, residual: bool = True,
                   return_weights: bool = False):
    """One self-attention block on token matrix ``f`` [.., T, C]."""
    ctx, weights = attention_context(f, f, p, return_weights=True)
    out = _affine(ctx, p.wo, p.bo)
    if residual:
        out = add(out, f)
    if return_weights:
        return out, weights
    return out


def adjacent_attention(f_j: Tensor, f_left: Tensor, f_right: Tensor,
                       p: AttentionLayerParams,
                       neighbor_mode: str = "both_averaged",
                       residual: bool = True, return_weights: bool = False):
    """One adjacent block for view j given its ring neighbors' features.

    Q is projected from the neighbor features (j-1, then j+1); K and V
    from view j's own features. In ``both_averaged`` mode the two
    neighbor contexts are averaged before the output projection; the
    residual, when enabled, adds view j's input back.
    """
    if f_left.shape != f_j.shape or f_right.shape != f_j.shape:
        raise DimensionError(
            f"neighbor shapes {f_left.shape} / {f_right.shape} do not match "
            f"view shape {f_j.shape}")
    if neighbor_mode not in NEIGHBOR_MODES:
        raise ConfigError(f"neighbor_mode must be one of {NEIGHBOR_MODES}, "
                          f"got {neighbor_mode!r}")
    weights = []
    if neighbor_mode == "left_only":
        ctx, w = attention_context(f_left, f_j, p, return_weights=True)
        weights.append(w)
    elif neighbor_mode == "right_only":
        ctx, w = attention_context(f_right, f_j, p, return_weights=True)
        weights.append(w)
    else:
        ctx_l, wl = attention_context(f_left, f_j, p, return_weights=True)
        ctx_r, wr = attention_context(f_right, f_j, p, return_weights=True)
        ctx = mul(add(ctx_l, ctx_r), 0.5)
        weights.extend([wl, wr])
    out = _affine(ctx, p.wo, p.bo)
    if residual:
        out = add(out, f_j)
    if return_weights:
        return out, weights
    return out


def _adjacent_all_views(v: Tensor, p: AttentionLayerParams, neighbor_mode: str,
                        residual: bool) -> Tensor:
    """Adjacent block for every view at once; ``v`` is [N, T, C].

    ``roll(v, 1)`` places view j-1 in slot j (and wraps view N-1 into
    slot 0), so one batched attention covers the whole ring. In
    both_averaged mode the two neighbors ride a leading axis of size 2
    that broadcasts against the shared K/V.
    """
    left = roll(v, 1, 0)
    right = roll(v, -1, 0)
    if neighbor_mode == "left_only":
        ctx = attention_context(left, v, p)
    elif neighbor_mode == "right_only":
        ctx = attention_context(right, v, p)
    else:
        ctx = tensor_mean(attention_context(stack([left, right], 0), v, p), axis=0)
    out = _affine(ctx, p.wo, p.bo)
    if residual:
        out = add(out, v)
    return out


def tokens_from_map(x: Tensor) -> Tensor:
    """[N, C, H, W] -> [N, H*W, C] row-major token order."""
    n, c, h, w = x.shape
    return transpose(reshape(x, (n, c, h * w)), (0, 2, 1))


def map_from_tokens(t: Tensor, h: int, w: int) -> Tensor:
    """[N, T, C] -> [N, C, h, w]; inverse of :func:`tokens_from_map`."""
    n, _, c = t.shape
    return reshape(transpose(t, (0, 2, 1)), (n, c, h, w))


def attention_stack(features: dict, n_views: int, config: AttentionStackConfig,
                    params: Mapping[str, Tensor], use_adjacent: bool = True,
                    use_self: bool = True, residual: bool = True) -> dict:
    """Alternate self and adjacent attention at every configured scale.

    ``features`` maps scale divisors to [N, C, H/s, W/s] tensors; the
    transformed dict is returned (untouched scales pass through).
    Parameter names follow ``attn.scale{s}.layer{z}.{self|adj}.*``. With
    ``use_adjacent`` off, only the self blocks run (the ring is unused);
    with ``use_self`` off, only the ring blocks run.
    """
    if use_adjacent and n_views < 2:
        raise ConfigError(
            f"adjacent attention needs at least 2 views, got {n_views}; "
            "disable it to run self-attention only")
    if not (use_adjacent or use_self):
        return dict(features)
    out = dict(features)
    for s in config.scales:
        if s not in out:
            raise ConfigError(f"configured scale 1/{s} missing from the pyramid")
        x = out[s]
        n, _, h, w = x.shape
        tokens = tokens_from_map(x)
        for z in range(config.z_alternations):
            if use_self:
                p_self = layer_params(params, f"attn.scale{s}.layer{z}.self",
                                      config.n_heads)
                tokens = self_attention(tokens, p_self, residual=residual)
            if use_adjacent:
                p_adj = layer_params(params, f"attn.scale{s}.layer{z}.adj",
                                     config.n_heads)
                tokens = _adjacent_all_views(tokens, p_adj,
                                             config.neighbor_mode, residual)
        out[s] = map_from_tokens(tokens, h, w)
    return out
