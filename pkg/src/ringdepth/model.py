"""Surround-view depth network: encoder, ring attention, decoder, depth heads.

Pipeline per forward pass (all N views share every weight):

1. normalize each image to zero mean / unit variance,
2. encode to a five-level feature pyramid — a stride-2 conv stem, then
   four stages that each pair a local 3x3 conv branch with a global
   self-attention branch over the stage's tokens (summed, pointwise
   feed-forward, residual),
3. run the ring attention stack over the pyramid levels,
4. decode coarse-to-fine with bilinear x2 upsampling and skip
   concatenation from the matching encoder level,
5. a per-scale 1x1 head maps decoder features to depth via
   sigmoid(x) * d_max, and every scale is upsampled to input resolution.

Activation throughout is the sigmoid-weighted linear unit
x * sigmoid(x). Parameters live in a flat name -> Tensor registry; names
are stable and define the checkpoint contents.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

import numpy as np

from .attention import (AttentionStackConfig, attention_stack, layer_params,
                        map_from_tokens, self_attention, tokens_from_map)
from .conv import conv2d, upsample_bilinear
from .errors import ConfigError, DimensionError
from .scene import SurroundSample
from .tensor import (DEFAULT_DTYPE, Tensor, add, clip, concat, div, mul,
                     reshape, scale, sigmoid, sqrt, tensor_mean)

_SCALES = (2, 4, 8, 16)  # pyramid downsampling divisors, fine to coarse


@dataclass
class ModelConfig:
    n_views: int = 6
    c_f: int = 32
    d_max: float = 80.0
    in_channels: int = 1
    use_adjacent_attention: bool = True
    use_self_attention: bool = True
    residuals: bool = True
    z_alternations: int = 2
    n_heads: int = 1
    neighbor_mode: str = "both_averaged"
    attention: Optional[AttentionStackConfig] = None

    def __post_init__(self):
        if self.d_max <= 0:
            raise ConfigError(f"d_max must be positive, got {self.d_max}")
        if self.c_f % self.n_heads != 0:
            raise ConfigError(f"c_f={self.c_f} not divisible by "
                              f"n_heads={self.n_heads}")
        if self.attention is None:
            self.attention = AttentionStackConfig(
                z_alternations=self.z_alternations, scales=_SCALES,
                channels=self.c_f, n_heads=self.n_heads,
                neighbor_mode=self.neighbor_mode)
        if self.attention.channels != self.c_f:
            raise ConfigError(f"attention channels {self.attention.channels} "
                              f"!= c_f {self.c_f}")

    def to_dict(self) -> dict:
        a = self.attention
        return {"n_views": self.n_views, "c_f": self.c_f, "d_max": self.d_max,
                "in_channels": self.in_channels,
                "use_adjacent_attention": self.use_adjacent_attention,
                "use_self_attention": self.use_self_attention,
                "residuals": self.residuals,
                "attention": {"z_alternations": a.z_alternations,
                              "scales": list(a.scales),
                              "channels": a.channels, "n_heads": a.n_heads,
                              "neighbor_mode": a.neighbor_mode}}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        a = d.pop("attention", None)
        attention = AttentionStackConfig(**a) if a else None
        return cls(attention=attention, **d)


@dataclass
class FeaturePyramid:
    """Encoder outputs; f1 and f2 share the 1/2 resolution."""

    f1: Tensor  # [N, C_F, H/2,  W/2]
    f2: Tensor  # [N, C_F, H/2,  W/2]
    f3: Tensor  # [N, C_F, H/4,  W/4]
    f4: Tensor  # [N, C_F, H/8,  W/8]
    f5: Tensor  # [N, C_F, H/16, W/16]

    def by_scale(self) -> dict:
        return {2: self.f2, 4: self.f3, 8: self.f4, 16: self.f5}


@dataclass
class DepthPrediction:
    """Per-scale depth maps, each already upsampled to [N, H, W].

    ``scales`` is ordered fine to coarse (decoder scales 1/2, 1/4, 1/8,
    1/16); ``final`` aliases the 1/2-scale map.
    """

    scales: tuple
    final: Tensor = field(init=False)

    def __post_init__(self):
        if len(self.scales) != 4:
            raise ConfigError(f"expected 4 scale maps, got {len(self.scales)}")
        self.final = self.scales[0]


def silu(x: Tensor) -> Tensor:
    return mul(x, sigmoid(x))


# ---------------------------------------------------------------------
# parameter registry
# ---------------------------------------------------------------------

def _uniform(rng, bound: float, shape, dtype) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def parameter_shapes(cfg: ModelConfig) -> dict:
    """Every parameter name and shape implied by the configuration."""
    c = cfg.c_f
    shapes: dict[str, tuple] = {
        "enc.stage1.conv.w": (c, cfg.in_channels, 3, 3),
        "enc.stage1.conv.b": (c,),
    }
    for i in range(2, 6):
        pre = f"enc.stage{i}"
        shapes[f"{pre}.down.w"] = (c, c, 3, 3)
        shapes[f"{pre}.down.b"] = (c,)
        shapes[f"{pre}.conv.w"] = (c, c, 3, 3)
        shapes[f"{pre}.conv.b"] = (c,)
        for nm in ("wq", "wk", "wv", "wo"):
            shapes[f"{pre}.attn.{nm}"] = (c, c)
        for nm in ("bq", "bk", "bv", "bo"):
            shapes[f"{pre}.attn.{nm}"] = (c,)
        shapes[f"{pre}.ff.w"] = (c, c, 1, 1)
        shapes[f"{pre}.ff.b"] = (c,)
    block_types = (["self"] if cfg.use_self_attention else []) + \
                  (["adj"] if cfg.use_adjacent_attention else [])
    for s in cfg.attention.scales:
        for z in range(cfg.attention.z_alternations):
            for kind in block_types:
                pre = f"attn.scale{s}.layer{z}.{kind}"
                for nm in ("wq", "wk", "wv", "wo"):
                    shapes[f"{pre}.{nm}"] = (c, c)
                for nm in ("bq", "bk", "bv", "bo"):
                    shapes[f"{pre}.{nm}"] = (c,)
    shapes["dec.scale16.conv.w"] = (c, c, 3, 3)
    shapes["dec.scale16.conv.b"] = (c,)
    for s in (8, 4, 2):
        shapes[f"dec.scale{s}.conv.w"] = (c, 2 * c, 3, 3)
        shapes[f"dec.scale{s}.conv.b"] = (c,)
    for s in _SCALES:
        shapes[f"head.scale{s}.w"] = (1, c, 1, 1)
        shapes[f"head.scale{s}.b"] = (1,)
    return shapes


def init_params(cfg: ModelConfig, seed: int = 0,
                dtype=DEFAULT_DTYPE) -> dict:
    """Deterministic parameter registry.

    Each tensor draws from its own generator keyed by (seed, crc32(name)),
    so adding or removing parameters never shifts the values of the rest.
    Weights are uniform with bound 1/sqrt(fan_in); biases start at zero.
    """
    params: dict[str, Tensor] = {}
    for name, shape in parameter_shapes(cfg).items():
        rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
        if len(shape) == 1:  # biases
            data = np.zeros(shape, dtype=dtype)
        elif len(shape) == 4:
            fan_in = shape[1] * shape[2] * shape[3]
            data = _uniform(rng, 1.0 / np.sqrt(fan_in), shape, dtype)
        else:
            data = _uniform(rng, 1.0 / np.sqrt(shape[0]), shape, dtype)
        params[name] = Tensor(data, requires_grad=True)
    return params


# ---------------------------------------------------------------------
# encoder / decoder / head
# ---------------------------------------------------------------------

def _joint_stage(x: Tensor, params: Mapping[str, Tensor], prefix: str,
                 stride: int, n_heads: int) -> Tensor:
    """Downsample, then fuse a local conv branch with global attention."""
    d = silu(conv2d(x, params[f"{prefix}.down.w"], params[f"{prefix}.down.b"],
                    stride=stride))
    local = silu(conv2d(d, params[f"{prefix}.conv.w"], params[f"{prefix}.conv.b"]))
    _, _, h, w = d.shape
    p_attn = layer_params(params, f"{prefix}.attn", n_heads)
    att = self_attention(tokens_from_map(d), p_attn, residual=False)
    y = add(local, map_from_tokens(att, h, w))
    ff = silu(conv2d(y, params[f"{prefix}.ff.w"], params[f"{prefix}.ff.b"]))
    return add(y, ff)


def encode(images: Tensor, params: Mapping[str, Tensor],
           cfg: ModelConfig) -> FeaturePyramid:
    """Images [N, Cin, H, W] to the five-level pyramid; H, W must divide by 16."""
    n, cin, h, w = images.shape
    if h % 16 or w % 16:
        raise DimensionError(
            f"input extents {h}x{w} must be divisible by 16; pad the images")
    if cin != cfg.in_channels:
        raise DimensionError(f"input has {cin} channels, config says "
                             f"{cfg.in_channels}")
    f1 = silu(conv2d(images, params["enc.stage1.conv.w"],
                     params["enc.stage1.conv.b"], stride=2))
    f2 = _joint_stage(f1, params, "enc.stage2", 1, cfg.n_heads)
    f3 = _joint_stage(f2, params, "enc.stage3", 2, cfg.n_heads)
    f4 = _joint_stage(f3, params, "enc.stage4", 2, cfg.n_heads)
    f5 = _joint_stage(f4, params, "enc.stage5", 2, cfg.n_heads)
    return FeaturePyramid(f1=f1, f2=f2, f3=f3, f4=f4, f5=f5)


def decode(pyramid: FeaturePyramid, params: Mapping[str, Tensor],
           use_skips: bool = True) -> dict:
    """Coarse-to-fine decoder features keyed by scale divisor.

    Each step doubles resolution, concatenates the matching encoder level
    (zeros when ``use_skips`` is off, keeping shapes identical), and
    fuses with a 3x3 conv + nonlinearity.
    """
    out: dict[int, Tensor] = {}
    d = silu(conv2d(pyramid.f5, params["dec.scale16.conv.w"],
                    params["dec.scale16.conv.b"]))
    out[16] = d
    for s, skip in ((8, pyramid.f4), (4, pyramid.f3), (2, pyramid.f2)):
        _, _, sh, sw = skip.shape
        up = upsample_bilinear(d, sh, sw)
        if not use_skips:
            skip = Tensor(np.zeros(skip.shape, dtype=skip.data.dtype))
        d = silu(conv2d(concat([up, skip], axis=1),
                        params[f"dec.scale{s}.conv.w"],
                        params[f"dec.scale{s}.conv.b"]))
        out[s] = d
    return out


def depth_head(feature: Tensor, w: Tensor, b: Tensor, d_max: float) -> Tensor:
    """1x1 conv to one channel, then sigmoid * d_max: depth in (0, d_max).

    Logits are clamped to +/-15 first: float32 sigmoid saturates to an
    exact 0.0 or 1.0 near |x| ~ 17, which would close the open interval.
    At +/-15 the output is still within 4e-7 of the rail and the clamp
    only zeroes gradients that were below 3e-7 anyway.
    """
    if d_max <= 0:
        raise ConfigError(f"d_max must be positive, got {d_max}")
    return scale(sigmoid(clip(conv2d(feature, w, b), -15.0, 15.0)), d_max)


def normalize_images(images: Tensor) -> Tensor:
    """Per-image zero-mean / unit-variance normalization (variance guarded)."""
    m = tensor_mean(images, axis=(1, 2, 3), keepdims=True)
    centered = add(images, mul(m, -1.0))
    var = tensor_mean(mul(centered, centered), axis=(1, 2, 3), keepdims=True)
    return div(centered, sqrt(add(var, 1e-6)))


def forward(sample: Union[SurroundSample, Tensor], params: Mapping[str, Tensor],
            cfg: ModelConfig) -> DepthPrediction:
    """Full pass: N views in, four upsampled depth maps out."""
    if isinstance(sample, SurroundSample):
        images = Tensor(sample.images)
    else:
        images = sample
    n, _, h, w = images.shape
    if n != cfg.n_views:
        raise ConfigError(f"sample has {n} views, config expects {cfg.n_views}")

    pyr = encode(normalize_images(images), params, cfg)
    if cfg.use_self_attention or cfg.use_adjacent_attention:
        feats = attention_stack(pyr.by_scale(), cfg.n_views, cfg.attention,
                                params, use_adjacent=cfg.use_adjacent_attention,
                                use_self=cfg.use_self_attention,
                                residual=cfg.residuals)
        pyr = FeaturePyramid(f1=pyr.f1, f2=feats[2], f3=feats[4],
                             f4=feats[8], f5=feats[16])
    dec = decode(pyr, params)
    maps = []
    for s in _SCALES:
        depth = depth_head(dec[s], params[f"head.scale{s}.w"],
                           params[f"head.scale{s}.b"], cfg.d_max)
        full = upsample_bilinear(depth, h, w)
        maps.append(reshape(full, (n, h, w)))
    return DepthPrediction(scales=tuple(maps))
