"""Spatial primitives on NCHW tensors: convolution and bilinear resize.

Both ops participate in the tape like the elementwise primitives, and
both are implemented as matrix contractions so the heavy lifting stays
inside BLAS.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError
from .tensor import GradTape, Tensor, _active_tape, _check_finite, _unbroadcast


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None,
           stride: int = 1, pad: Optional[int] = None) -> Tensor:
    """2-D cross-correlation with same padding.

    ``x`` is ``[B, C_in, H, W]``, ``w`` is ``[C_out, C_in, k, k]`` with odd
    ``k``, ``b`` is ``[C_out]``. Only same mode is supported: ``pad``
    defaults to ``(k - 1) // 2`` per side and rejects anything else, so
    the output is ``[B, C_out, ceil(H / stride), ceil(W / stride)]``.
    Only strides 1 and 2 are supported.
    """
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise DimensionError(
            f"conv2d expects x [B,C,H,W] and w [O,C,k,k], got {x.data.shape} "
            f"and {w.data.shape}")
    if w.data.shape[2] != w.data.shape[3] or w.data.shape[2] % 2 != 1:
        raise DimensionError(f"conv2d kernel must be square and odd, got {w.data.shape}")
    if pad is not None and pad != (w.data.shape[2] - 1) // 2:
        raise DimensionError(
            f"conv2d only supports same padding (k-1)/2 = "
            f"{(w.data.shape[2] - 1) // 2}, got pad={pad}")
    if x.data.shape[1] != w.data.shape[1]:
        raise DimensionError(
            f"conv2d channel mismatch: x has {x.data.shape[1]}, w expects "
            f"{w.data.shape[1]}")
    if stride not in (1, 2):
        raise DimensionError(f"conv2d stride must be 1 or 2, got {stride}")
    if b is not None and b.data.shape != (w.data.shape[0],):
        raise DimensionError(
            f"conv2d bias shape {b.data.shape} does not match {w.data.shape[0]} filters")

    B, C, H, W = x.data.shape
    O, _, k, _ = w.data.shape
    p = (k - 1) // 2

    if p:
        xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)))
    else:
        xp = x.data
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    if stride > 1:
        win = win[:, :, ::stride, ::stride]
    Ho, Wo = win.shape[2], win.shape[3]

    # [B,C,Ho,Wo,k,k] x [O,C,k,k] -> [B,Ho,Wo,O]; the contraction is one GEMM.
    out_data = np.tensordot(win, w.data, axes=([1, 4, 5], [1, 2, 3]))
    if b is not None:
        out_data += b.data
    out_data = np.ascontiguousarray(out_data.transpose(0, 3, 1, 2))
    _check_finite(out_data, "conv2d")

    req = x.requires_grad or w.requires_grad or (b is not None and b.requires_grad)
    out = Tensor._wrap(out_data, req, "conv2d", check=False)
    tape = _active_tape()
    if tape is not None and req:
        nx, nw = x.requires_grad, w.requires_grad
        nb = b is not None and b.requires_grad
        w_data = w.data
        pad_shape = xp.shape

        def backward_fn(g):
            gx = gw = gb = None
            if nb:
                gb = g.sum(axis=(0, 2, 3))
            if nw:
                gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
            if nx:
                # Spread each output gradient over its k*k support.
                gci = np.tensordot(g, w_data, axes=([1], [0]))  # [B,Ho,Wo,C,k,k]
                gxp = np.zeros(pad_shape, dtype=g.dtype)
                hi = (Ho - 1) * stride + 1
                wi = (Wo - 1) * stride + 1
                for ki in range(k):
                    for kj in range(k):
                        gxp[:, :, ki:ki + hi:stride, kj:kj + wi:stride] += \
                            gci[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
                gx = gxp[:, :, p:p + H, p:p + W] if p else gxp
            inputs_grads = [gx, gw]
            if b is not None:
                inputs_grads.append(gb)
            return tuple(inputs_grads)

        inputs = (x, w) if b is None else (x, w, b)
        tape.record(out, inputs, backward_fn)
    return out


def _interp_matrix(n_in: int, n_out: int, dtype) -> np.ndarray:
    """Row-stochastic matrix mapping ``n_in`` samples to ``n_out``.

    Sample positions follow the half-pixel convention: output center
    ``o + 0.5`` maps to input coordinate ``(o + 0.5) * n_in / n_out - 0.5``,
    clamped to the valid range (edge replication).
    """
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    m = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1.0 - frac)
    np.add.at(m, (rows, i1), frac)
    return m.astype(dtype, copy=False)


def upsample_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resize of ``[B, C, H, W]`` to ``[B, C, out_h, out_w]``.

    Separable: the resize is two fixed interpolation matrices applied to
    the height and width axes, so the adjoint used in backward is exactly
    their transpose.
    """
    if x.data.ndim != 4:
        raise DimensionError(f"upsample_bilinear expects [B,C,H,W], got {x.data.shape}")
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"invalid target extents ({out_h}, {out_w})")
    B, C, H, W = x.data.shape
    if out_h < H or out_w < W:
        raise DimensionError(
            f"upsample_bilinear only enlarges: ({H}, {W}) -> ({out_h}, {out_w})")
    rh = _interp_matrix(H, out_h, x.data.dtype)
    rw = _interp_matrix(W, out_w, x.data.dtype)

    out_data = np.matmul(rh, np.matmul(x.data, rw.T))
    out = Tensor._wrap(out_data, x.requires_grad, "upsample_bilinear", check=False)
    tape = _active_tape()
    if tape is not None and x.requires_grad:
        def backward_fn(g):
            return (np.matmul(rh.T, np.matmul(g, rw)),)

        tape.record(out, (x,), backward_fn)
    return out
