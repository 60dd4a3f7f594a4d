"""Finite-difference verification of reverse-mode gradients.

:func:`gradcheck` compares analytic gradients of a scalar-valued tensor
function against central differences, always at 64-bit precision.
:func:`micro_model_suite` runs the check end-to-end through a tiny
surround-view model and the full training loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import GraphError
from .tensor import GradTape, Tensor


@dataclass
class GradCheckReport:
    """Outcome of one finite-difference comparison.

    ``max_rel_err`` is the worst relative error seen across all checked
    coordinates, where the error of one coordinate is
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.
    """

    max_rel_err: float
    tol: float
    passed: bool
    n_evals: int
    per_input: list = field(default_factory=list)
    worst_input: int = -1
    worst_coord: tuple = ()

    def __str__(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"gradcheck {verdict}: max rel err {self.max_rel_err:.3e} "
                f"(tol {self.tol:.1e}, {self.n_evals} evaluations)")


def gradcheck(f: Callable[..., Tensor], inputs: Sequence,
              eps: float = 1e-4, tol: float = 1e-4,
              max_coords: Optional[int] = None, seed: int = 0) -> GradCheckReport:
    """Check analytic gradients of ``f`` against central differences.

    ``f`` must map the given tensors to a scalar. Inputs are copied to
    float64 (the whole graph then runs at 64-bit) and marked
    ``requires_grad``. With ``max_coords`` set, at most that many
    coordinates per input are probed, drawn deterministically from
    ``seed``; otherwise every coordinate is probed.
    """
    ts = []
    for x in inputs:
        arr = x.data if isinstance(x, Tensor) else np.asarray(x)
        ts.append(Tensor(arr.astype(np.float64), requires_grad=True))

    with GradTape() as tape:
        out = f(*ts)
    if not isinstance(out, Tensor) or out.data.shape != ():
        raise GraphError("gradcheck function must return a scalar Tensor")
    tape.backward(out)
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data)
                for t in ts]

    rng = np.random.default_rng(seed)
    per_input: list[float] = []
    worst_input, worst_coord, worst = -1, (), -1.0
    n_evals = 0
    for i, t in enumerate(ts):
        n = t.data.size
        if max_coords is None or max_coords >= n:
            coords = range(n)
        else:
            coords = np.sort(rng.choice(n, size=max_coords, replace=False))
        flat = t.data.reshape(-1)
        a_flat = np.asarray(analytic[i]).reshape(-1)
        m = 0.0
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            f_plus = float(f(*ts).data)
            flat[c] = orig - eps
            f_minus = float(f(*ts).data)
            flat[c] = orig
            n_evals += 2
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = float(a_flat[c])
            rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if rel > m:
                m = rel
                if rel > worst:
                    worst = rel
                    worst_input = i
                    worst_coord = tuple(np.unravel_index(int(c), t.data.shape))
        per_input.append(m)

    max_rel = max(per_input) if per_input else 0.0
    return GradCheckReport(max_rel_err=max_rel, tol=tol, passed=max_rel < tol,
                           n_evals=n_evals, per_input=per_input,
                           worst_input=worst_input, worst_coord=worst_coord)


def micro_model_suite(coords_per_param: int = 4, seed: int = 0,
                      tol: float = 1e-4) -> GradCheckReport:
    """End-to-end gradient check through a tiny surround-view model.

    Builds a 16x16, 3-view model (8 feature channels, 2 attention
    alternations) at 64-bit, renders one procedural sample, and verifies
    d(total_loss)/d(param) for every parameter tensor against central
    differences at ``coords_per_param`` sampled coordinates each.
    """
    from .losses import LossConfig, total_loss
    from .model import ModelConfig, forward, init_params
    from .scene import generate_sample

    cfg = ModelConfig(n_views=3, c_f=8, z_alternations=2, n_heads=2, d_max=80.0)
    params = init_params(cfg, seed=seed, dtype=np.float64)
    sample = generate_sample(seed=seed + 1, n_views=cfg.n_views,
                             width=16, height=16, d_max=cfg.d_max,
                             hfov_deg=130.0)
    images = sample.images.astype(np.float64)
    gt = sample.sparse_depth.astype(np.float64)
    loss_cfg = LossConfig(lambda_smooth=0.01)

    names = sorted(params)

    def f(*tensors: Tensor) -> Tensor:
        p = dict(zip(names, tensors))
        pred = forward(Tensor(images), p, cfg)
        return total_loss(pred.scales, Tensor(gt), Tensor(images), loss_cfg).total

    return gradcheck(f, [params[k] for k in names], eps=1e-4, tol=tol,
                     max_coords=coords_per_param, seed=seed)
