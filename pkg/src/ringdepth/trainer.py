"""Training loop, evaluation, and prediction over dataset directories.

Training is strictly deterministic for a fixed (seed, config, data):
sample order, view permutations, gradient accumulation order, and
parameter updates are all derived from the run seed with a fixed
schedule, so two runs produce bitwise-identical logs and checkpoints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .dataset import read_dataset
from .errors import ConfigError, FormatError
from .io import load_checkpoint, save_checkpoint, write_pgm16, write_rdt
from .losses import LossConfig, total_loss
from .metrics import (MetricsReport, _empty_report, aggregate, compute_metrics,
                      format_table, report_json)
from .model import ModelConfig, forward, init_params, parameter_shapes
from .optim import OptimState, adam_step
from .tensor import GradTape, Tensor, scale


@dataclass
class RunConfig:
    seed: int = 0
    epochs: int = 1
    batch_size: int = 2
    lr: float = 1e-4
    lambda_smooth: float = 0.01
    input_mode: str = "surround"  # or random_views: shuffle the ring per step
    data_dir: str = ""
    out_dir: str = "run"
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.input_mode not in ("surround", "random_views"):
            raise ConfigError(f"input_mode must be surround or random_views, "
                              f"got {self.input_mode!r}")

    def to_dict(self) -> dict:
        return {"seed": self.seed, "epochs": self.epochs,
                "batch_size": self.batch_size, "lr": self.lr,
                "lambda_smooth": self.lambda_smooth,
                "input_mode": self.input_mode, "data_dir": self.data_dir,
                "out_dir": self.out_dir, "model": self.model.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        m = d.pop("model", None)
        model = ModelConfig.from_dict(m) if m else ModelConfig()
        return cls(model=model, **d)

    @classmethod
    def from_json_file(cls, path: Union[str, Path]) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as e:
            raise FormatError(f"{path}: cannot read run config ({e})") from e


@dataclass
class TrainResult:
    params: dict
    state: OptimState
    log: list  # (step, l_depth, l_smooth, total) rows
    ckpt_path: Path


def _write_log(path: Path, rows) -> None:
    lines = ["step,l_depth,l_smooth,total"]
    for step, ld, ls, tot in rows:
        lines.append(f"{step},{ld!r},{ls!r},{tot!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def train(cfg: RunConfig) -> TrainResult:
    """Run the full optimization; writes a checkpoint per epoch plus a CSV log."""
    samples = read_dataset(cfg.data_dir)
    n_views = samples[0].images.shape[0]
    if n_views != cfg.model.n_views:
        raise ConfigError(f"dataset has {n_views} views per sample, model "
                          f"expects {cfg.model.n_views}")

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "ckpt.rdck"

    params = init_params(cfg.model, seed=cfg.seed)
    state = OptimState(lr=cfg.lr)
    loss_cfg = LossConfig(lambda_smooth=cfg.lambda_smooth)
    rng = np.random.default_rng(cfg.seed)

    log: list[tuple] = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(samples))
        for lo in range(0, len(order), cfg.batch_size):
            batch = order[lo:lo + cfg.batch_size]
            for p in params.values():
                p.grad = None
            ld = ls = tot = 0.0
            for idx in batch:
                s = samples[int(idx)]
                images, sparse = s.images, s.sparse_depth
                if cfg.input_mode == "random_views":
                    perm = rng.permutation(n_views)
                    images, sparse = images[perm], sparse[perm]
                with GradTape() as tape:
                    pred = forward(Tensor(images), params, cfg.model)
                    breakdown = total_loss(pred.scales, sparse, images, loss_cfg)
                    share = scale(breakdown.total, 1.0 / len(batch))
                tape.backward(share)
                ld += breakdown.depth_term
                ls += breakdown.smooth_term
                tot += float(breakdown.total.data)
            step += 1
            log.append((step, ld / len(batch), ls / len(batch), tot / len(batch)))
            grads = {}
            for name, p in params.items():
                if p.grad is None:
                    raise ConfigError(f"parameter {name!r} received no gradient; "
                                      "registry and forward wiring disagree")
                grads[name] = p.grad
            adam_step(params, grads, state)
        meta = {"model": cfg.model.to_dict(), "seed": cfg.seed,
                "epoch": epoch, "step": step}
        save_checkpoint(ckpt_path, params, meta)
        _write_log(out_dir / "train_log.csv", log)
    return TrainResult(params=params, state=state, log=log, ckpt_path=ckpt_path)


def load_model(ckpt_path: Union[str, Path]) -> tuple[dict, ModelConfig, dict]:
    """Checkpoint -> (params registry, model config, raw meta)."""
    arrays, meta = load_checkpoint(ckpt_path)
    if "model" not in meta:
        raise FormatError(f"{ckpt_path}: checkpoint meta lacks a model entry")
    cfg = ModelConfig.from_dict(meta["model"])
    missing = sorted(set(parameter_shapes(cfg)) - set(arrays))
    if missing:
        raise FormatError(f"{ckpt_path}: missing checkpoint entries: "
                          + ", ".join(missing))
    params = {name: Tensor(arr) for name, arr in arrays.items()}
    return params, cfg, meta


def evaluate(ckpt_path: Union[str, Path], data_dir: Union[str, Path],
             median_scaling: bool = False, d_min: float = 1e-3,
             out_path: Optional[Union[str, Path]] = None,
             ) -> tuple[list, MetricsReport]:
    """Score the final-scale prediction against dense gt, frame = camera image.

    Returns per-frame reports and the per-frame-mean aggregate (an
    n_pixels == 0 report when no frame had valid ground truth). Writes
    the JSON report to ``out_path`` when given.
    """
    params, cfg, _ = load_model(ckpt_path)
    samples = read_dataset(data_dir)
    frames: list[MetricsReport] = []
    for s in samples:
        if s.images.shape[0] != cfg.n_views:
            raise ConfigError(f"dataset has {s.images.shape[0]} views, "
                              f"checkpoint model expects {cfg.n_views}")
        pred = forward(Tensor(s.images), params, cfg).final.data
        for j in range(cfg.n_views):
            frames.append(compute_metrics(pred[j], s.gt_depth[j], d_min=d_min,
                                          d_max=cfg.d_max,
                                          median_scaling=median_scaling))
    if any(f.n_pixels > 0 for f in frames):
        agg = aggregate(frames)
    else:
        agg = _empty_report()
    if out_path is not None:
        Path(out_path).write_text(report_json(frames, agg), encoding="utf-8")
    return frames, agg


def predict(ckpt_path: Union[str, Path], data_dir: Union[str, Path],
            out_dir: Union[str, Path]) -> list:
    """Write per-view final depth maps as tensor files plus graymap previews."""
    params, cfg, _ = load_model(ckpt_path)
    samples = read_dataset(data_dir)
    out_dir = Path(out_dir)
    written = []
    for i, s in enumerate(samples):
        pred = forward(Tensor(s.images), params, cfg).final.data
        sdir = out_dir / f"sample_{i:05d}"
        sdir.mkdir(parents=True, exist_ok=True)
        for j in range(cfg.n_views):
            base = sdir / f"depth_view{j}"
            write_rdt(base.with_suffix(".rdt"), pred[j])
            write_pgm16(base.with_suffix(".pgm"), pred[j], cfg.d_max)
            written.append(base.with_suffix(".rdt"))
    return written
