"""Dataset directory layout: one subdirectory per sample plus a manifest.

Layout::

    <dir>/manifest.txt                  key=value, UTF-8
    <dir>/sample_00000/images.rdt       [N,1,H,W]
    <dir>/sample_00000/gt_depth.rdt     [N,H,W]
    <dir>/sample_00000/sparse_depth.rdt [N,H,W]
    ...

The manifest records the shared camera rig (all samples of a dataset are
captured by one rig): n_views, width, height, hfov_deg, d_max, and one
``pose{j}`` line per view with the 16 row-major floats of the
camera-to-world transform. Floats are written with ``repr`` so the
round-trip is exact.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .camera import CameraRig, make_rig
from .errors import ConfigError, FormatError
from .io import read_rdt, write_rdt
from .scene import SurroundSample

_TENSOR_FILES = ("images.rdt", "gt_depth.rdt", "sparse_depth.rdt")


def _rigs_equal(a: CameraRig, b: CameraRig) -> bool:
    return (a.n_views == b.n_views and a.width == b.width
            and a.height == b.height and a.hfov_deg == b.hfov_deg
            and np.array_equal(a.extrinsics, b.extrinsics)
            and np.array_equal(a.intrinsics, b.intrinsics))


def write_manifest(path: Union[str, Path], rig: CameraRig, d_max: float) -> None:
    lines = [f"n_views={rig.n_views}", f"width={rig.width}",
             f"height={rig.height}", f"hfov_deg={rig.hfov_deg!r}",
             f"d_max={float(d_max)!r}"]
    for j in range(rig.n_views):
        flat = " ".join(repr(float(v)) for v in rig.extrinsics[j].reshape(-1))
        lines.append(f"pose{j}={flat}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: Union[str, Path]) -> tuple[CameraRig, float]:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"{path}: manifest missing")
    fields: dict[str, str] = {}
    for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{ln}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        fields[key] = value
    try:
        n_views = int(fields["n_views"])
        width = int(fields["width"])
        height = int(fields["height"])
        hfov_deg = float(fields["hfov_deg"])
        d_max = float(fields["d_max"])
    except KeyError as e:
        raise FormatError(f"{path}: missing manifest key {e}") from e
    except ValueError as e:
        raise FormatError(f"{path}: malformed manifest value ({e})") from e
    rig = make_rig(n_views=n_views, hfov_deg=hfov_deg, width=width, height=height)
    extrinsics = np.zeros((n_views, 4, 4))
    for j in range(n_views):
        key = f"pose{j}"
        if key not in fields:
            raise FormatError(f"{path}: missing {key}")
        vals = fields[key].split()
        if len(vals) != 16:
            raise FormatError(f"{path}: {key} has {len(vals)} floats, expected 16")
        extrinsics[j] = np.array([float(v) for v in vals]).reshape(4, 4)
    rig.extrinsics = extrinsics
    return rig, d_max


def write_dataset(samples: Sequence[SurroundSample], out_dir: Union[str, Path],
                  d_max: float = 80.0) -> None:
    """Write samples under ``out_dir`` (created if needed) plus the manifest."""
    samples = list(samples)
    if not samples:
        raise ConfigError("cannot write an empty dataset")
    rig = samples[0].rig
    for i, s in enumerate(samples):
        if not _rigs_equal(rig, s.rig):
            raise ConfigError(f"sample {i} was captured by a different rig; "
                              "a dataset shares one manifest")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(out_dir / "manifest.txt", rig, d_max)
    for i, s in enumerate(samples):
        sdir = out_dir / f"sample_{i:05d}"
        sdir.mkdir(exist_ok=True)
        write_rdt(sdir / "images.rdt", s.images)
        write_rdt(sdir / "gt_depth.rdt", s.gt_depth)
        write_rdt(sdir / "sparse_depth.rdt", s.sparse_depth)


def read_dataset(data_dir: Union[str, Path]) -> list[SurroundSample]:
    """Read every ``sample_*`` directory; validates extents against the manifest."""
    data_dir = Path(data_dir)
    rig, _ = read_manifest(data_dir / "manifest.txt")
    sample_dirs = sorted(p for p in data_dir.iterdir()
                         if p.is_dir() and p.name.startswith("sample_"))
    if not sample_dirs:
        raise FormatError(f"{data_dir}: no sample_* directories")
    samples = []
    for sdir in sample_dirs:
        arrays = {}
        for fname in _TENSOR_FILES:
            fpath = sdir / fname
            if not fpath.is_file():
                raise FormatError(f"{fpath}: tensor file missing")
            arrays[fname] = read_rdt(fpath)
        images = arrays["images.rdt"]
        gt = arrays["gt_depth.rdt"]
        sparse = arrays["sparse_depth.rdt"]
        if images.ndim != 4 or images.shape[0] != rig.n_views \
                or images.shape[2] != rig.height or images.shape[3] != rig.width:
            raise FormatError(
                f"{sdir / 'images.rdt'}: extents {images.shape} disagree with "
                f"manifest ({rig.n_views} views, {rig.height}x{rig.width})")
        for name, arr in (("gt_depth.rdt", gt), ("sparse_depth.rdt", sparse)):
            if arr.shape != (rig.n_views, rig.height, rig.width):
                raise FormatError(
                    f"{sdir / name}: extents {arr.shape} disagree with manifest "
                    f"({rig.n_views}, {rig.height}, {rig.width})")
        samples.append(SurroundSample(images=images, gt_depth=gt,
                                      sparse_depth=sparse, rig=rig))
    return samples


def dataset_d_max(data_dir: Union[str, Path]) -> float:
    """Convenience accessor for the manifest's d_max."""
    _, d_max = read_manifest(Path(data_dir) / "manifest.txt")
    return d_max
