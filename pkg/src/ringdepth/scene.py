"""Analytic scenes, ray-cast depth/intensity rendering, depth sparsification.

Scenes are built from closed-form primitives (ground plane, spheres,
axis-aligned boxes) so rendered depth is the exact nearest-intersection
distance — no sampling noise, no meshes. Depth uses the z-depth
convention from :mod:`ringdepth.camera`; pixels with no hit, or a hit
beyond ``d_max``, store 0 (no return). Intensity is single-channel
Lambertian: albedo * max(0, n . light).

All intersection math runs in float64 with a fixed primitive order
(plane, spheres, boxes) and strict nearest-wins updates, so a per-pixel
scalar recomputation reproduces the images bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .camera import CameraRig, make_rig, ray_grid
from .errors import ConfigError

_T_MIN = 1e-6


@dataclass
class Sphere:
    center: np.ndarray  # [3] meters
    radius: float
    albedo: float


@dataclass
class Box:
    lo: np.ndarray  # [3] min corner
    hi: np.ndarray  # [3] max corner
    albedo: float


@dataclass
class Scene:
    ground_height: float = 0.0
    ground_albedo: float = 0.6
    spheres: list = field(default_factory=list)
    boxes: list = field(default_factory=list)
    light_dir: np.ndarray = field(
        default_factory=lambda: np.array([0.3, 0.2, 0.933]))  # toward the light
    seed: int = 0


@dataclass
class SurroundSample:
    """One multi-view training sample.

    ``images`` is [N,1,H,W] intensity in [0,1]; ``gt_depth`` and
    ``sparse_depth`` are [N,H,W] meters with 0 marking pixels without a
    depth return. The sparse map's nonzero set is always a subset of the
    dense map's.
    """

    images: np.ndarray
    gt_depth: np.ndarray
    sparse_depth: np.ndarray
    rig: CameraRig


def intersect_plane(o, d, height):
    """Ray/horizontal-plane hit parameter; +inf where there is none."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (height - o[2]) / d[..., 2]
    return np.where((d[..., 2] != 0) & (t > _T_MIN), t, np.inf)


def intersect_sphere(o, d, center, radius):
    """Nearest ray/sphere hit parameter > t_min; +inf where there is none."""
    oc = o - center
    a = d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]
    b = 2.0 * (d[..., 0] * oc[0] + d[..., 1] * oc[1] + d[..., 2] * oc[2])
    c = oc[0] * oc[0] + oc[1] * oc[1] + oc[2] * oc[2] - radius * radius
    disc = b * b - 4.0 * a * c
    with np.errstate(invalid="ignore"):
        sq = np.sqrt(np.maximum(disc, 0.0))
        t0 = (-b - sq) / (2.0 * a)
        t1 = (-b + sq) / (2.0 * a)
        t = np.where(t0 > _T_MIN, t0, t1)
        return np.where((disc >= 0.0) & (t > _T_MIN), t, np.inf)


def intersect_box(o, d, lo, hi):
    """Slab-test ray/box hit parameter > t_min; +inf where there is none.

    Also returns the per-pixel flag for hits entering from outside (the
    normal then sits on the entry face) versus leaving from inside.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        t_lo = (lo - o) / d
        t_hi = (hi - o) / d
    near = np.minimum(t_lo, t_hi)
    far = np.maximum(t_lo, t_hi)
    tnear = np.max(near, axis=-1)
    tfar = np.min(far, axis=-1)
    with np.errstate(invalid="ignore"):
        entering = tnear > _T_MIN
        t = np.where(entering, tnear, tfar)
        t = np.where((tnear <= tfar) & (t > _T_MIN), t, np.inf)
    return t, entering, near, far


def _box_normal(d, entering, near, far):
    axis = np.where(entering, np.argmax(near, axis=-1), np.argmin(far, axis=-1))
    n = np.zeros(d.shape)
    rows = np.indices(axis.shape, sparse=True)
    sign = np.sign(np.take_along_axis(d, axis[..., None], axis=-1)[..., 0])
    n[(*rows, axis)] = np.where(entering, -sign, sign)
    return n


def render(rig: CameraRig, scene: Scene, d_max: float) -> SurroundSample:
    """Ray-cast every view: nearest-hit z-depth plus Lambertian intensity.

    Hits farther than ``d_max`` (and misses) report depth 0. The returned
    sample carries a dense copy as ``sparse_depth``; apply
    :func:`sparsify` to emulate LiDAR supervision.
    """
    if d_max <= 0:
        raise ConfigError(f"d_max must be positive, got {d_max}")
    n, h, w = rig.n_views, rig.height, rig.width
    images = np.zeros((n, 1, h, w), dtype=np.float32)
    gt = np.zeros((n, h, w), dtype=np.float32)
    light = np.asarray(scene.light_dir, dtype=np.float64)
    light = light / math.sqrt(float(light[0] ** 2 + light[1] ** 2 + light[2] ** 2))

    for j in range(n):
        o, d = ray_grid(rig, j)
        t_best = np.full((h, w), np.inf)
        normal = np.zeros((h, w, 3))
        albedo = np.zeros((h, w))

        def claim(t, nrm, alb):
            win = t < t_best
            t_best[win] = t[win]
            normal[win] = nrm[win] if nrm.ndim == 3 else nrm
            albedo[win] = alb

        t = intersect_plane(o, d, scene.ground_height)
        claim(t, np.array([0.0, 0.0, 1.0]), scene.ground_albedo)
        for s in scene.spheres:
            center = np.asarray(s.center, dtype=np.float64)
            t = intersect_sphere(o, d, center, s.radius)
            with np.errstate(invalid="ignore"):
                p = o + t[..., None] * d
                nrm = (p - center) / s.radius
            claim(t, nrm, s.albedo)
        for bx in scene.boxes:
            lo = np.asarray(bx.lo, dtype=np.float64)
            hi = np.asarray(bx.hi, dtype=np.float64)
            t, entering, near, far = intersect_box(o, d, lo, hi)
            claim(t, _box_normal(d, entering, near, far), bx.albedo)

        hit = np.isfinite(t_best)
        ndotl = (normal[..., 0] * light[0] + normal[..., 1] * light[1]
                 + normal[..., 2] * light[2])
        shade = albedo * np.maximum(0.0, ndotl)
        images[j, 0] = np.where(hit, np.clip(shade, 0.0, 1.0), 0.0).astype(np.float32)
        gt[j] = np.where(hit & (t_best <= d_max), t_best, 0.0).astype(np.float32)

    return SurroundSample(images=images, gt_depth=gt,
                          sparse_depth=gt.copy(), rig=rig)


def sparsify(gt_depth: np.ndarray, keep_fraction: float, seed: int) -> np.ndarray:
    """Keep exactly floor(keep_fraction * n_valid) valid pixels, zero the rest."""
    if not 0.0 < keep_fraction <= 1.0:
        raise ConfigError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")
    if keep_fraction == 1.0:
        return gt_depth.copy()
    flat = gt_depth.reshape(-1)
    valid = np.flatnonzero(flat > 0)
    k = int(math.floor(keep_fraction * valid.size))
    chosen = np.random.default_rng(seed).choice(valid.size, size=k, replace=False)
    out = np.zeros_like(flat)
    keep = valid[chosen]
    out[keep] = flat[keep]
    return out.reshape(gt_depth.shape)


def random_scene(seed: int, world_radius_m: float = 40.0,
                 boxes: bool = True) -> Scene:
    """Draw a plausible scene: ground plane, 3-6 spheres, 0-2 boxes.

    Primitives keep a 6 m standoff from the rig center so no camera ever
    starts inside one.
    """
    rng = np.random.default_rng(seed)
    scene = Scene(ground_height=0.0,
                  ground_albedo=float(rng.uniform(0.4, 0.8)),
                  spheres=[], boxes=[], seed=seed)
    for _ in range(int(rng.integers(3, 7))):
        dist = rng.uniform(6.0, 0.8 * world_radius_m)
        az = rng.uniform(0.0, 2.0 * math.pi)
        radius = float(rng.uniform(1.0, 5.0))
        center = np.array([dist * math.cos(az), dist * math.sin(az),
                           float(rng.uniform(0.8, 1.5)) * radius])
        scene.spheres.append(Sphere(center=center, radius=radius,
                                    albedo=float(rng.uniform(0.3, 1.0))))
    n_boxes = int(rng.integers(0, 3)) if boxes else 0
    for _ in range(n_boxes):
        dist = rng.uniform(7.0, 0.8 * world_radius_m)
        az = rng.uniform(0.0, 2.0 * math.pi)
        cx, cy = dist * math.cos(az), dist * math.sin(az)
        half = rng.uniform(0.8, 4.0, size=3)
        lo = np.array([cx - half[0], cy - half[1], 0.0])
        hi = np.array([cx + half[0], cy + half[1], 2.0 * half[2]])
        scene.boxes.append(Box(lo=lo, hi=hi, albedo=float(rng.uniform(0.3, 1.0))))
    az = rng.uniform(0.0, 2.0 * math.pi)
    up = rng.uniform(0.5, 0.95)
    horiz = math.sqrt(1.0 - up * up)
    scene.light_dir = np.array([horiz * math.cos(az), horiz * math.sin(az), up])
    return scene


def rotate_scene(scene: Scene, angle_deg: float) -> Scene:
    """Rotate sphere centers and the light about the vertical rig axis.

    Axis-aligned boxes cannot be rotated off-axis, so scenes with boxes
    are rejected; the ground plane is rotation-invariant.
    """
    if scene.boxes:
        raise ConfigError("cannot rotate a scene containing axis-aligned boxes")
    a = math.radians(angle_deg)
    rot = np.array([[math.cos(a), -math.sin(a), 0.0],
                    [math.sin(a), math.cos(a), 0.0],
                    [0.0, 0.0, 1.0]])
    spheres = [replace(s, center=rot @ np.asarray(s.center, dtype=np.float64))
               for s in scene.spheres]
    return replace(scene, spheres=spheres,
                   light_dir=rot @ np.asarray(scene.light_dir, dtype=np.float64))


def generate_sample(seed: int, n_views: int = 6, width: int = 64,
                    height: int = 48, d_max: float = 80.0,
                    hfov_deg: float = 70.0, rig_radius_m: float = 0.5,
                    keep_fraction: float = 0.3) -> SurroundSample:
    """Scene + rig + render + sparsify in one deterministic call."""
    scene = random_scene(seed)
    rig = make_rig(n_views=n_views, hfov_deg=hfov_deg, width=width,
                   height=height, rig_radius_m=rig_radius_m)
    sample = render(rig, scene, d_max)
    sample.sparse_depth = sparsify(sample.gt_depth, keep_fraction, seed)
    return sample
