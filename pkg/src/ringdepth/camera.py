"""Pinhole cameras arranged on an outward-facing ring.

Camera frame convention: x right, y down, z forward (optical axis).
World frame: z up. Extrinsics are camera-to-world rigid transforms; the
depth stored in depth maps is z-depth — distance along the optical axis,
not Euclidean ray length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError


@dataclass
class CameraRig:
    """Calibrated N-camera ring.

    ``intrinsics[j]`` is the 3x3 pinhole matrix of view j;
    ``extrinsics[j]`` its 4x4 camera-to-world pose. Ring order is yaw
    order: view j+1 (mod n_views) is the next camera counterclockwise.
    """

    n_views: int
    width: int
    height: int
    hfov_deg: float
    intrinsics: np.ndarray = field(repr=False)  # [N,3,3]
    extrinsics: np.ndarray = field(repr=False)  # [N,4,4]

    def __post_init__(self):
        if self.n_views < 2:
            raise ConfigError(f"a rig needs at least 2 views, got {self.n_views}")
        self.intrinsics = np.asarray(self.intrinsics, dtype=np.float64)
        self.extrinsics = np.asarray(self.extrinsics, dtype=np.float64)
        if self.intrinsics.shape != (self.n_views, 3, 3):
            raise ConfigError(f"intrinsics shape {self.intrinsics.shape} "
                              f"!= ({self.n_views}, 3, 3)")
        if self.extrinsics.shape != (self.n_views, 4, 4):
            raise ConfigError(f"extrinsics shape {self.extrinsics.shape} "
                              f"!= ({self.n_views}, 4, 4)")
        for j in range(self.n_views):
            r = self.extrinsics[j, :3, :3]
            if not np.allclose(r @ r.T, np.eye(3), atol=1e-6):
                raise ConfigError(f"extrinsic rotation of view {j} is not orthonormal")


def make_rig(n_views: int, hfov_deg: float = 70.0, width: int = 64,
             height: int = 48, rig_radius_m: float = 0.5,
             rig_height_m: float = 1.5) -> CameraRig:
    """Place ``n_views`` outward-facing cameras evenly on a circle.

    Yaw spacing is 360/n_views degrees; focal length follows from the
    horizontal field of view as fx = (width/2) / tan(hfov/2), fy = fx,
    principal point at the image center.
    """
    if n_views < 2:
        raise ConfigError(f"n_views must be >= 2, got {n_views}")
    if not 10.0 <= hfov_deg <= 170.0:
        raise ConfigError(f"hfov_deg must lie in [10, 170], got {hfov_deg}")
    if width < 2 or height < 2:
        raise ConfigError(f"image extents too small: {width}x{height}")
    if rig_radius_m < 0:
        raise ConfigError(f"rig_radius_m must be >= 0, got {rig_radius_m}")

    fx = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
    k = np.array([[fx, 0.0, width / 2.0],
                  [0.0, fx, height / 2.0],
                  [0.0, 0.0, 1.0]])
    intrinsics = np.repeat(k[None], n_views, axis=0)

    extrinsics = np.zeros((n_views, 4, 4))
    for j in range(n_views):
        yaw = 2.0 * math.pi * j / n_views
        forward = np.array([math.cos(yaw), math.sin(yaw), 0.0])
        down = np.array([0.0, 0.0, -1.0])
        right = np.cross(down, forward)
        pose = np.eye(4)
        pose[:3, 0] = right
        pose[:3, 1] = down
        pose[:3, 2] = forward
        pose[:3, 3] = rig_radius_m * forward + np.array([0.0, 0.0, rig_height_m])
        extrinsics[j] = pose
    return CameraRig(n_views=n_views, width=width, height=height,
                     hfov_deg=hfov_deg, intrinsics=intrinsics,
                     extrinsics=extrinsics)


def project(point_cam, intrinsics: np.ndarray) -> tuple[float, float, float]:
    """Project a camera-frame point to ``(u, v, depth)``; depth is z."""
    x, y, z = (float(c) for c in point_cam)
    if z <= 0:
        raise DomainError(f"point behind camera: z = {z}")
    k = np.asarray(intrinsics, dtype=np.float64)
    u = k[0, 0] * x / z + k[0, 2]
    v = k[1, 1] * y / z + k[1, 2]
    return (u, v, z)


def unproject(u: float, v: float, depth: float,
              intrinsics: np.ndarray) -> np.ndarray:
    """Inverse of :func:`project`: pixel + z-depth back to a camera-frame point."""
    if depth <= 0:
        raise DomainError(f"depth must be positive, got {depth}")
    k = np.asarray(intrinsics, dtype=np.float64)
    x = (u - k[0, 2]) / k[0, 0] * depth
    y = (v - k[1, 2]) / k[1, 1] * depth
    return np.array([x, y, depth])


def ray_grid(rig: CameraRig, view: int) -> tuple[np.ndarray, np.ndarray]:
    """World-frame ray origins and directions for every pixel of one view.

    Returns ``(origin [3], dirs [H,W,3])``. Directions are scaled so their
    camera-frame z component is 1; the ray parameter t at a hit therefore
    equals the z-depth directly. Pixel (v, u) casts through integer image
    coordinates (u, v), so the ray of the principal-point pixel runs
    exactly along the optical axis.
    """
    k = rig.intrinsics[view]
    pose = rig.extrinsics[view]
    u = np.arange(rig.width, dtype=np.float64)
    v = np.arange(rig.height, dtype=np.float64)
    xs = (u - k[0, 2]) / k[0, 0]
    ys = (v - k[1, 2]) / k[1, 1]
    dirs_cam = np.stack([
        np.broadcast_to(xs[None, :], (rig.height, rig.width)),
        np.broadcast_to(ys[:, None], (rig.height, rig.width)),
        np.ones((rig.height, rig.width)),
    ], axis=-1)
    dirs_world = dirs_cam @ pose[:3, :3].T
    return pose[:3, 3].copy(), dirs_world
