"""Shared scene and camera builders for the test suite."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from semsplat import Camera, GaussianScene
from semsplat.scene import logistic


def random_quaternions(rng, n):
    q = rng.standard_normal((n, 4))
    return (q / np.linalg.norm(q, axis=1, keepdims=True)).astype(np.float32)


def random_scene(rng, n, sh_degree=0, z_range=(1.5, 4.5), lateral=0.9,
                 scale_range=(0.02, 0.12), opacity_logits=(-2.0, 4.0)):
    """Random Gaussians inside the frustum of `frontal_camera`."""
    z = rng.uniform(*z_range, size=n)
    x = rng.uniform(-lateral, lateral, size=n) * z * 0.45
    y = rng.uniform(-lateral, lateral, size=n) * z * 0.45
    positions = np.stack([x, y, z], axis=1).astype(np.float32)
    # draw pre-activation values in float32 so scenes sit in the PLY-representable range
    log_scales = rng.uniform(np.log(scale_range[0]), np.log(scale_range[1]),
                             size=(n, 3)).astype(np.float32)
    scales = np.exp(log_scales.astype(np.float64)).astype(np.float32)
    opacities = logistic(
        rng.uniform(*opacity_logits, size=n).astype(np.float32)).astype(np.float32)
    basis = (sh_degree + 1) ** 2
    sh = rng.uniform(-0.7, 0.7, size=(n, 3, basis)).astype(np.float32)
    return GaussianScene(positions, random_quaternions(rng, n), scales, opacities, sh)


def frontal_camera(width=56, height=40, f=48.0, rng=None):
    """Camera near the origin looking down +z, optionally slightly rotated."""
    E = np.eye(4)
    if rng is not None:
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        angle = rng.uniform(-0.12, 0.12)
        w = np.cos(angle / 2.0)
        xyz = axis * np.sin(angle / 2.0)
        from oracles import quat_to_rotmat
        E[:3, :3] = quat_to_rotmat([w, *xyz])
        E[:3, 3] = rng.uniform(-0.05, 0.05, size=3)
    return Camera(width=width, height=height, fx=f, fy=f,
                  cx=width / 2.0, cy=height / 2.0, world_to_camera=E)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
