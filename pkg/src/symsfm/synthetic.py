"""Seeded ground-truth scene generator.

Produces mirrored shapes, uniformly random orthographic cameras, optional
axis endpoint pairs, Gaussian annotation noise and occlusion masks that honor
the visible-keypoint admission rule. The oracle source for the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigInvalid
from .geometry import CameraPose, KeypointImage, Structure3D
from .multiview import MIN_VISIBLE_KEYPOINTS
from .single_view import ManhattanSpec

# Reject cameras whose viewing direction comes this close to a slope
# degeneracy (a zero component) when axis endpoints are requested.
DEGENERACY_MARGIN = 1e-3


@dataclass(frozen=True)
class SceneConfig:
    n_images: int
    n_pairs: int
    noise_sigma: float = 0.0       # fraction of the shape diameter
    occlusion_rate: float = 0.0
    seed: int = 0
    manhattan: bool = False

    def __post_init__(self):
        if self.n_images < 1:
            raise ConfigInvalid("need at least one image")
        if self.n_pairs < 1:
            raise ConfigInvalid("need at least one keypoint pair")
        if self.manhattan and self.n_pairs < 4:
            raise ConfigInvalid("axis endpoints need at least 4 pairs")
        if self.noise_sigma < 0:
            raise ConfigInvalid("noise sigma must be nonnegative")
        if not 0 <= self.occlusion_rate < 1:
            raise ConfigInvalid("occlusion rate must lie in [0, 1)")
        if self.occlusion_rate > 0 and 2 * self.n_pairs < MIN_VISIBLE_KEYPOINTS:
            raise ConfigInvalid(
                "occlusion needs at least "
                f"{MIN_VISIBLE_KEYPOINTS} keypoints per image"
            )


class Scene(NamedTuple):
    structure: Structure3D
    poses: list
    images: list
    manhattan: ManhattanSpec | None


def random_rotation(rng):
    """Uniform random rotation via a normalized quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def shape_diameter(structure):
    """Largest pairwise distance over all 2P points."""
    pts = structure.full.T
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=2)).max())


def _draw_shape(rng, cfg):
    left = np.empty((3, cfg.n_pairs))
    # x bounded away from 0 so the symmetry-direction scale never degenerates
    left[0] = rng.uniform(0.2, 1.0, cfg.n_pairs)
    left[1] = rng.uniform(-1.0, 1.0, cfg.n_pairs)
    left[2] = rng.uniform(-1.0, 1.0, cfg.n_pairs)
    spec = None
    if cfg.manhattan:
        # pair 0 with its mirror spans the x axis; pairs 2 and 3 are offset
        # from pair 1 along y and z only
        dy, dz = rng.uniform(0.4, 1.0, 2)
        left[:, 2] = left[:, 1] + np.array([0.0, dy, 0.0])
        left[:, 3] = left[:, 1] + np.array([0.0, 0.0, dz])
        spec = ManhattanSpec(axis_x=(0, cfg.n_pairs), axis_y=(1, 2), axis_z=(1, 3))
    return Structure3D.from_left_points(left), spec


def _draw_camera(rng, reject_degenerate):
    while True:
        rot = random_rotation(rng)
        if not reject_degenerate:
            return rot[:2]
        if np.abs(rot[2]).min() >= DEGENERACY_MARGIN:
            return rot[:2]


def _draw_visibility(rng, cfg):
    total = 2 * cfg.n_pairs
    if cfg.occlusion_rate == 0:
        return np.ones(total, dtype=bool)
    while True:
        visible = rng.random(total) >= cfg.occlusion_rate
        if visible.sum() >= MIN_VISIBLE_KEYPOINTS:
            return visible


def gen_scene(cfg):
    """Generate one scene; bit-identical for identical configurations.

    The noise pattern is drawn before scaling by noise_sigma, so scenes with
    the same seed differ only by the noise amplitude across sigma values.
    """
    rng = np.random.default_rng(cfg.seed)
    structure, spec = _draw_shape(rng, cfg)
    poses = [CameraPose(_draw_camera(rng, cfg.manhattan)) for _ in range(cfg.n_images)]
    noise = rng.normal(size=(cfg.n_images, 2, 2 * cfg.n_pairs))
    amplitude = cfg.noise_sigma * shape_diameter(structure)
    images = []
    p = cfg.n_pairs
    for n, pose in enumerate(poses):
        observed = pose.R @ structure.full + amplitude * noise[n]
        visible = _draw_visibility(rng, cfg)
        observed = observed.copy()
        observed[:, ~visible] = 0.0
        images.append(
            KeypointImage(
                y=observed[:, :p],
                y_dag=observed[:, p:],
                vis=visible[:p],
                vis_dag=visible[p:],
                image_id=f"img{n:04d}",
            )
        )
    return Scene(structure, poses, images, spec)
