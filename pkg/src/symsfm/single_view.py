"""Single-image reconstruction from three perpendicular object axes.

The slopes of the three projected axes determine the camera rows up to sign
choices through a 3x3 linear system in the squared first-row entries; the
mirrored keypoint pairs then give the structure in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AxisDegenerate,
    IncompleteVisibility,
    NegativeSquare,
    SlopeCoincidence,
    YZSingular,
)
from .geometry import CameraPose, Structure3D, centralize, orthonormalize_rows
from .kernels import reference as _ref
from .results import ReconstructionResult

# Default tolerances; callers may override per operation.
AXIS_TOL = 1e-6          # axis displacement / verticality, relative
SLOPE_TOL = 1e-9         # minimum pairwise slope separation

# Candidate working-frame rotations tried in order until no axis is vertical.
# 45 degrees first; the extras cover the case where rotating by 45 makes a
# different axis vertical.
_FRAME_ANGLES = (0.0,) + tuple(
    np.deg2rad(a) for a in (45.0, 30.0, 60.0, 15.0, 75.0)
)

# All eight sign choices for the first camera row, canonical (+,+,+) first.
_SIGN_PATTERNS = tuple(
    np.array([1.0 - 2.0 * (i >> 2 & 1), 1.0 - 2.0 * (i >> 1 & 1), 1.0 - 2.0 * (i & 1)])
    for i in range(8)
)


@dataclass(frozen=True)
class ManhattanSpec:
    """Keypoint index pairs spanning the three perpendicular object axes.

    Indices address the concatenated [Y, Y_dag] columns: pair p's left member
    is column p, its right member column P+p.
    """

    axis_x: tuple[int, int]
    axis_y: tuple[int, int]
    axis_z: tuple[int, int]

    def __post_init__(self):
        for name in ("axis_x", "axis_y", "axis_z"):
            a, b = getattr(self, name)
            if a == b or a < 0 or b < 0:
                raise ValueError(f"{name}: endpoints must be distinct nonnegative indices")

    def axes(self):
        return (self.axis_x, self.axis_y, self.axis_z)

    def validate_for(self, n_pairs):
        for name, (a, b) in zip(("axis_x", "axis_y", "axis_z"), self.axes()):
            if max(a, b) >= 2 * n_pairs:
                raise ValueError(f"{name} endpoint out of range for P={n_pairs}")


@dataclass(frozen=True)
class SlopeTriple:
    """Projected slopes of the three axes in the working image frame.

    frame_rotation records the 2D rotation applied to the image coordinates
    before measuring slopes (to remove vertical axes); the camera solve
    rotates its result back.
    """

    mu1: float
    mu2: float
    mu3: float
    frame_rotation: float = 0.0

    def __post_init__(self):
        mu = (self.mu1, self.mu2, self.mu3)
        for i in range(3):
            for j in range(i + 1, 3):
                if abs(mu[i] - mu[j]) <= 1e-9:
                    raise SlopeCoincidence(
                        f"slopes {i + 1} and {j + 1} coincide ({mu[i]!r}); the "
                        "camera principal axis lies in the plane of two axes"
                    )

    def as_array(self):
        return np.array([self.mu1, self.mu2, self.mu3])


def _rot2(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def _axis_columns(img, spec):
    spec.validate_for(img.n_pairs)
    cols = img.columns()
    vis = np.concatenate([img.vis, img.vis_dag])
    deltas = []
    for name, (a, b) in zip(("axis_x", "axis_y", "axis_z"), spec.axes()):
        if not (vis[a] and vis[b]):
            raise IncompleteVisibility(f"{name} endpoints ({a}, {b}) must be visible")
        deltas.append(cols[:, a] - cols[:, b])
    return np.array(deltas)  # 3 x 2, one row per axis


def _working_angle(deltas, axis_tol):
    for angle in _FRAME_ANGLES:
        rot = _rot2(angle) @ deltas.T  # 2 x 3
        dx, dy = np.abs(rot[0]), np.abs(rot[1])
        if (dx > axis_tol * np.maximum(dx, dy)).all():
            return angle
    raise AxisDegenerate("no working frame removes all vertical axes")


def slopes_from_axes(img, spec, axis_tol=AXIS_TOL, slope_tol=SLOPE_TOL):
    """Measure the three projected axis slopes of one image.

    Raises AxisDegenerate when an axis projects to (almost) nothing, i.e. the
    3D axis is nearly parallel to the viewing direction, and SlopeCoincidence
    when two slopes agree to within slope_tol: the determinant of the camera
    solve below is the product of pairwise slope differences.
    """
    deltas = _axis_columns(img, spec)
    visible = img.visible_columns()
    span = visible.max(axis=1) - visible.min(axis=1)
    scale = float(np.linalg.norm(span))
    eps = axis_tol * scale
    lengths = np.linalg.norm(deltas, axis=1)
    for name, length in zip(("axis_x", "axis_y", "axis_z"), lengths):
        if length <= eps:
            raise AxisDegenerate(
                f"{name} projects to displacement {length:.3e} <= {eps:.3e}"
            )
    angle = _working_angle(deltas, axis_tol)
    rot = _rot2(angle) @ deltas.T
    mu = rot[1] / rot[0]
    for i in range(3):
        for j in range(i + 1, 3):
            if abs(mu[i] - mu[j]) <= slope_tol:
                raise SlopeCoincidence(
                    f"slopes {i + 1} and {j + 1} coincide at {mu[i]:.6g}"
                )
    return SlopeTriple(float(mu[0]), float(mu[1]), float(mu[2]), frame_rotation=float(angle))


def camera_from_slopes(slopes):
    """Solve the three orthonormality constraints for the camera rows.

    Returns the family of sign choices as CameraPose objects, canonical
    representative first (nonnegative first row). Row two is mu_k times row
    one per column; the working-frame rotation is undone before returning.
    """
    mu = slopes.as_array()
    coeffs = np.vstack([np.ones(3), mu**2, mu])
    try:
        r1sq = np.linalg.solve(coeffs, np.array([1.0, 1.0, 0.0]))
    except np.linalg.LinAlgError as exc:
        raise SlopeCoincidence("slope system is singular") from exc
    if (r1sq < -1e-8).any():
        raise NegativeSquare(
            f"squared row entries {r1sq} are negative; slopes are inconsistent "
            "with an orthographic camera"
        )
    r1 = np.sqrt(np.clip(r1sq, 0.0, None))
    undo = _rot2(-slopes.frame_rotation)
    family = []
    for signs in _SIGN_PATTERNS:
        row1 = r1 * signs
        rows = undo @ np.vstack([row1, mu * row1])
        if np.linalg.norm(rows @ rows.T - np.eye(2)) > 1e-9:
            # only reachable when a clamped square broke orthonormality
            rows = orthonormalize_rows(rows)
        family.append(CameraPose(rows))
    return family


def structure_from_symmetry(img, pose):
    """Closed-form symmetric structure given the camera.

    The half-difference of each pair determines its x coordinate (two
    equations for one unknown, combined by least squares); the half-sum
    determines (y, z) exactly through the 2x2 in-plane camera block.
    """
    if not img.fully_visible():
        raise IncompleteVisibility("structure recovery needs all 2P keypoints visible")
    r = pose.R
    half_diff = (img.y - img.y_dag) / 2.0
    half_sum = (img.y + img.y_dag) / 2.0
    denom = r[0, 0] ** 2 + r[1, 0] ** 2
    if denom < 1e-30:
        # symmetry axis projects to nothing; minimum-norm solution
        x = np.zeros(img.n_pairs)
    else:
        x = (r[0, 0] * half_diff[0] + r[1, 0] * half_diff[1]) / denom
    block = r[:, 1:]
    sig = np.linalg.svd(block, compute_uv=False)
    if sig[1] == 0.0 or sig[0] / sig[1] >= 1e8:
        raise YZSingular("in-plane 2x2 camera block is numerically singular")
    yz = np.linalg.solve(block, half_sum)
    return Structure3D.from_left_points(np.vstack([x, yz]))


def reconstruct_single(img, spec, axis_tol=AXIS_TOL, slope_tol=SLOPE_TOL):
    """Full single-image pipeline: centralize, solve camera, recover shape.

    The result's poses hold the canonical sign choice; sign_family carries
    every member with the structure it implies, for downstream
    disambiguation against groundtruth or other images.
    """
    if not img.fully_visible():
        raise IncompleteVisibility(
            "single-image reconstruction needs a fully visible image"
        )
    centered, t = centralize(img)
    slopes = slopes_from_axes(centered, spec, axis_tol=axis_tol, slope_tol=slope_tol)
    family = camera_from_slopes(slopes)
    family = [CameraPose(p.R, t) for p in family]
    members = [(pose, structure_from_symmetry(centered, pose)) for pose in family]
    canonical_pose, structure = members[0]
    rs = canonical_pose.R[None]
    energy = _ref.reprojection_energy(
        rs, structure.left, centered.y[None], centered.y_dag[None]
    )
    return ReconstructionResult(
        poses=[canonical_pose],
        structure=structure,
        image_ids=[img.image_id],
        energy_trace=np.array([energy]),
        converged=True,
        n_iterations=0,
        trace_records=[(0, float(energy), canonical_pose.orthogonality_violation())],
        sign_family=members,
    )
