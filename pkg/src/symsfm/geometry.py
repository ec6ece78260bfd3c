"""Shared geometric primitives.

Shape normalization, rotation-only Procrustes alignment, the rotation and
shape error metrics, keypoint centralization, and projection of near-rotations
onto the row-orthonormal manifold.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateShape,
    LengthMismatch,
    MirrorViolation,
    NoVisiblePoints,
    RankDeficiencyWarning,
    RankDeficient,
)

# Reflection across the x=0 symmetry plane.
MIRROR = np.diag([-1.0, 1.0, 1.0])
MIRROR_SIGNS = np.array([-1.0, 1.0, 1.0])

ORTHONORMALITY_TOL = 1e-8


def mirrored(points):
    """Mirror 3D points across x=0 (exact sign flip of the first row)."""
    out = np.array(points, dtype=float)
    out[0] = -out[0]
    return out


@dataclass(frozen=True)
class Structure3D:
    """Bilaterally symmetric 3D structure.

    Stored as a 3 x 2P matrix [S, S_mirror] whose columns p and P+p form a
    mirror pair: column P+p equals column p with the x coordinate negated,
    exactly. Construct from the left members with `from_left_points`.
    """

    full: np.ndarray

    def __post_init__(self):
        full = np.ascontiguousarray(self.full, dtype=float)
        if full.ndim != 2 or full.shape[0] != 3 or full.shape[1] < 2 or full.shape[1] % 2:
            raise ValueError("structure must be a 3 x 2P matrix with P >= 1")
        object.__setattr__(self, "full", full)
        p = full.shape[1] // 2
        left, right = full[:, :p], full[:, p:]
        if not (np.array_equal(right[0], -left[0]) and np.array_equal(right[1:], left[1:])):
            raise MirrorViolation("columns p and P+p must mirror exactly across x=0")

    @classmethod
    def from_left_points(cls, left):
        left = np.asarray(left, dtype=float)
        return cls(np.hstack([left, mirrored(left)]))

    @property
    def n_pairs(self):
        return self.full.shape[1] // 2

    @property
    def left(self):
        return self.full[:, : self.n_pairs]

    @property
    def right(self):
        return self.full[:, self.n_pairs :]

    def mirror_gauge(self):
        """The gauge twin (x-flipped structure) producing identical images
        when every camera is post-multiplied by the mirror."""
        return Structure3D.from_left_points(mirrored(self.left))


@dataclass(frozen=True)
class CameraPose:
    """Orthographic camera: row-orthonormal 2x3 projection plus translation."""

    R: np.ndarray
    t: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        r = np.ascontiguousarray(self.R, dtype=float)
        t = np.ascontiguousarray(self.t, dtype=float)
        if r.shape != (2, 3):
            raise ValueError("camera projection must be 2x3")
        if t.shape != (2,):
            raise ValueError("translation must be a 2-vector")
        if np.linalg.norm(r @ r.T - np.eye(2)) > ORTHONORMALITY_TOL:
            raise ValueError("camera rows are not orthonormal")
        object.__setattr__(self, "R", r)
        object.__setattr__(self, "t", t)

    def orthogonality_violation(self):
        return float(np.linalg.norm(self.R @ self.R.T - np.eye(2)))


@dataclass(frozen=True)
class KeypointImage:
    """One image's 2D keypoint pairs with visibility flags.

    y holds the left member of each pair, y_dag the right member; occluded
    entries carry placeholder zeros and are masked out by vis / vis_dag.
    """

    y: np.ndarray
    y_dag: np.ndarray
    vis: np.ndarray
    vis_dag: np.ndarray
    image_id: str = ""

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=float)
        y_dag = np.ascontiguousarray(self.y_dag, dtype=float)
        vis = np.ascontiguousarray(self.vis, dtype=bool)
        vis_dag = np.ascontiguousarray(self.vis_dag, dtype=bool)
        p = y.shape[1] if y.ndim == 2 else -1
        if y.shape != (2, p) or y_dag.shape != (2, p) or vis.shape != (p,) or vis_dag.shape != (p,):
            raise ValueError("keypoint arrays must share one pair count P")
        for name, arr in (("y", y), ("y_dag", y_dag), ("vis", vis), ("vis_dag", vis_dag)):
            object.__setattr__(self, name, arr)

    @property
    def n_pairs(self):
        return self.y.shape[1]

    @property
    def n_visible(self):
        return int(self.vis.sum() + self.vis_dag.sum())

    def columns(self):
        """All 2P image points as a 2 x 2P matrix (left block then right)."""
        return np.hstack([self.y, self.y_dag])

    def visible_columns(self):
        return np.hstack([self.y[:, self.vis], self.y_dag[:, self.vis_dag]])

    def fully_visible(self):
        return bool(self.vis.all() and self.vis_dag.all())


@dataclass(frozen=True)
class EvalReport:
    """Rotation and shape errors after one shared gauge alignment."""

    e_r: float
    e_s: float
    per_image_rotation_error: np.ndarray
    aligned: bool = True


def _std_sum(points):
    return float(points.std(axis=1).sum())


def normalize_shape(structure):
    """Scale a structure so its per-axis standard deviations sum to 3.

    Population standard deviations over all 2P points; pure scaling, so the
    mirror pairing is preserved exactly.
    """
    sig = _std_sum(structure.full)
    if sig < 1e-12:
        raise DegenerateShape("all points coincide; nothing to normalize")
    return Structure3D(structure.full * (3.0 / sig))


def procrustes_align(a, b):
    """Rotation Q (det +1) minimizing ||Q a - b||_F over corresponding columns.

    a, b are 3xK with K >= 3. Reflections are excluded by flipping the sign
    of the smallest singular vector pair; a rank-deficient cross-covariance
    only warns, since the best rotation is still well defined up to the
    deficient directions.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch(f"column mismatch: {a.shape} vs {b.shape}")
    if a.shape[0] != 3 or a.shape[1] < 3:
        raise ValueError("inputs must be 3xK with K >= 3")
    u, sig, vt = np.linalg.svd(b @ a.T)
    if sig[0] == 0.0 or sig[1] <= sig[0] * 1e-12:
        warnings.warn(
            "cross-covariance has rank < 2; alignment is only partially "
            "determined",
            RankDeficiencyWarning,
            stacklevel=2,
        )
    d = 1.0 if np.linalg.det(u @ vt) >= 0 else -1.0
    return (u * np.array([1.0, 1.0, d])) @ vt


def _rows_2x3(pose):
    r = pose.R if isinstance(pose, CameraPose) else np.asarray(pose, dtype=float)
    if r.shape != (2, 3):
        raise ValueError("expected a 2x3 camera matrix")
    return r


def per_image_rotation_errors(poses_est, poses_gt, q):
    """Frobenius distances ||R_est Q^T - R_gt|| per image.

    Accepts CameraPose instances or raw 2x3 arrays on either side.
    """
    if len(poses_est) != len(poses_gt):
        raise LengthMismatch("pose lists differ in length")
    if len(poses_est) == 0:
        raise LengthMismatch("need at least one pose")
    q = np.asarray(q, dtype=float)
    return np.array(
        [
            np.linalg.norm(_rows_2x3(re) @ q.T - _rows_2x3(rg))
            for re, rg in zip(poses_est, poses_gt)
        ]
    )


def rotation_error(poses_est, poses_gt, q):
    """Mean Frobenius rotation error after gauge alignment by Q."""
    return float(per_image_rotation_errors(poses_est, poses_gt, q).mean())


def _structure_columns(s):
    if isinstance(s, Structure3D):
        return s.full
    arr = np.asarray(s, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != 3:
        raise ValueError("expected a Structure3D or a 3 x 2P array")
    return arr


def _centered(points):
    # the shape origin is a translation gauge; metrics compare centered sets
    return points - points.mean(axis=1, keepdims=True)


def _normalized_points(points):
    sig = _std_sum(points)
    if sig < 1e-12:
        raise DegenerateShape("all points coincide; nothing to normalize")
    return points * (3.0 / sig)


def shape_error(s_est, s_gt, q):
    """Mean per-point distance between normalized shapes after alignment.

    Both point sets are centered, the gauge rotation is applied to the
    estimate, and each side is normalized afterwards: the per-axis deviations
    used for normalization are not rotation invariant, so normalizing before
    rotating would leave a spurious scale residual.
    """
    a = _structure_columns(s_est)
    b = _structure_columns(s_gt)
    if a.shape != b.shape:
        raise LengthMismatch(f"point count mismatch: {a.shape} vs {b.shape}")
    q = np.asarray(q, dtype=float)
    aligned = _normalized_points(q @ _centered(a))
    target = _normalized_points(_centered(b))
    return float(np.linalg.norm(aligned - target, axis=0).mean())


def alignment_rotation(s_est, s_gt):
    """Gauge rotation fit once on the centered, normalized shapes."""
    a = _normalized_points(_centered(_structure_columns(s_est)))
    b = _normalized_points(_centered(_structure_columns(s_gt)))
    return procrustes_align(a, b)


def mirror_candidates(poses, structure):
    """The two gauge members (R, S) and (R @ MIRROR, mirror(S)) that produce
    identical observations; evaluation picks whichever matches groundtruth."""
    flipped = [CameraPose(_rows_2x3(p) @ MIRROR, getattr(p, "t", np.zeros(2))) for p in poses]
    return [(list(poses), structure), (flipped, structure.mirror_gauge())]


def evaluate_candidates(candidates, poses_gt, s_gt):
    """Score candidate (poses, structure) members against groundtruth.

    Fits one gauge rotation per member from the structures, computes both
    metrics with it, and keeps the member with the smallest shape error.
    This resolves the discrete sign/mirror gauge the solvers cannot observe.
    """
    best = None
    for poses, structure in candidates:
        q = alignment_rotation(structure, s_gt)
        e_s = shape_error(structure, s_gt, q)
        per = per_image_rotation_errors(poses, poses_gt, q)
        report = EvalReport(float(per.mean()), e_s, per, aligned=True)
        if best is None or report.e_s < best.e_s:
            best = report
    if best is None:
        raise LengthMismatch("no candidates supplied")
    return best


def evaluate_reconstruction(poses, structure, poses_gt, s_gt):
    """Evaluate one reconstruction, resolving the mirror gauge."""
    return evaluate_candidates(mirror_candidates(poses, structure), poses_gt, s_gt)


def centralize(img):
    """Shift visible keypoints so their joint mean is zero.

    Returns (image, t) with t the subtracted mean. Occluded columns hold
    placeholders, not data, and are carried along untouched.
    """
    visible = img.visible_columns()
    if visible.shape[1] == 0:
        raise NoVisiblePoints(f"image {img.image_id!r} has no visible keypoints")
    t = visible.mean(axis=1)
    y = img.y.copy()
    y[:, img.vis] -= t[:, None]
    y_dag = img.y_dag.copy()
    y_dag[:, img.vis_dag] -= t[:, None]
    return KeypointImage(y, y_dag, img.vis, img.vis_dag, img.image_id), t


def orthonormalize_rows(m):
    """Nearest (Frobenius) row-orthonormal matrix: the polar factor of a 2x3
    matrix, from its SVD with singular values replaced by one."""
    m = np.asarray(m, dtype=float)
    if m.shape != (2, 3):
        raise ValueError("expected a 2x3 matrix")
    u, sig, vt = np.linalg.svd(m, full_matrices=False)
    if sig[1] < 1e-10:
        raise RankDeficient("second singular value below 1e-10; rows are "
                            "numerically dependent")
    return u @ vt
