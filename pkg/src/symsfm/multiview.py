"""Multi-image symmetric rigid reconstruction.

Pipeline: rank-3 completion of the occluded entries, SVD factorization of the
half-difference/half-sum coordinates with scale/mixing ambiguity resolution,
then monotone coordinate descent on the full reprojection energy (structure,
cameras, missing points, translations).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import (
    ConfigInvalid,
    DegenerateScale,
    IllConditioned,
    InsufficientVisibilityWarning,
    LengthMismatch,
    NonConvergenceWarning,
    RankDeficient,
    SingularAmbiguity,
    SingularNormalMatrix,
    TooFewImages,
)
from .geometry import CameraPose, Structure3D, evaluate_candidates, mirror_candidates, mirrored
from .results import ReconstructionResult

logger = logging.getLogger(__name__)

# Images need at least this many visible keypoints (both pair members
# counted) to enter a multi-image solve.
MIN_VISIBLE_KEYPOINTS = 5


@dataclass(frozen=True)
class SolveConfig:
    """Coordinate-descent settings."""

    max_iters: int = 500
    tol: float = 1e-9
    init_iters: int = 10

    def __post_init__(self):
        if self.max_iters < 0 or self.init_iters < 0:
            raise ConfigInvalid("iteration counts must be nonnegative")
        if not self.tol > 0:
            raise ConfigInvalid("tolerance must be positive")


@dataclass(frozen=True)
class StackedObservations:
    """Stacked keypoints of N images.

    y and y_dag are 2N x P with rows 2n, 2n+1 holding image n's coordinate
    rows; vis/vis_dag are N x P masks; translations accumulates every shift
    applied to each image so results can be mapped back to the input frame.
    """

    y: np.ndarray
    y_dag: np.ndarray
    vis: np.ndarray
    vis_dag: np.ndarray
    translations: np.ndarray
    image_ids: tuple = ()

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=float)
        y_dag = np.ascontiguousarray(self.y_dag, dtype=float)
        vis = np.ascontiguousarray(self.vis, dtype=bool)
        vis_dag = np.ascontiguousarray(self.vis_dag, dtype=bool)
        trans = np.ascontiguousarray(self.translations, dtype=float)
        n2, p = y.shape
        n = n2 // 2
        if n2 % 2 or y_dag.shape != (n2, p) or vis.shape != (n, p) or vis_dag.shape != (n, p):
            raise LengthMismatch("stacked arrays disagree on N or P")
        if trans.shape != (n, 2):
            raise LengthMismatch("translations must be N x 2")
        for name, arr in (("y", y), ("y_dag", y_dag), ("vis", vis),
                          ("vis_dag", vis_dag), ("translations", trans)):
            object.__setattr__(self, name, arr)

    @classmethod
    def from_images(cls, images):
        """Stack images, zero-filling occluded entries."""
        if not images:
            raise TooFewImages("no images supplied")
        p = images[0].n_pairs
        for img in images:
            if img.n_pairs != p:
                raise LengthMismatch("images disagree on the number of pairs")
        y = np.vstack([img.y for img in images])
        y_dag = np.vstack([img.y_dag for img in images])
        vis = np.vstack([img.vis for img in images])
        vis_dag = np.vstack([img.vis_dag for img in images])
        n = len(images)
        y.reshape(n, 2, p)[~vis[:, None, :].repeat(2, axis=1)] = 0.0
        y_dag.reshape(n, 2, p)[~vis_dag[:, None, :].repeat(2, axis=1)] = 0.0
        return cls(y, y_dag, vis, vis_dag, np.zeros((n, 2)),
                   tuple(img.image_id for img in images))

    @property
    def n_images(self):
        return self.y.shape[0] // 2

    @property
    def n_pairs(self):
        return self.y.shape[1]

    def y_images(self):
        """View of y as (N, 2, P)."""
        return self.y.reshape(self.n_images, 2, self.n_pairs)

    def y_dag_images(self):
        return self.y_dag.reshape(self.n_images, 2, self.n_pairs)


@dataclass(frozen=True)
class AmbiguityEstimate:
    """Scale and 2x2 mixing freedoms between the SVD factors and the true
    camera/shape factors. The resolver returns a positive scale and the
    symmetric square root of bbt; negating the scale is the mirror gauge."""

    lam: float
    bbt: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        bbt = np.ascontiguousarray(self.bbt, dtype=float)
        b = np.ascontiguousarray(self.b, dtype=float)
        if bbt.shape != (2, 2) or b.shape != (2, 2):
            raise ValueError("bbt and b must be 2x2")
        if self.lam == 0.0:
            raise DegenerateScale("scale must be nonzero")
        if abs(bbt[0, 1] - bbt[1, 0]) > 1e-12:
            raise ValueError("bbt must be symmetric")
        object.__setattr__(self, "bbt", bbt)
        object.__setattr__(self, "b", b)

    def block_diag(self):
        g = np.zeros((3, 3))
        g[0, 0] = self.lam
        g[1:, 1:] = self.b
        return g


@dataclass(frozen=True)
class SolveState:
    """Immutable snapshot of one coordinate-descent iterate."""

    poses: tuple
    shape: Structure3D
    filled: StackedObservations
    energy_trace: tuple = ()

    def pose_array(self):
        return np.stack([p.R for p in self.poses])


def admit_images(images, min_visible=MIN_VISIBLE_KEYPOINTS):
    """Split images into (admitted, dropped) by the visible-keypoint rule."""
    admitted = [img for img in images if img.n_visible >= min_visible]
    dropped = len(images) - len(admitted)
    return admitted, dropped


def full_energy(state):
    """Reprojection energy over every entry, imputed values included."""
    obs = state.filled
    return kernels.reprojection_energy(
        state.pose_array(), state.shape.left, obs.y_images(), obs.y_dag_images()
    )


def _center_images_inplace(y3, yd3, translations):
    # Shift each image so the mean over all 2P current entries (imputed
    # included) is zero; a visible-only mean is inconsistent with any exact
    # rank-3 completion once occlusion is asymmetric.
    means = (y3.sum(axis=2) + yd3.sum(axis=2)) / (2.0 * y3.shape[2])
    y3 -= means[:, :, None]
    yd3 -= means[:, :, None]
    translations += means


def init_missing(obs, iterations=10):
    """Initialize occluded entries by truncated-SVD rank-3 completion.

    Repeats: center each image, rank-3 truncate the 2N x 2P concatenation,
    overwrite only the occluded entries with the reconstruction. Visible
    entries are never modified beyond the centering shifts. With the default
    iteration budget this is a coarse initialization; the error contracts
    linearly toward the exact completion as iterations grow.
    """
    invis_y = ~obs.vis
    invis_d = ~obs.vis_dag
    occluded_fraction = np.hstack([invis_y, invis_d]).mean(axis=0)
    n_unreliable = int((occluded_fraction > 0.9).sum())
    if n_unreliable:
        warnings.warn(
            f"{n_unreliable} keypoint column(s) occluded in more than 90% of "
            "images; their completion is unreliable",
            InsufficientVisibilityWarning,
            stacklevel=2,
        )
    n, p = obs.n_images, obs.n_pairs
    y3 = obs.y_images().copy()
    yd3 = obs.y_dag_images().copy()
    trans = obs.translations.copy()
    if not invis_y.any() and not invis_d.any():
        # nothing to impute: a single centering pass
        _center_images_inplace(y3, yd3, trans)
        return replace(obs, y=y3.reshape(2 * n, p), y_dag=yd3.reshape(2 * n, p),
                       translations=trans)
    for _ in range(iterations):
        _center_images_inplace(y3, yd3, trans)
        stacked = np.hstack([y3.reshape(2 * n, p), yd3.reshape(2 * n, p)])
        u, sig, vt = np.linalg.svd(stacked, full_matrices=False)
        rec = (u[:, :3] * sig[:3]) @ vt[:3]
        rec3 = rec[:, :p].reshape(n, 2, p)
        recd3 = rec[:, p:].reshape(n, 2, p)
        np.copyto(y3, rec3, where=invis_y[:, None, :])
        np.copyto(yd3, recd3, where=invis_d[:, None, :])
    return replace(obs, y=y3.reshape(2 * n, p), y_dag=yd3.reshape(2 * n, p),
                   translations=trans)


def surrogate_decompose(obs):
    """Half-difference and half-sum coordinates (L, M), each 2N x P."""
    half_diff = (obs.y - obs.y_dag) / 2.0
    half_sum = (obs.y + obs.y_dag) / 2.0
    return half_diff, half_sum


def factor_rank(matrix, rank):
    """Balanced rank-r SVD factorization (sqrt of the singular values into
    each factor). Raises RankDeficient below a 1e-10 relative spectral gap."""
    matrix = np.asarray(matrix, dtype=float)
    u, sig, vt = np.linalg.svd(matrix, full_matrices=False)
    if sig[0] == 0.0 or sig[rank - 1] / sig[0] <= 1e-10:
        raise RankDeficient(
            f"matrix has fewer than {rank} significant singular values"
        )
    root = np.sqrt(sig[:rank])
    return u[:, :rank] * root, root[:, None] * vt[:rank]


def _scale_from_square(lam_sq):
    if -1e-8 <= lam_sq < 0.0:
        lam_sq = 0.0
    if lam_sq <= 0.0:
        raise DegenerateScale(
            f"squared scale {lam_sq:.3e} is not positive: the shape has no "
            "extent along the symmetry direction"
        )
    return float(np.sqrt(lam_sq))


def resolve_ambiguities(rhat1, rhat2):
    """Recover the scale and mixing ambiguities from orthonormality.

    Each image contributes three linear equations in (lam^2, bb1, bb2, bb3),
    the distinct entries of the symmetric 2x2 product; the stacked system is
    solved by normal equations. The mixing factor is returned as the
    symmetric PSD square root, which fixes its rotation freedom.
    """
    rhat1 = np.asarray(rhat1, dtype=float).reshape(-1, 1)
    rhat2 = np.asarray(rhat2, dtype=float)
    n = rhat1.shape[0] // 2
    if n < 2:
        raise TooFewImages(
            "ambiguity resolution needs at least 2 images (3 equations per "
            "image, 4 unknowns)"
        )
    rows = np.empty((3 * n, 4))
    for i in range(n):
        r11, r21 = rhat1[2 * i, 0], rhat1[2 * i + 1, 0]
        a = rhat2[2 * i]
        c = rhat2[2 * i + 1]
        rows[3 * i] = (r11 * r11, a[0] * a[0], 2.0 * a[0] * a[1], a[1] * a[1])
        rows[3 * i + 1] = (r21 * r21, c[0] * c[0], 2.0 * c[0] * c[1], c[1] * c[1])
        rows[3 * i + 2] = (
            r11 * r21,
            a[0] * c[0],
            a[0] * c[1] + a[1] * c[0],
            a[1] * c[1],
        )
    rhs = np.tile([1.0, 1.0, 0.0], n)
    gram = rows.T @ rows
    if np.linalg.cond(gram) > 1e12:
        raise IllConditioned("normal equations of the ambiguity solve are "
                             "too ill-conditioned")
    x = np.linalg.solve(gram, rows.T @ rhs)
    lam = _scale_from_square(x[0])
    bbt = np.array([[x[1], x[2]], [x[2], x[3]]])
    w, v = np.linalg.eigh(bbt)
    b = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return AmbiguityEstimate(lam, bbt, b)


def compose_initialization(rhat1, rhat2, shat_x, shat_yz, amb):
    """Combine the SVD factors with the resolved ambiguities (cameras and
    structure), projecting each camera block onto orthonormal rows."""
    g = amb.block_diag()
    if abs(np.linalg.det(g)) < 1e-12:
        raise SingularAmbiguity("scale/mixing correction is not invertible")
    r_stack = np.hstack([np.asarray(rhat1, dtype=float).reshape(-1, 1), rhat2]) @ g
    s = np.linalg.solve(g, np.vstack([shat_x, shat_yz]))
    n = r_stack.shape[0] // 2
    rs, sig2 = kernels.polar_rows(np.ascontiguousarray(r_stack.reshape(n, 2, 3)))
    if (sig2 < 1e-10).any():
        raise RankDeficient("a composed camera block is rank deficient")
    poses = [CameraPose(rs[i]) for i in range(n)]
    return poses, Structure3D.from_left_points(s)


def _pose_array(poses):
    if isinstance(poses, np.ndarray):
        return np.ascontiguousarray(poses, dtype=float)
    return np.stack([p.R if isinstance(p, CameraPose) else np.asarray(p, float)
                     for p in poses])


def _structure_step(rs, y3, yd3):
    rtr = np.einsum("nij,nik->jk", rs, rs)
    eig = np.linalg.eigvalsh(rtr)
    if eig[0] <= eig[-1] * 1e-10:
        raise SingularNormalMatrix(
            "stacked camera rows span fewer than 3 dimensions; need >= 2 "
            "images with distinct viewing directions"
        )
    h, rhs = kernels.structure_normal(rs, y3, yd3)
    return np.linalg.solve(h, rhs)


def _camera_step(rs_prev, s, y3, yd3):
    s_full = np.hstack([s, mirrored(s)])
    sig = np.linalg.svd(s_full, compute_uv=False)
    if sig[0] == 0.0 or sig[2] / sig[0] <= 1e-10:
        raise RankDeficient("shape spans fewer than 3 dimensions")
    y_full = np.ascontiguousarray(np.concatenate([y3, yd3], axis=2))
    fits = kernels.camera_least_squares(s_full, y_full)
    rs_new, sig2 = kernels.polar_rows(fits)
    if (sig2 < 1e-10).any():
        raise RankDeficient("a camera fit collapsed to rank 1")
    if rs_prev is not None:
        worse = kernels.per_image_energy(rs_new, s_full, y_full) > \
            kernels.per_image_energy(np.ascontiguousarray(rs_prev), s_full, y_full)
        if worse.any():
            rs_new = rs_new.copy()
            rs_new[worse] = rs_prev[worse]
    return rs_new


def update_structure(poses, obs):
    """Exact minimizer of the energy over the structure with poses and
    imputed observations fixed; the normal system decouples per point."""
    rs = _pose_array(poses)
    s = _structure_step(rs, obs.y_images(), obs.y_dag_images())
    return Structure3D.from_left_points(s)


def update_cameras(shape, obs, prev_poses=None):
    """Per-image unconstrained fit followed by projection onto orthonormal
    rows; when prev_poses is given, any image whose energy would increase
    keeps its previous pose."""
    rs_prev = _pose_array(prev_poses) if prev_poses is not None else None
    rs = _camera_step(rs_prev, shape.left, obs.y_images(), obs.y_dag_images())
    return [CameraPose(rs[i]) for i in range(rs.shape[0])]


def update_missing(state):
    """Overwrite occluded entries with the current model projections; their
    energy terms become exactly zero."""
    obs = state.filled
    y3 = obs.y_images().copy()
    yd3 = obs.y_dag_images().copy()
    kernels.impute_missing(state.pose_array(), state.shape.left, y3, yd3,
                           ~obs.vis, ~obs.vis_dag)
    n, p = obs.n_images, obs.n_pairs
    filled = replace(obs, y=y3.reshape(2 * n, p), y_dag=yd3.reshape(2 * n, p))
    return replace(state, filled=filled)


def recentralize(state):
    """Re-estimate each image's translation as the mean reprojection residual
    over all 2P points and subtract it from the observations."""
    obs = state.filled
    y3 = obs.y_images().copy()
    yd3 = obs.y_dag_images().copy()
    t = kernels.residual_means(state.pose_array(), state.shape.left, y3, yd3)
    y3 -= t[:, :, None]
    yd3 -= t[:, :, None]
    n, p = obs.n_images, obs.n_pairs
    filled = replace(obs, y=y3.reshape(2 * n, p), y_dag=yd3.reshape(2 * n, p),
                     translations=obs.translations + t)
    return replace(state, filled=filled)


def _max_orthogonality_violation(rs):
    gram = np.einsum("nij,nkj->nik", rs, rs) - np.eye(2)
    return float(np.sqrt((gram**2).sum(axis=(1, 2))).max())


def reconstruct_multi(images, config=None, groundtruth=None):
    """Full multi-image pipeline over same-category instances.

    Applies the visible-keypoint admission rule, initializes occlusions and
    the camera/structure factors, then runs coordinate descent until the
    energy settles (relative change below config.tol) or the iteration cap.
    groundtruth, when given as (poses, structure) aligned with the input
    image list, is used to attach evaluation metrics to the result.
    """
    config = config or SolveConfig()
    admitted, dropped = admit_images(images)
    if dropped:
        logger.warning(
            "dropped %d image(s) with fewer than %d visible keypoints",
            dropped, MIN_VISIBLE_KEYPOINTS,
        )
    if len(admitted) < 2:
        raise TooFewImages(
            f"{len(admitted)} admissible image(s); the multi-image solver "
            "needs at least 2. For a single image with visible axis "
            "endpoints use the single-image pipeline (reconstruct-single)."
        )
    gt_subset = None
    if groundtruth is not None:
        gt_poses, gt_structure = groundtruth
        if len(gt_poses) != len(images):
            raise LengthMismatch("groundtruth poses must align with the input images")
        keep = [i for i, img in enumerate(images) if img.n_visible >= MIN_VISIBLE_KEYPOINTS]
        gt_subset = ([gt_poses[i] for i in keep], gt_structure)

    obs = StackedObservations.from_images(admitted)
    obs = init_missing(obs, config.init_iters)
    half_diff, half_sum = surrogate_decompose(obs)
    rhat1, shat_x = factor_rank(half_diff, 1)
    rhat2, shat_yz = factor_rank(half_sum, 2)
    amb = resolve_ambiguities(rhat1, rhat2)
    poses, shape = compose_initialization(rhat1, rhat2, shat_x, shat_yz, amb)

    n, p = obs.n_images, obs.n_pairs
    rs = np.stack([pose.R for pose in poses])
    s = shape.left.copy()
    y3 = obs.y_images().copy()
    yd3 = obs.y_dag_images().copy()
    invis_y = ~obs.vis
    invis_d = ~obs.vis_dag
    trans = obs.translations.copy()

    energy = kernels.reprojection_energy(rs, s, y3, yd3)
    trace = [energy]
    records = [(0, energy, _max_orthogonality_violation(rs))]
    converged = False
    for it in range(1, config.max_iters + 1):
        s = _structure_step(rs, y3, yd3)
        rs = _camera_step(rs, s, y3, yd3)
        kernels.impute_missing(rs, s, y3, yd3, invis_y, invis_d)
        t = kernels.residual_means(rs, s, y3, yd3)
        y3 -= t[:, :, None]
        yd3 -= t[:, :, None]
        trans += t
        energy = kernels.reprojection_energy(rs, s, y3, yd3)
        records.append((it, energy, _max_orthogonality_violation(rs)))
        previous = trace[-1]
        trace.append(energy)
        if abs(previous - energy) <= config.tol * max(previous, 1e-30):
            converged = True
            break
    if config.max_iters == 0:
        converged = True  # initialization-only run
    if not converged:
        warnings.warn(
            f"energy did not settle within {config.max_iters} iterations "
            f"(last relative change {abs(trace[-2] - trace[-1]) / max(trace[-2], 1e-30):.2e})",
            NonConvergenceWarning,
            stacklevel=2,
        )

    final_poses = [CameraPose(rs[i], trans[i]) for i in range(n)]
    structure = Structure3D.from_left_points(s)
    filled = replace(obs, y=y3.reshape(2 * n, p), y_dag=yd3.reshape(2 * n, p),
                     translations=trans)
    metrics = None
    if gt_subset is not None:
        metrics = evaluate_candidates(
            mirror_candidates(final_poses, structure), gt_subset[0], gt_subset[1]
        )
    return ReconstructionResult(
        poses=final_poses,
        structure=structure,
        image_ids=list(obs.image_ids),
        energy_trace=np.array(trace),
        converged=converged,
        n_iterations=len(trace) - 1,
        trace_records=records,
        filled=filled,
        metrics=metrics,
    )
