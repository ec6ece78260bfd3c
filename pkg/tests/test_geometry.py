import numpy as np
import pytest

from symsfm.errors import (
    DegenerateShape,
    LengthMismatch,
    MirrorViolation,
    NoVisiblePoints,
    RankDeficiencyWarning,
    RankDeficient,
)
from symsfm.geometry import (
    CameraPose,
    KeypointImage,
    MIRROR,
    Structure3D,
    centralize,
    evaluate_candidates,
    mirror_candidates,
    normalize_shape,
    orthonormalize_rows,
    procrustes_align,
    rotation_error,
    shape_error,
)
from symsfm.synthetic import random_rotation


def random_structure(rng, n_pairs=8):
    left = np.vstack([
        rng.uniform(0.2, 1.0, n_pairs),
        rng.uniform(-1, 1, n_pairs),
        rng.uniform(-1, 1, n_pairs),
    ])
    return Structure3D.from_left_points(left)


def rodrigues(axis, angle):
    axis = np.asarray(axis, float) / np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]],
                  [axis[2], 0, -axis[0]],
                  [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


# ---------------------------------------------------------------- types

def test_structure_mirror_invariant_is_exact(rng):
    s = random_structure(rng)
    assert np.array_equal(s.right[0], -s.left[0])
    assert np.array_equal(s.right[1:], s.left[1:])


def test_structure_rejects_broken_mirror():
    full = np.ones((3, 4))
    with pytest.raises(MirrorViolation):
        Structure3D(full)


def test_structure_rejects_bad_shape():
    with pytest.raises(ValueError):
        Structure3D(np.ones((3, 3)))


def test_camera_pose_enforces_orthonormality(rng):
    r = random_rotation(rng)[:2]
    CameraPose(r)  # fine
    with pytest.raises(ValueError):
        CameraPose(r + 0.01)


def test_keypoint_image_shape_validation():
    with pytest.raises(ValueError):
        KeypointImage(np.zeros((2, 4)), np.zeros((2, 3)),
                      np.ones(4, bool), np.ones(4, bool))


# ------------------------------------------------------- normalize_shape

def test_normalize_unit_deviations_unchanged(rng):
    s = random_structure(rng)
    scaled = Structure3D(s.full / s.full.std(axis=1, keepdims=True))
    out = normalize_shape(scaled)
    assert np.allclose(out.full, scaled.full, atol=1e-12)


def test_normalize_scale_invariance(rng):
    s = random_structure(rng)
    a = normalize_shape(Structure3D(s.full * 5.0))
    b = normalize_shape(s)
    assert np.allclose(a.full, b.full, atol=1e-12)


def test_normalize_matches_formula_oracle(rng):
    s = random_structure(rng, n_pairs=8)
    expected = 3.0 * s.full / s.full.std(axis=1).sum()
    assert np.allclose(normalize_shape(s).full, expected, rtol=1e-15)


def test_normalize_postconditions(rng):
    out = normalize_shape(random_structure(rng))
    assert abs(out.full.std(axis=1).sum() - 3.0) <= 1e-10
    # mirror pairing survives scaling exactly
    assert np.array_equal(out.right[0], -out.left[0])
    twice = normalize_shape(out)
    assert np.allclose(twice.full, out.full, atol=1e-12)


def test_normalize_degenerate_raises():
    point = np.array([[0.0], [0.3], [-0.2]])
    s = Structure3D.from_left_points(np.repeat(point, 4, axis=1))
    with pytest.raises(DegenerateShape):
        normalize_shape(s)


# ------------------------------------------------------ procrustes_align

def test_procrustes_identity(rng):
    a = rng.normal(size=(3, 6))
    assert np.allclose(procrustes_align(a, a), np.eye(3), atol=1e-12)


def test_procrustes_recovers_known_rotation(rng):
    r0 = rodrigues((1, 2, 3), 0.7)
    a = rng.normal(size=(3, 10))
    q = procrustes_align(a, r0 @ a)
    assert np.allclose(q, r0, atol=1e-10)
    assert np.allclose(q.T @ r0, np.eye(3), atol=1e-10)


def test_procrustes_excludes_reflection(rng):
    a = rng.normal(size=(3, 8))
    q = procrustes_align(a, -a)
    assert np.linalg.det(q) > 0.999


def test_procrustes_rank_deficient_warns(rng):
    direction = rng.normal(size=(3, 1))
    a = direction @ rng.normal(size=(1, 5))  # collinear points
    with pytest.warns(RankDeficiencyWarning):
        q = procrustes_align(a, a)
    assert q.shape == (3, 3)


def test_procrustes_shape_mismatch():
    with pytest.raises(LengthMismatch):
        procrustes_align(np.zeros((3, 4)), np.zeros((3, 5)))


# ------------------------------------------------- rotation / shape error

def test_rotation_error_zero(rng):
    poses = [CameraPose(random_rotation(rng)[:2]) for _ in range(3)]
    assert rotation_error(poses, poses, np.eye(3)) == 0.0


def test_rotation_error_hand_value(rng):
    r_gt = random_rotation(rng)[:2]
    r_est = r_gt + 0.1  # raw matrix: deliberately not orthonormal
    err = rotation_error([r_est], [r_gt], np.eye(3))
    assert abs(err - np.sqrt(0.06)) <= 1e-12


def test_rotation_error_length_mismatch(rng):
    p = CameraPose(random_rotation(rng)[:2])
    with pytest.raises(LengthMismatch):
        rotation_error([p], [p, p], np.eye(3))


def test_shape_error_zero_and_scale_invariant(rng):
    s = random_structure(rng)
    assert shape_error(s, s, np.eye(3)) <= 1e-12
    scaled = Structure3D(s.full * 7.0)
    assert shape_error(scaled, s, np.eye(3)) <= 1e-12


def test_shape_error_positivity(rng):
    s = random_structure(rng)
    other = Structure3D.from_left_points(s.left + rng.normal(size=s.left.shape) * 0.1)
    assert shape_error(other, s, np.eye(3)) > 1e-6


def test_shape_error_mismatch(rng):
    with pytest.raises(LengthMismatch):
        shape_error(random_structure(rng, 4), random_structure(rng, 5), np.eye(3))


def test_gauge_property_procrustes_undoes_rotation(rng):
    # rotated copies align back exactly even though the per-axis deviations
    # used inside the normalization are not rotation invariant
    for _ in range(10):
        s = random_structure(rng)
        q0 = random_rotation(rng)
        rotated = q0 @ s.full  # raw array: rotation breaks the mirror pairing
        q = procrustes_align(s.full, rotated)
        assert shape_error(s, rotated, q) <= 1e-8


def test_evaluator_resolves_mirror_gauge(rng):
    s = random_structure(rng)
    poses = [CameraPose(random_rotation(rng)[:2]) for _ in range(4)]
    flipped_poses = [CameraPose(p.R @ MIRROR) for p in poses]
    report = evaluate_candidates(
        mirror_candidates(flipped_poses, s.mirror_gauge()), poses, s
    )
    assert report.e_s <= 1e-10
    assert report.e_r <= 1e-10
    assert report.per_image_rotation_error.shape == (4,)
    assert report.aligned


# ------------------------------------------------------------ centralize

def make_image(y, y_dag, vis=None, vis_dag=None):
    p = y.shape[1]
    if vis is None:
        vis = np.ones(p, bool)
    if vis_dag is None:
        vis_dag = np.ones(p, bool)
    return KeypointImage(y, y_dag, vis, vis_dag, image_id="t")


def test_centralize_constant_points():
    y = np.full((2, 3), 0.0)
    y[0], y[1] = 3.0, 4.0
    img = make_image(y, y.copy())
    out, t = centralize(img)
    assert np.allclose(out.columns(), 0.0, atol=1e-12)
    assert np.allclose(t, [3.0, 4.0], atol=1e-12)


def test_centralize_centered_input_unchanged(rng):
    y = rng.normal(size=(2, 4))
    y_dag = rng.normal(size=(2, 4))
    shift = np.hstack([y, y_dag]).mean(axis=1)
    img = make_image(y - shift[:, None], y_dag - shift[:, None])
    out, t = centralize(img)
    assert np.allclose(t, 0.0, atol=1e-12)
    assert np.allclose(out.columns(), img.columns(), atol=1e-12)


def test_centralize_mixed_visibility_oracle(rng):
    y = rng.normal(size=(2, 5))
    y_dag = rng.normal(size=(2, 5))
    vis = np.array([1, 0, 1, 1, 0], bool)
    vis_dag = np.array([0, 1, 1, 0, 1], bool)
    img = make_image(y, y_dag, vis, vis_dag)
    out, t = centralize(img)
    expected = np.hstack([y[:, vis], y_dag[:, vis_dag]]).mean(axis=1)
    assert np.allclose(t, expected, atol=1e-12)
    assert abs(out.visible_columns().mean(axis=1)).max() <= 1e-12
    # occluded columns are carried along untouched
    assert np.array_equal(out.y[:, ~vis], y[:, ~vis])
    assert np.array_equal(out.y_dag[:, ~vis_dag], y_dag[:, ~vis_dag])


def test_centralize_no_visible_raises():
    img = make_image(np.zeros((2, 3)), np.zeros((2, 3)),
                     np.zeros(3, bool), np.zeros(3, bool))
    with pytest.raises(NoVisiblePoints):
        centralize(img)


# -------------------------------------------------- orthonormalize_rows

def test_orthonormalize_fixed_point(rng):
    m = random_rotation(rng)[:2]
    assert np.allclose(orthonormalize_rows(m), m, atol=1e-12)


def test_orthonormalize_strips_row_scales(rng):
    base = random_rotation(rng)[:2]
    scaled = np.diag([2.0, 3.0]) @ base
    assert np.allclose(orthonormalize_rows(scaled), base, atol=1e-12)


def test_orthonormalize_polar_optimality(rng):
    m = rng.normal(size=(2, 3))
    out = orthonormalize_rows(m)
    assert np.allclose(out @ out.T, np.eye(2), atol=1e-12)
    best = np.linalg.norm(m - out)
    for _ in range(1000):
        cand = orthonormalize_rows(rng.normal(size=(2, 3)))
        assert best <= np.linalg.norm(m - cand) + 1e-12


def test_orthonormalize_rank_deficient():
    row = np.array([1.0, 2.0, 3.0])
    with pytest.raises(RankDeficient):
        orthonormalize_rows(np.vstack([row, 2 * row]))
