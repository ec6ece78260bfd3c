import numpy as np
import pytest

from symsfm.errors import (
    AxisDegenerate,
    IncompleteVisibility,
    NegativeSquare,
    SlopeCoincidence,
    YZSingular,
)
from symsfm.geometry import (
    CameraPose,
    KeypointImage,
    Structure3D,
    evaluate_candidates,
    mirror_candidates,
)
from symsfm.single_view import (
    ManhattanSpec,
    SlopeTriple,
    camera_from_slopes,
    reconstruct_single,
    slopes_from_axes,
    structure_from_symmetry,
)
from symsfm.synthetic import SceneConfig, gen_scene, random_rotation


def project_image(structure, r, image_id="t"):
    cols = r @ structure.full
    p = structure.n_pairs
    return KeypointImage(cols[:, :p], cols[:, p:],
                         np.ones(p, bool), np.ones(p, bool), image_id)


def manhattan_structure(rng, n_pairs=8):
    left = np.vstack([
        rng.uniform(0.2, 1.0, n_pairs),
        rng.uniform(-1, 1, n_pairs),
        rng.uniform(-1, 1, n_pairs),
    ])
    left[:, 2] = left[:, 1] + np.array([0.0, 0.6, 0.0])
    left[:, 3] = left[:, 1] + np.array([0.0, 0.0, 0.8])
    spec = ManhattanSpec((0, n_pairs), (1, 2), (1, 3))
    return Structure3D.from_left_points(left), spec


def degenerate_camera(rng):
    # principal axis in the plane of the first two object axes (z row zero)
    phi = rng.uniform(0.15, np.pi / 2 - 0.15)
    r3 = np.array([np.cos(phi), np.sin(phi), 0.0])
    r1 = np.cross([0.0, 0.0, 1.0], r3)
    r1 /= np.linalg.norm(r1)
    r2 = np.cross(r3, r1)
    theta = rng.uniform(0, 2 * np.pi)
    return np.vstack([np.cos(theta) * r1 + np.sin(theta) * r2,
                      -np.sin(theta) * r1 + np.cos(theta) * r2])


# -------------------------------------------------------- slopes_from_axes

def test_slope_definition():
    # axis_x endpoints project to (0,0) and (2,1) -> slope 0.5
    y = np.array([[0.0, 5.0, 1.0, 4.0], [0.0, 1.0, 3.0, 1.0]])
    y_dag = np.array([[2.0, 6.0, 2.0, 5.0], [1.0, 4.0, 3.5, 2.0]])
    img = KeypointImage(y, y_dag, np.ones(4, bool), np.ones(4, bool))
    spec = ManhattanSpec((4, 0), (1, 2), (3, 7))
    slopes = slopes_from_axes(img, spec)
    assert slopes.frame_rotation == 0.0
    assert abs(slopes.mu1 - 0.5) <= 1e-12


def test_vertical_axis_rotates_frame():
    y = np.array([[0.0, 1.0, 0.5, 2.0], [0.0, 0.2, 2.0, 0.4]])
    y_dag = np.array([[0.0, 3.0, 1.5, 2.5], [3.0, 1.0, 2.5, 3.0]])
    img = KeypointImage(y, y_dag, np.ones(4, bool), np.ones(4, bool))
    spec = ManhattanSpec((0, 4), (1, 2), (2, 3))  # axis_x projects vertically
    slopes = slopes_from_axes(img, spec)
    assert slopes.frame_rotation == pytest.approx(np.pi / 4)
    assert np.isfinite(slopes.as_array()).all()


def test_slopes_match_projection_oracle(rng):
    r1 = np.array([0.8018, 0.5345, 0.2673])
    r1 /= np.linalg.norm(r1)
    helper = rng.normal(size=3)
    r2 = helper - (helper @ r1) * r1
    r2 /= np.linalg.norm(r2)
    r = np.vstack([r1, r2])
    structure, spec = manhattan_structure(rng)
    img = project_image(structure, r)
    slopes = slopes_from_axes(img, spec)
    assert slopes.frame_rotation == 0.0
    assert np.allclose(slopes.as_array(), r[1] / r[0], atol=1e-12)


def test_occluded_endpoint_rejected(rng):
    structure, spec = manhattan_structure(rng)
    img = project_image(structure, random_rotation(rng)[:2])
    vis = img.vis.copy()
    vis[0] = False  # axis_x endpoint
    occluded = KeypointImage(img.y, img.y_dag, vis, img.vis_dag)
    with pytest.raises(IncompleteVisibility):
        slopes_from_axes(occluded, spec)


def test_axis_parallel_to_principal_axis(rng):
    # viewing straight down the symmetry axis: axis_x projects to nothing
    structure, spec = manhattan_structure(rng)
    r = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    img = project_image(structure, r)
    with pytest.raises(AxisDegenerate):
        slopes_from_axes(img, spec)


def test_coincident_slopes_detected(rng):
    structure, spec = manhattan_structure(rng)
    img = project_image(structure, degenerate_camera(rng))
    with pytest.raises(SlopeCoincidence):
        slopes_from_axes(img, spec)


def test_slope_triple_invariant():
    with pytest.raises(SlopeCoincidence):
        SlopeTriple(0.5, 0.5 + 1e-12, 2.0)


def test_coefficient_determinant_identity(rng):
    # det of the slope system equals minus the product of pairwise differences
    for _ in range(200):
        mu = rng.normal(size=3) * 3
        coeffs = np.vstack([np.ones(3), mu**2, mu])
        det = np.linalg.det(coeffs)
        product = (mu[0] - mu[1]) * (mu[1] - mu[2]) * (mu[2] - mu[0])
        assert abs(det + product) <= 1e-10 * max(1.0, abs(product))


# ------------------------------------------------------ camera_from_slopes

def test_zero_slope_forces_zero_entry(rng):
    r1 = random_rotation(rng)[0]
    r2 = np.cross(r1, [1.0, 0.0, 0.0])
    r2 /= np.linalg.norm(r2)
    r = np.vstack([r1, r2])  # r2 has zero first component
    slopes = SlopeTriple(*(r[1] / r[0]))
    for pose in camera_from_slopes(slopes):
        assert pose.R[1, 0] == 0.0


def test_camera_round_trip_euler(rng):
    cz, sz = np.cos(np.deg2rad(20)), np.sin(np.deg2rad(20))
    cy, sy = np.cos(np.deg2rad(40)), np.sin(np.deg2rad(40))
    cx, sx = np.cos(np.deg2rad(30)), np.sin(np.deg2rad(30))
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    r_gt = (rz @ ry @ rx)[:2]
    slopes = SlopeTriple(*(r_gt[1] / r_gt[0]))
    family = camera_from_slopes(slopes)
    best = min(np.abs(p.R - r_gt).max() for p in family)
    assert best <= 1e-8
    for pose in family:
        assert np.linalg.norm(pose.R @ pose.R.T - np.eye(2)) <= 1e-8


def test_family_is_canonical_first_and_slope_consistent(rng):
    r_gt = random_rotation(rng)[:2]
    mu = r_gt[1] / r_gt[0]
    family = camera_from_slopes(SlopeTriple(*mu))
    assert len(family) == 8
    canonical = family[0].R
    assert (canonical[0] >= 0).all()
    for pose in family:
        row1, row2 = pose.R
        mask = np.abs(row1) > 1e-6
        assert np.allclose(row2[mask] / row1[mask], mu[mask], atol=1e-8)


def test_negative_square_rejected():
    with pytest.raises(NegativeSquare):
        camera_from_slopes(SlopeTriple(1.0, 2.0, 3.0))


# -------------------------------------------------- structure_from_symmetry

def test_point_on_symmetry_plane(rng):
    r = random_rotation(rng)[:2]
    left = np.array([[0.0, 0.4], [0.5, -0.2], [0.1, 0.9]])
    structure = Structure3D.from_left_points(left)
    img = project_image(structure, r)
    rec = structure_from_symmetry(img, CameraPose(r))
    assert rec.left[0, 0] == pytest.approx(0.0, abs=1e-12)


def test_forward_project_then_invert(rng):
    for _ in range(20):
        r = random_rotation(rng)[:2]
        left = np.vstack([
            rng.uniform(0.2, 1.0, 6),
            rng.uniform(-1, 1, 6),
            rng.uniform(-1, 1, 6),
        ])
        structure = Structure3D.from_left_points(left)
        img = project_image(structure, r)
        rec = structure_from_symmetry(img, CameraPose(r))
        assert np.abs(rec.full - structure.full).max() <= 1e-8
        # reprojection of both members
        assert np.abs(r @ rec.left - img.y).max() <= 1e-8
        assert np.abs(r @ rec.right - img.y_dag).max() <= 1e-8


def test_x_least_squares_beats_single_equation(rng):
    # over-determination: combining both rows lowers the variance
    r = None
    while r is None:
        cand = random_rotation(rng)[:2]
        if min(abs(cand[0, 0]), abs(cand[1, 0])) > 0.3:
            r = cand
    left = np.array([[0.7], [0.3], [-0.4]])
    structure = Structure3D.from_left_points(left)
    clean = r @ structure.full
    sigma = 0.01
    ls, eq1, eq2 = [], [], []
    for _ in range(1000):
        noisy = clean + rng.normal(size=clean.shape) * sigma
        img = KeypointImage(noisy[:, :1], noisy[:, 1:],
                            np.ones(1, bool), np.ones(1, bool))
        ls.append(structure_from_symmetry(img, CameraPose(r)).left[0, 0])
        half_diff = (noisy[:, 0] - noisy[:, 1]) / 2
        eq1.append(half_diff[0] / r[0, 0])
        eq2.append(half_diff[1] / r[1, 0])
    assert np.var(ls) < np.var(eq1)
    assert np.var(ls) < np.var(eq2)


def test_yz_singular(rng):
    r = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])
    left = np.vstack([rng.uniform(0.2, 1, 4), rng.uniform(-1, 1, (2, 4))])
    img = project_image(Structure3D.from_left_points(left), r)
    with pytest.raises(YZSingular):
        structure_from_symmetry(img, CameraPose(r))


def test_occlusion_rejected(rng):
    structure, _ = manhattan_structure(rng)
    img = project_image(structure, random_rotation(rng)[:2])
    vis = img.vis.copy()
    vis[5] = False
    broken = KeypointImage(img.y, img.y_dag, vis, img.vis_dag)
    with pytest.raises(IncompleteVisibility):
        structure_from_symmetry(broken, CameraPose(random_rotation(rng)[:2]))
    with pytest.raises(IncompleteVisibility):
        reconstruct_single(broken, ManhattanSpec((1, 2), (3, 4), (5, 6)))


# ------------------------------------------------------- reconstruct_single

def test_end_to_end_synthetic(rng):
    for seed in range(10):
        scene = gen_scene(SceneConfig(n_images=1, n_pairs=8, seed=seed,
                                      manhattan=True))
        result = reconstruct_single(scene.images[0], scene.manhattan)
        report = evaluate_candidates(
            [([pose], structure) for pose, structure in result.sign_family],
            [scene.poses[0]], scene.structure,
        )
        assert report.e_r < 1e-6
        assert report.e_s < 1e-6
        # round trip: canonical member reprojects the (centralized) input
        assert result.energy_trace[-1] <= 1e-16 * np.sum(scene.images[0].columns() ** 2) + 1e-20


def test_sign_family_shapes_and_errors_agree(rng):
    scene = gen_scene(SceneConfig(n_images=1, n_pairs=8, seed=11, manhattan=True))
    result = reconstruct_single(scene.images[0], scene.manhattan)
    canonical = result.structure
    errors = []
    for pose, structure in result.sign_family:
        # structures are identical up to per-axis sign flips
        flips = structure.left / canonical.left
        assert np.allclose(np.abs(flips), 1.0, atol=1e-8)
        assert np.abs(flips - flips[:, :1]).max() <= 1e-8
        report = evaluate_candidates(mirror_candidates([pose], structure),
                                     [scene.poses[0]], scene.structure)
        errors.append(report.e_s)
    assert np.abs(np.array(errors) - errors[0]).max() <= 1e-8


def test_degenerate_principal_axis_raises(rng):
    structure, spec = manhattan_structure(rng)
    img = project_image(structure, degenerate_camera(rng))
    with pytest.raises(SlopeCoincidence):
        reconstruct_single(img, spec)


def test_translation_recorded(rng):
    scene = gen_scene(SceneConfig(n_images=1, n_pairs=8, seed=4, manhattan=True))
    img = scene.images[0]
    shifted = KeypointImage(img.y + np.array([[2.0], [-1.0]]),
                            img.y_dag + np.array([[2.0], [-1.0]]),
                            img.vis, img.vis_dag, img.image_id)
    result = reconstruct_single(shifted, scene.manhattan)
    pose = result.poses[0]
    # recovered translation maps the model back onto the raw input
    reproj = pose.R @ result.structure.full + pose.t[:, None]
    assert np.abs(reproj - shifted.columns()).max() <= 1e-8
