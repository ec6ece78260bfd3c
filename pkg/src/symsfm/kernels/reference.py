"""Pure-numpy implementations of the solver's hot kernels.

All functions take float64 arrays shaped as:
    rs      (N, 2, 3)   stacked camera rows
    s       (3, P)      left members of the mirrored point pairs
    y, ydag (N, 2, P)   observations (occlusions already imputed)
"""

import numpy as np

MIRROR_SIGNS = np.array([-1.0, 1.0, 1.0])


def mirrored_points(s):
    out = s.copy()
    out[0] = -out[0]
    return out


def reprojection_energy(rs, s, y, ydag):
    """Sum of squared residuals over both members of every pair."""
    proj = np.einsum("nij,jp->nip", rs, s)
    proj_m = np.einsum("nij,jp->nip", rs, mirrored_points(s))
    return float(np.sum((y - proj) ** 2) + np.sum((ydag - proj_m) ** 2))


def structure_normal(rs, y, ydag):
    """Normal-equation blocks of the structure update.

    Returns (h, rhs) with h the shared 3x3 block sum_n (Rn^T Rn + A Rn^T Rn A)
    and rhs the 3xP stacked right-hand sides; the solve decouples per point.
    """
    rtr = np.einsum("nij,nik->jk", rs, rs)
    h = rtr + rtr * np.outer(MIRROR_SIGNS, MIRROR_SIGNS)
    rhs = np.einsum("nij,nip->jp", rs, y)
    rhs += MIRROR_SIGNS[:, None] * np.einsum("nij,nip->jp", rs, ydag)
    return h, rhs


def camera_least_squares(s_full, y_full):
    """Unconstrained per-image 2x3 fits of y_full[n] ~ R @ s_full.

    s_full is the 3 x 2P matrix of both pair members; y_full is (N, 2, 2P).
    """
    c = s_full @ s_full.T
    rhs = y_full @ s_full.T
    return np.linalg.solve(c, rhs.transpose(0, 2, 1)).transpose(0, 2, 1)


def polar_rows(ms):
    """Nearest row-orthonormal matrices to a stack of 2x3 matrices.

    Returns (polar factors, second singular values).
    """
    u, sig, vt = np.linalg.svd(ms, full_matrices=False)
    return u @ vt, sig[:, 1].copy()


def per_image_energy(rs, s_full, y_full):
    """Squared residual of each image against the full point set."""
    proj = np.einsum("nij,jp->nip", rs, s_full)
    return np.sum((y_full - proj) ** 2, axis=(1, 2))


def impute_missing(rs, s, y, ydag, invis_y, invis_dag):
    """Overwrite occluded entries with the current model projections.

    Mutates y and ydag in place; invis_* are (N, P) boolean masks.
    """
    proj = np.einsum("nij,jp->nip", rs, s)
    proj_m = np.einsum("nij,jp->nip", rs, mirrored_points(s))
    np.copyto(y, proj, where=invis_y[:, None, :])
    np.copyto(ydag, proj_m, where=invis_dag[:, None, :])


def residual_means(rs, s, y, ydag):
    """Per-image mean reprojection residual over all 2P points, shape (N, 2)."""
    proj = np.einsum("nij,jp->nip", rs, s)
    proj_m = np.einsum("nij,jp->nip", rs, mirrored_points(s))
    total = (y - proj).sum(axis=2) + (ydag - proj_m).sum(axis=2)
    return total / (2.0 * s.shape[1])
