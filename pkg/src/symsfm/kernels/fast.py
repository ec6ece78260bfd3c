"""Numba-compiled versions of the hot kernels.

Same contracts as kernels.reference; plain loops fused per (image, point)
so the coordinate-descent inner iteration avoids temporary allocation.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def reprojection_energy(rs, s, y, ydag):
    n_img = y.shape[0]
    p = y.shape[2]
    total = 0.0
    for n in range(n_img):
        for q in range(p):
            sx, sy, sz = s[0, q], s[1, q], s[2, q]
            a0 = rs[n, 0, 0] * sx + rs[n, 0, 1] * sy + rs[n, 0, 2] * sz
            a1 = rs[n, 1, 0] * sx + rs[n, 1, 1] * sy + rs[n, 1, 2] * sz
            b0 = -rs[n, 0, 0] * sx + rs[n, 0, 1] * sy + rs[n, 0, 2] * sz
            b1 = -rs[n, 1, 0] * sx + rs[n, 1, 1] * sy + rs[n, 1, 2] * sz
            d0 = y[n, 0, q] - a0
            d1 = y[n, 1, q] - a1
            e0 = ydag[n, 0, q] - b0
            e1 = ydag[n, 1, q] - b1
            total += d0 * d0 + d1 * d1 + e0 * e0 + e1 * e1
    return total


@njit(cache=True)
def structure_normal(rs, y, ydag):
    n_img = y.shape[0]
    p = y.shape[2]
    rtr = np.zeros((3, 3))
    rhs = np.zeros((3, p))
    for n in range(n_img):
        for j in range(3):
            for k in range(3):
                rtr[j, k] += rs[n, 0, j] * rs[n, 0, k] + rs[n, 1, j] * rs[n, 1, k]
        for q in range(p):
            for j in range(3):
                rhs[j, q] += rs[n, 0, j] * y[n, 0, q] + rs[n, 1, j] * y[n, 1, q]
                m = -1.0 if j == 0 else 1.0
                rhs[j, q] += m * (
                    rs[n, 0, j] * ydag[n, 0, q] + rs[n, 1, j] * ydag[n, 1, q]
                )
    h = np.empty((3, 3))
    for j in range(3):
        for k in range(3):
            mm = 1.0
            if (j == 0) != (k == 0):
                mm = -1.0
            h[j, k] = rtr[j, k] + mm * rtr[j, k]
    return h, rhs


@njit(cache=True)
def camera_least_squares(s_full, y_full):
    n_img = y_full.shape[0]
    cinv = np.linalg.inv(s_full @ s_full.T)
    out = np.empty((n_img, 2, 3))
    p2 = s_full.shape[1]
    for n in range(n_img):
        for i in range(2):
            g0 = 0.0
            g1 = 0.0
            g2 = 0.0
            for q in range(p2):
                v = y_full[n, i, q]
                g0 += v * s_full[0, q]
                g1 += v * s_full[1, q]
                g2 += v * s_full[2, q]
            for j in range(3):
                out[n, i, j] = g0 * cinv[0, j] + g1 * cinv[1, j] + g2 * cinv[2, j]
    return out


@njit(cache=True)
def polar_rows(ms):
    # closed-form polar factor of each 2x3 block via the 2x2 Gram matrix
    n = ms.shape[0]
    out = np.empty_like(ms)
    sig2 = np.empty(n)
    for i in range(n):
        m = ms[i]
        k00 = m[0, 0] * m[0, 0] + m[0, 1] * m[0, 1] + m[0, 2] * m[0, 2]
        k11 = m[1, 0] * m[1, 0] + m[1, 1] * m[1, 1] + m[1, 2] * m[1, 2]
        k01 = m[0, 0] * m[1, 0] + m[0, 1] * m[1, 1] + m[0, 2] * m[1, 2]
        tr = k00 + k11
        det = k00 * k11 - k01 * k01
        if det < 0.0:
            det = 0.0
        sd = np.sqrt(det)
        disc = tr * tr - 4.0 * det
        if disc < 0.0:
            disc = 0.0
        s1 = np.sqrt(0.5 * (tr + np.sqrt(disc)))
        sig2[i] = sd / s1 if s1 > 0.0 else 0.0
        denom = np.sqrt(tr + 2.0 * sd)
        if denom == 0.0 or sd == 0.0:
            # rank deficient; caller checks sig2 and raises
            out[i] = m
            continue
        h00 = (k00 + sd) / denom
        h11 = (k11 + sd) / denom
        h01 = k01 / denom
        dh = h00 * h11 - h01 * h01
        i00 = h11 / dh
        i11 = h00 / dh
        i01 = -h01 / dh
        for c in range(3):
            out[i, 0, c] = i00 * m[0, c] + i01 * m[1, c]
            out[i, 1, c] = i01 * m[0, c] + i11 * m[1, c]
    return out, sig2


@njit(cache=True)
def per_image_energy(rs, s_full, y_full):
    n_img = y_full.shape[0]
    p2 = s_full.shape[1]
    out = np.zeros(n_img)
    for n in range(n_img):
        for q in range(p2):
            a0 = (
                rs[n, 0, 0] * s_full[0, q]
                + rs[n, 0, 1] * s_full[1, q]
                + rs[n, 0, 2] * s_full[2, q]
            )
            a1 = (
                rs[n, 1, 0] * s_full[0, q]
                + rs[n, 1, 1] * s_full[1, q]
                + rs[n, 1, 2] * s_full[2, q]
            )
            d0 = y_full[n, 0, q] - a0
            d1 = y_full[n, 1, q] - a1
            out[n] += d0 * d0 + d1 * d1
    return out


@njit(cache=True)
def impute_missing(rs, s, y, ydag, invis_y, invis_dag):
    n_img = y.shape[0]
    p = y.shape[2]
    for n in range(n_img):
        for q in range(p):
            sx, sy, sz = s[0, q], s[1, q], s[2, q]
            if invis_y[n, q]:
                y[n, 0, q] = rs[n, 0, 0] * sx + rs[n, 0, 1] * sy + rs[n, 0, 2] * sz
                y[n, 1, q] = rs[n, 1, 0] * sx + rs[n, 1, 1] * sy + rs[n, 1, 2] * sz
            if invis_dag[n, q]:
                ydag[n, 0, q] = -rs[n, 0, 0] * sx + rs[n, 0, 1] * sy + rs[n, 0, 2] * sz
                ydag[n, 1, q] = -rs[n, 1, 0] * sx + rs[n, 1, 1] * sy + rs[n, 1, 2] * sz


@njit(cache=True)
def residual_means(rs, s, y, ydag):
    n_img = y.shape[0]
    p = y.shape[2]
    out = np.zeros((n_img, 2))
    for n in range(n_img):
        for q in range(p):
            sx, sy, sz = s[0, q], s[1, q], s[2, q]
            a0 = rs[n, 0, 0] * sx + rs[n, 0, 1] * sy + rs[n, 0, 2] * sz
            a1 = rs[n, 1, 0] * sx + rs[n, 1, 1] * sy + rs[n, 1, 2] * sz
            b0 = -rs[n, 0, 0] * sx + rs[n, 0, 1] * sy + rs[n, 0, 2] * sz
            b1 = -rs[n, 1, 0] * sx + rs[n, 1, 1] * sy + rs[n, 1, 2] * sz
            out[n, 0] += (y[n, 0, q] - a0) + (ydag[n, 0, q] - b0)
            out[n, 1] += (y[n, 1, q] - a1) + (ydag[n, 1, q] - b1)
        out[n, 0] /= 2.0 * p
        out[n, 1] /= 2.0 * p
    return out
