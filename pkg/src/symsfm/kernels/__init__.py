"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import from the SYMSFM_BACKEND environment
variable: "numba", "numpy", or "auto" (default). "auto" uses numba when it
imports cleanly and falls back to numpy otherwise.
"""

import os

import numpy as np

from . import reference

_choice = os.environ.get("SYMSFM_BACKEND", "auto").lower()
if _choice not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"SYMSFM_BACKEND={_choice!r}: expected 'auto', 'numba' or 'numpy'"
    )

if _choice == "numpy":
    _impl = reference
else:
    try:
        from . import fast as _impl
    except ImportError:
        if _choice == "numba":
            raise RuntimeError("SYMSFM_BACKEND=numba but numba is not importable")
        _impl = reference

BACKEND = "numpy" if _impl is reference else "numba"

reprojection_energy = _impl.reprojection_energy
structure_normal = _impl.structure_normal
camera_least_squares = _impl.camera_least_squares
polar_rows = _impl.polar_rows
per_image_energy = _impl.per_image_energy
impute_missing = _impl.impute_missing
residual_means = _impl.residual_means

mirrored_points = reference.mirrored_points
MIRROR_SIGNS = reference.MIRROR_SIGNS


def warmup():
    """Trigger JIT compilation on tiny inputs (no-op for the numpy backend)."""
    rs = np.zeros((1, 2, 3))
    rs[:, 0, 0] = rs[:, 1, 1] = 1.0
    s = np.array([[0.5, 0.9], [-0.3, 0.4], [0.2, -0.7]])
    s_full = np.hstack([s, s * MIRROR_SIGNS[:, None]])
    y = np.zeros((1, 2, 2))
    mask = np.zeros((1, 2), dtype=bool)
    reprojection_energy(rs, s, y, y.copy())
    structure_normal(rs, y, y.copy())
    camera_least_squares(s_full, np.zeros((1, 2, 4)))
    polar_rows(rs)
    per_image_energy(rs, s, y)
    impute_missing(rs, s, y.copy(), y.copy(), mask, mask)
    residual_means(rs, s, y, y.copy())
