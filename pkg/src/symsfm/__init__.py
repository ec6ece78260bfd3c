"""Orthographic camera and symmetric 3D structure recovery from 2D keypoints.

Single images are solved from three perpendicular object-axis slopes plus the
mirror pairing; collections of same-category images are solved by symmetric
rigid structure from motion with occlusion handling.
"""

from .errors import *  # noqa: F401,F403
from .geometry import (
    CameraPose,
    EvalReport,
    KeypointImage,
    MIRROR,
    Structure3D,
    centralize,
    evaluate_candidates,
    evaluate_reconstruction,
    mirror_candidates,
    normalize_shape,
    orthonormalize_rows,
    procrustes_align,
    rotation_error,
    shape_error,
)
from .multiview import (
    AmbiguityEstimate,
    SolveConfig,
    SolveState,
    StackedObservations,
    compose_initialization,
    factor_rank,
    full_energy,
    init_missing,
    reconstruct_multi,
    recentralize,
    resolve_ambiguities,
    surrogate_decompose,
    update_cameras,
    update_missing,
    update_structure,
)
from .results import ReconstructionResult
from .single_view import (
    ManhattanSpec,
    SlopeTriple,
    camera_from_slopes,
    reconstruct_single,
    slopes_from_axes,
    structure_from_symmetry,
)
from .synthetic import Scene, SceneConfig, gen_scene

__version__ = "0.1.0"
