"""Reconstruction result container shared by both pipelines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraPose, EvalReport, Structure3D


@dataclass
class ReconstructionResult:
    """Recovered cameras and structure plus solve diagnostics.

    poses are ordered like image_ids. For the single-image pipeline
    sign_family carries every sign choice of the camera solve together with
    the structure each one implies (canonical member first); downstream
    evaluation disambiguates against groundtruth. For the multi-image solver
    filled holds the observations with occlusions imputed, and trace_records
    streams (iteration, energy, max orthogonality violation) triples.
    """

    poses: list[CameraPose]
    structure: Structure3D
    image_ids: list[str]
    energy_trace: np.ndarray
    converged: bool = True
    n_iterations: int = 0
    trace_records: list[tuple[int, float, float]] = field(default_factory=list)
    filled: "StackedObservations | None" = None
    metrics: EvalReport | None = None
    sign_family: list[tuple[CameraPose, Structure3D]] | None = None
