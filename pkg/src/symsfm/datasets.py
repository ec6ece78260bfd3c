"""Dataset and result file I/O, plus 3D point export.

Dataset schema (JSON, one document per dataset, schema_version 1):

    {
      "schema_version": 1,
      "pairs": [["left_name", "right_name"], ...],
      "images": [
        {"id": "img0", "keypoints": {"left_name": [u, v] | null, ...}}
      ],
      "manhattan": {"axis_x": ["name_a", "name_b"],
                    "axis_y": [...], "axis_z": [...]},        # optional
      "groundtruth": {"shape": {"name": [x, y, z], ...},
                      "poses": {"img0": [[...], [...]], ...}}  # optional
    }

A null (or missing) keypoint is occluded. Axis endpoints and groundtruth
shapes are keyed by keypoint names; pair order fixes the column order of all
matrices. Occlusion is encoded as null rather than sentinel coordinates so
missing data can never silently enter arithmetic.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    IoError,
    MirrorViolation,
    ParseError,
    SchemaVersionUnsupported,
)
from .geometry import CameraPose, KeypointImage, Structure3D, mirrored
from .multiview import MIN_VISIBLE_KEYPOINTS, StackedObservations
from .results import ReconstructionResult
from .single_view import ManhattanSpec

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass
class Groundtruth:
    structure: Structure3D
    poses: dict[str, np.ndarray]


@dataclass
class Dataset:
    pairs: list[tuple[str, str]]
    images: list[KeypointImage]
    manhattan: ManhattanSpec | None = None
    groundtruth: Groundtruth | None = None
    dropped_images: int = 0

    @property
    def n_pairs(self):
        return len(self.pairs)

    def keypoint_names(self):
        """All 2P names in column order (left block then right block)."""
        return [name for name, _ in self.pairs] + [name for _, name in self.pairs]


def default_pair_names(n_pairs):
    return [(f"p{i}_l", f"p{i}_r") for i in range(n_pairs)]


def scene_to_dataset(scene, include_groundtruth=False):
    """Wrap a synthetic scene in the dataset container."""
    pairs = default_pair_names(scene.structure.n_pairs)
    gt = None
    if include_groundtruth:
        gt = Groundtruth(
            structure=scene.structure,
            poses={img.image_id: pose.R for img, pose in zip(scene.images, scene.poses)},
        )
    return Dataset(pairs=pairs, images=list(scene.images), manhattan=scene.manhattan,
                   groundtruth=gt)


def _fail(path, context, message):
    raise ParseError(f"{path}: {context}: {message}")


def _point2(value, path, context):
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
        _fail(path, context, "expected [u, v] or null")
    return float(value[0]), float(value[1])


def load_dataset(path):
    """Parse a dataset file, dropping images below the visibility rule."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        _fail(path, "document", "expected a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionUnsupported(
            f"{path}: schema_version {version!r}; this build reads version {SCHEMA_VERSION}"
        )

    raw_pairs = doc.get("pairs")
    if not isinstance(raw_pairs, list) or not raw_pairs:
        _fail(path, "pairs", "expected a non-empty list of [left, right] names")
    pairs = []
    for i, entry in enumerate(raw_pairs):
        if (not isinstance(entry, list) or len(entry) != 2
                or not all(isinstance(n, str) for n in entry) or entry[0] == entry[1]):
            _fail(path, f"pairs[{i}]", "expected two distinct keypoint names")
        pairs.append((entry[0], entry[1]))
    names = [n for pair in pairs for n in pair]
    if len(set(names)) != len(names):
        _fail(path, "pairs", "keypoint names must be unique")
    p = len(pairs)
    column = {name: i for i, (name, _) in enumerate(pairs)}
    column.update({name: p + i for i, (_, name) in enumerate(pairs)})

    raw_images = doc.get("images")
    if not isinstance(raw_images, list):
        _fail(path, "images", "expected a list")
    images, dropped = [], 0
    seen_ids = set()
    for i, entry in enumerate(raw_images):
        ctx = f"images[{i}]"
        if not isinstance(entry, dict) or not isinstance(entry.get("id"), str):
            _fail(path, ctx, "expected an object with a string 'id'")
        image_id = entry["id"]
        if image_id in seen_ids:
            _fail(path, ctx, f"duplicate image id {image_id!r}")
        seen_ids.add(image_id)
        keypoints = entry.get("keypoints")
        if not isinstance(keypoints, dict):
            _fail(path, ctx, "expected a 'keypoints' object")
        unknown = set(keypoints) - set(column)
        if unknown:
            _fail(path, ctx, f"unknown keypoint name(s): {sorted(unknown)}")
        coords = np.zeros((2, 2 * p))
        visible = np.zeros(2 * p, dtype=bool)
        for name, value in keypoints.items():
            if value is None:
                continue
            u, v = _point2(value, path, f"{ctx}.keypoints.{name}")
            j = column[name]
            coords[:, j] = (u, v)
            visible[j] = True
        img = KeypointImage(coords[:, :p], coords[:, p:], visible[:p], visible[p:],
                            image_id=image_id)
        if img.n_visible < MIN_VISIBLE_KEYPOINTS:
            dropped += 1
            continue
        images.append(img)
    if dropped:
        logger.warning(
            "%s: dropped %d image(s) with fewer than %d visible keypoints",
            path, dropped, MIN_VISIBLE_KEYPOINTS,
        )

    manhattan = None
    if "manhattan" in doc:
        raw = doc["manhattan"]
        if not isinstance(raw, dict):
            _fail(path, "manhattan", "expected an object")
        endpoints = {}
        for axis in ("axis_x", "axis_y", "axis_z"):
            entry = raw.get(axis)
            if (not isinstance(entry, list) or len(entry) != 2
                    or not all(isinstance(n, str) for n in entry)):
                _fail(path, f"manhattan.{axis}", "expected [name_a, name_b]")
            for name in entry:
                if name not in column:
                    _fail(path, f"manhattan.{axis}", f"unknown keypoint name {name!r}")
            endpoints[axis] = (column[entry[0]], column[entry[1]])
        manhattan = ManhattanSpec(**endpoints)

    groundtruth = None
    if "groundtruth" in doc:
        raw = doc["groundtruth"]
        if not isinstance(raw, dict):
            _fail(path, "groundtruth", "expected an object")
        shape_map = raw.get("shape")
        if not isinstance(shape_map, dict):
            _fail(path, "groundtruth.shape", "expected an object keyed by keypoint name")
        missing = set(column) - set(shape_map)
        if missing:
            _fail(path, "groundtruth.shape", f"missing point(s): {sorted(missing)}")
        left = np.zeros((3, p))
        right = np.zeros((3, p))
        for idx, (lname, rname) in enumerate(pairs):
            for target, name in ((left, lname), (right, rname)):
                value = shape_map[name]
                if not isinstance(value, list) or len(value) != 3:
                    _fail(path, f"groundtruth.shape.{name}", "expected [x, y, z]")
                target[:, idx] = [float(v) for v in value]
        if np.abs(right - mirrored(left)).max() > 1e-8:
            raise MirrorViolation(
                f"{path}: groundtruth shape breaks the declared pairing by "
                f"{np.abs(right - mirrored(left)).max():.3e} (> 1e-8)"
            )
        poses = {}
        for image_id, rows in (raw.get("poses") or {}).items():
            arr = np.asarray(rows, dtype=float)
            if arr.shape != (2, 3):
                _fail(path, f"groundtruth.poses.{image_id}", "expected a 2x3 matrix")
            poses[image_id] = arr
        groundtruth = Groundtruth(Structure3D.from_left_points(left), poses)

    return Dataset(pairs=pairs, images=images, manhattan=manhattan,
                   groundtruth=groundtruth, dropped_images=dropped)


def _axis_names(dataset, spec):
    names = dataset.keypoint_names()
    return {
        "axis_x": [names[spec.axis_x[0]], names[spec.axis_x[1]]],
        "axis_y": [names[spec.axis_y[0]], names[spec.axis_y[1]]],
        "axis_z": [names[spec.axis_z[0]], names[spec.axis_z[1]]],
    }


def dataset_document(dataset):
    """Canonical JSON-ready form of a dataset."""
    doc = {"schema_version": SCHEMA_VERSION,
           "pairs": [list(pair) for pair in dataset.pairs]}
    names = dataset.keypoint_names()
    images = []
    for img in dataset.images:
        cols = img.columns()
        visible = np.concatenate([img.vis, img.vis_dag])
        keypoints = {
            name: ([float(cols[0, j]), float(cols[1, j])] if visible[j] else None)
            for j, name in enumerate(names)
        }
        images.append({"id": img.image_id, "keypoints": keypoints})
    doc["images"] = images
    if dataset.manhattan is not None:
        doc["manhattan"] = _axis_names(dataset, dataset.manhattan)
    if dataset.groundtruth is not None:
        gt = dataset.groundtruth
        doc["groundtruth"] = {
            "shape": {name: [float(v) for v in gt.structure.full[:, j]]
                      for j, name in enumerate(names)},
            "poses": {image_id: [[float(v) for v in row] for row in rows]
                      for image_id, rows in gt.poses.items()},
        }
    return doc


def _write_json(doc, path):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def save_dataset(dataset, path):
    """Write a dataset in canonical form (stable bytes for equal content)."""
    _write_json(dataset_document(dataset), path)


def _pose_entry(pose):
    return {"R": [[float(v) for v in row] for row in pose.R],
            "t": [float(v) for v in pose.t]}


def save_result(result, path, pair_names=None, include_family=False):
    """Serialize a reconstruction result.

    Contains the poses, the 2P structure points, the imputed observations,
    the energy trace, and metrics when groundtruth was available.
    """
    pairs = pair_names or default_pair_names(result.structure.n_pairs)
    names = [n for n, _ in pairs] + [n for _, n in pairs]
    doc = {
        "schema_version": SCHEMA_VERSION,
        "image_ids": list(result.image_ids),
        "pairs": [list(pair) for pair in pairs],
        "poses": {image_id: _pose_entry(pose)
                  for image_id, pose in zip(result.image_ids, result.poses)},
        "structure": [[float(v) for v in row] for row in result.structure.full],
        "energy_trace": [float(v) for v in result.energy_trace],
        "converged": bool(result.converged),
        "n_iterations": int(result.n_iterations),
    }
    if result.filled is not None:
        filled = result.filled
        p = filled.n_pairs
        imputed = {}
        for n, image_id in enumerate(filled.image_ids):
            rows = slice(2 * n, 2 * n + 2)
            entries = {}
            for j in range(p):
                if not filled.vis[n, j]:
                    entries[names[j]] = [float(v) for v in filled.y[rows, j]]
                if not filled.vis_dag[n, j]:
                    entries[names[p + j]] = [float(v) for v in filled.y_dag[rows, j]]
            if entries:
                imputed[image_id] = entries
        doc["imputed"] = imputed
    if result.metrics is not None:
        doc["metrics"] = {
            "e_R": float(result.metrics.e_r),
            "e_S": float(result.metrics.e_s),
            "per_image_rotation_error": [
                float(v) for v in result.metrics.per_image_rotation_error
            ],
        }
    if include_family and result.sign_family:
        doc["sign_family"] = [
            {**_pose_entry(pose), "structure": [[float(v) for v in row]
                                                for row in structure.full]}
            for pose, structure in result.sign_family
        ]
    _write_json(doc, path)


def load_result(path):
    """Reload a result file; matrices round-trip bit-identically."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionUnsupported(
            f"{path}: schema_version {doc.get('schema_version')!r}"
        )
    try:
        image_ids = list(doc["image_ids"])
        poses = [CameraPose(np.asarray(doc["poses"][i]["R"], dtype=float),
                            np.asarray(doc["poses"][i]["t"], dtype=float))
                 for i in image_ids]
        structure = Structure3D(np.asarray(doc["structure"], dtype=float))
        trace = np.asarray(doc.get("energy_trace", []), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: malformed result file: {exc}") from exc
    family = None
    if "sign_family" in doc:
        family = [
            (CameraPose(np.asarray(e["R"], float), np.asarray(e["t"], float)),
             Structure3D(np.asarray(e["structure"], float)))
            for e in doc["sign_family"]
        ]
    return ReconstructionResult(
        poses=poses,
        structure=structure,
        image_ids=image_ids,
        energy_trace=trace,
        converged=bool(doc.get("converged", True)),
        n_iterations=int(doc.get("n_iterations", 0)),
        sign_family=family,
    )


def export_points(result, path):
    """Write the structure as an ASCII vertex list (one `v x y z` line per
    point, pair members adjacent) readable by standard 3D viewers."""
    full = result.structure.full
    p = result.structure.n_pairs
    lines = []
    for j in range(p):
        for col in (full[:, j], full[:, p + j]):
            x, y, z = (float(v) for v in col)
            lines.append(f"v {x!r} {y!r} {z!r}")
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def save_trace(result, path):
    """One JSON record per iteration: index, energy, orthogonality violation."""
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for index, energy, violation in result.trace_records:
                fh.write(json.dumps({
                    "iteration": int(index),
                    "energy": float(energy),
                    "max_orthogonality_violation": float(violation),
                }))
                fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
