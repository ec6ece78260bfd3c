"""Command-line surface wiring the pipelines together.

Exit codes: 0 success, 2 input or parse error, 3 numerical degeneracy,
4 non-convergence (the result file is still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import datasets
from .errors import DegeneracyError, InputError, ParseError
from .geometry import evaluate_candidates, mirror_candidates
from .multiview import SolveConfig, reconstruct_multi
from .single_view import reconstruct_single
from .synthetic import SceneConfig, gen_scene

logger = logging.getLogger("symsfm")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DEGENERATE = 3
EXIT_NONCONVERGED = 4


def _common_flags(parser):
    parser.add_argument("--seed", type=int, default=0, help="random seed")
    parser.add_argument("--quiet", action="store_true", help="suppress warnings")
    parser.add_argument("--json", action="store_true",
                        help="machine-readable stdout")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="symsfm",
        description="Orthographic camera and symmetric 3D structure recovery "
                    "from 2D keypoint annotations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--images", type=int, required=True)
    p.add_argument("--pairs", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--occlusion", type=float, default=0.0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--manhattan", action="store_true",
                   help="emit axis endpoint pairs")
    _common_flags(p)

    p = sub.add_parser("reconstruct-single",
                       help="single-image reconstruction from axis slopes")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--all-signs", action="store_true",
                   help="store the full sign family in the result")
    p.add_argument("--image", default=None,
                   help="image id to reconstruct (default: first)")
    p.add_argument("--export-points", default=None,
                   help="also write the shape as an ASCII vertex list")
    _common_flags(p)

    p = sub.add_parser("reconstruct-multi",
                       help="multi-image symmetric rigid reconstruction")
    p.add_argument("--dataset", required=True,
                   help="dataset file, or a directory of per-subtype files")
    p.add_argument("--out", required=True,
                   help="result file (or directory in directory mode)")
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--init-T", dest="init_t", type=int, default=10,
                   help="occlusion-initialization iterations")
    p.add_argument("--trace", default=None,
                   help="write per-iteration records to this file")
    p.add_argument("--export-points", default=None)
    _common_flags(p)

    p = sub.add_parser("evaluate",
                       help="rotation/shape errors of a result vs groundtruth")
    p.add_argument("--result", required=True)
    p.add_argument("--groundtruth", required=True,
                   help="dataset file with a groundtruth block")
    _common_flags(p)
    return parser


def _emit(args, payload, lines):
    if args.json:
        print(json.dumps(payload))
    else:
        for line in lines:
            print(line)


def _cmd_synth(args):
    cfg = SceneConfig(
        n_images=args.images,
        n_pairs=args.pairs,
        noise_sigma=args.noise,
        occlusion_rate=args.occlusion,
        seed=args.seed,
        manhattan=args.manhattan,
    )
    scene = gen_scene(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset_path = out / "dataset.json"
    gt_path = out / "groundtruth.json"
    datasets.save_dataset(datasets.scene_to_dataset(scene, include_groundtruth=False),
                          dataset_path)
    datasets.save_dataset(datasets.scene_to_dataset(scene, include_groundtruth=True),
                          gt_path)
    _emit(args,
          {"dataset": str(dataset_path), "groundtruth": str(gt_path),
           "images": cfg.n_images, "pairs": cfg.n_pairs},
          [f"wrote {dataset_path}", f"wrote {gt_path}"])
    return EXIT_OK


def _cmd_reconstruct_single(args):
    dataset = datasets.load_dataset(args.dataset)
    if not dataset.images:
        raise ParseError(f"{args.dataset}: no admissible images")
    if dataset.manhattan is None:
        raise ParseError(f"{args.dataset}: no manhattan axis block")
    if args.image is None:
        img = dataset.images[0]
    else:
        matches = [im for im in dataset.images if im.image_id == args.image]
        if not matches:
            raise ParseError(f"{args.dataset}: no image with id {args.image!r}")
        img = matches[0]
    result = reconstruct_single(img, dataset.manhattan)
    if dataset.groundtruth is not None and img.image_id in dataset.groundtruth.poses:
        gt_pose = dataset.groundtruth.poses[img.image_id]
        result.metrics = evaluate_candidates(
            [([pose], structure) for pose, structure in result.sign_family],
            [gt_pose], dataset.groundtruth.structure,
        )
    datasets.save_result(result, args.out, pair_names=dataset.pairs,
                         include_family=args.all_signs)
    if args.export_points:
        datasets.export_points(result, args.export_points)
    payload = {"out": args.out, "image_id": img.image_id,
               "energy": float(result.energy_trace[-1])}
    lines = [f"reconstructed {img.image_id} -> {args.out}"]
    if result.metrics is not None:
        payload["e_R"] = result.metrics.e_r
        payload["e_S"] = result.metrics.e_s
        lines.append(f"e_R: {result.metrics.e_r:.6g}")
        lines.append(f"e_S: {result.metrics.e_s:.6g}")
    _emit(args, payload, lines)
    return EXIT_OK


def _solve_multi_file(args, dataset_path, out_path):
    dataset = datasets.load_dataset(dataset_path)
    groundtruth = None
    if dataset.groundtruth is not None:
        missing = [img.image_id for img in dataset.images
                   if img.image_id not in dataset.groundtruth.poses]
        if missing:
            logger.warning("%s: groundtruth lacks poses for %d image(s); "
                           "skipping metrics", dataset_path, len(missing))
        else:
            groundtruth = (
                [dataset.groundtruth.poses[img.image_id] for img in dataset.images],
                dataset.groundtruth.structure,
            )
    config = SolveConfig(max_iters=args.max_iters, tol=args.tol,
                         init_iters=args.init_t)
    result = reconstruct_multi(dataset.images, config, groundtruth=groundtruth)
    datasets.save_result(result, out_path, pair_names=dataset.pairs)
    if args.trace:
        datasets.save_trace(result, args.trace)
    if args.export_points:
        datasets.export_points(result, args.export_points)
    payload = {
        "out": str(out_path),
        "images": len(result.image_ids),
        "dropped": dataset.dropped_images,
        "converged": result.converged,
        "iterations": result.n_iterations,
        "final_energy": float(result.energy_trace[-1]),
    }
    lines = [
        f"reconstructed {len(result.image_ids)} image(s) -> {out_path} "
        f"({'converged' if result.converged else 'NOT converged'} in "
        f"{result.n_iterations} iterations)"
    ]
    if result.metrics is not None:
        payload["e_R"] = result.metrics.e_r
        payload["e_S"] = result.metrics.e_s
        lines.append(f"e_R: {result.metrics.e_r:.6g}")
        lines.append(f"e_S: {result.metrics.e_s:.6g}")
    return result, payload, lines


def _cmd_reconstruct_multi(args):
    dataset_path = Path(args.dataset)
    if dataset_path.is_dir():
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        files = sorted(dataset_path.glob("*.json"))
        if not files:
            raise ParseError(f"{dataset_path}: no *.json dataset files")
        payloads, lines, all_converged = [], [], True
        for f in files:
            result, payload, file_lines = _solve_multi_file(
                args, f, out_dir / f"{f.stem}_result.json"
            )
            payload["dataset"] = str(f)
            payloads.append(payload)
            lines.extend(file_lines)
            all_converged = all_converged and result.converged
        _emit(args, {"results": payloads}, lines)
        return EXIT_OK if all_converged else EXIT_NONCONVERGED
    result, payload, lines = _solve_multi_file(args, dataset_path, Path(args.out))
    _emit(args, payload, lines)
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


def _cmd_evaluate(args):
    result = datasets.load_result(args.result)
    gt_dataset = datasets.load_dataset(args.groundtruth)
    if gt_dataset.groundtruth is None:
        raise ParseError(f"{args.groundtruth}: no groundtruth block")
    gt = gt_dataset.groundtruth
    missing = [i for i in result.image_ids if i not in gt.poses]
    if missing:
        raise ParseError(
            f"{args.groundtruth}: missing groundtruth pose(s) for {missing}"
        )
    gt_poses = [gt.poses[i] for i in result.image_ids]
    if result.sign_family:
        candidates = [([pose], structure) for pose, structure in result.sign_family]
    else:
        candidates = mirror_candidates(result.poses, result.structure)
    report = evaluate_candidates(candidates, gt_poses, gt.structure)
    _emit(args,
          {"e_R": report.e_r, "e_S": report.e_s,
           "per_image_rotation_error": [float(v) for v in report.per_image_rotation_error]},
          [f"e_R: {report.e_r:.6g}", f"e_S: {report.e_s:.6g}"])
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "reconstruct-single": _cmd_reconstruct_single,
    "reconstruct-multi": _cmd_reconstruct_multi,
    "evaluate": _cmd_evaluate,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    if args.quiet:
        logging.disable(logging.WARNING)
        warnings.simplefilter("ignore")
    np.seterr(all="ignore")
    try:
        return _COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DegeneracyError as exc:
        print(f"degenerate input: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
