"""Command-line entry point.

Exit codes: 0 success, 2 input error, 3 geometry error, 4 domain error,
5 format or plane-tag error. Diagnostics go to stderr; stdout carries only
machine-readable results (``check`` and ``loss``).
"""

import argparse
from concurrent.futures import ThreadPoolExecutor
import json
import logging
import os
from pathlib import Path
import sys

import numpy as np

from . import consistency, crowdsim, density, formats, metrics, predictors
from .density import HEAD, IMAGE, DensityMap
from .errors import GeoDensityError, InputError, PlaneMismatch
from .geometry import scale_map

logger = logging.getLogger("geodensity")


def thread_count():
    """Worker cap from ``GEODENSITY_THREADS`` (default: CPU count)."""
    raw = os.environ.get("GEODENSITY_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise InputError(f"GEODENSITY_THREADS must be an integer, got {raw!r}") from None


def _ordered_map(fn, items):
    items = list(items)
    n = min(thread_count(), max(len(items), 1))
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _frame_geometry(telemetry_path, frame):
    record = formats.telemetry_frame(telemetry_path, frame)
    try:
        return crowdsim.frame_homography(record)
    except ValueError as exc:
        raise InputError(f"{telemetry_path}: invalid telemetry for frame {frame}: {exc}") from None


def _head_grid(args, h, K, margin):
    if args.grid:
        return formats.load_grid(args.grid)
    return density.HeadPlaneGrid.from_footprint(h, K, args.cell, margin, args.max_range)


def cmd_scalemap(args):
    h, K, _ = _frame_geometry(args.telemetry, args.frame)
    m = scale_map(h, K)
    formats.write_dmap(args.out, m)
    logger.info("scale map %dx%d, %d valid pixels", m.width, m.height, int(m.valid.sum()))


def cmd_gtdensity(args):
    ann = formats.load_annotations(args.annotations)
    frame = ann.frame if args.frame is None else args.frame
    h, K, _ = _frame_geometry(args.telemetry, frame)
    ann.check_bounds(K.width, K.height)
    grid = _head_grid(args, h, K, density.TRUNCATE * args.sigma)
    g = density.head_plane_density(ann, h, args.sigma, grid, expand_grid=args.expand_grid)
    formats.write_dmap(args.out, g)
    logger.info("%d heads, mass %.6f", ann.count, density.total_count(g))


def cmd_convert(args):
    src = formats.read_dmap(args.input)
    h, K, _ = _frame_geometry(args.telemetry, args.frame)
    m = scale_map(h, K)
    if args.to == IMAGE:
        if src.plane != HEAD:
            raise PlaneMismatch(f"{args.input} is {src.plane}-plane; --to image needs a head-plane map")
        out = density.head_to_image_density(src, h, m)
    else:
        if src.plane != IMAGE:
            raise PlaneMismatch(f"{args.input} is {src.plane}-plane; --to head needs an image-plane map")
        if src.shape != m.shape:
            raise PlaneMismatch(f"{args.input} is {src.shape}, camera image is {m.shape}")
        grid = _head_grid(args, h, K, 0.0)
        out = density.image_to_head_density(src, h, m, grid)
    formats.write_dmap(args.out, out)
    logger.info("mass in %.6f, out %.6f", density.total_count(src), density.total_count(out))


def _roi(path):
    return None if path is None else formats.read_dmap(path)


def cmd_predict(args):
    gt = formats.read_dmap(args.input)
    params = {"std": args.std, "seed": args.seed}
    if args.predictor == "uniform":
        params = {"roi": _roi(args.roi)}
    pred = predictors.get_predictor(args.predictor, **params)(gt)
    formats.write_dmap(args.out, pred)


def _blocks_for(path, d):
    cfg = formats.load_json(path)
    try:
        return consistency.BlockGrid.from_config(d.grid, cfg)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: malformed block configuration ({exc!r})") from None


def _triplet(paths):
    maps = [formats.read_dmap(p) for p in paths]
    for p, d in zip(paths, maps):
        if d.plane != HEAD:
            raise PlaneMismatch(f"{p} is not a head-plane map")
    return maps


def cmd_check(args):
    maps = _triplet(args.pred)
    blocks = _blocks_for(args.blocks, maps[1])
    counts = [consistency.block_counts(d, blocks) for d in maps]
    violations = consistency.conservation_check(*counts, blocks, slack=args.slack)
    print(json.dumps([v.to_dict() for v in violations]))
    logger.info("%d violation(s)", len(violations))


def cmd_loss(args):
    maps = _triplet(args.pred)
    truth = formats.read_dmap(args.truth)
    blocks = _blocks_for(args.blocks, maps[1])
    roi = _roi(args.roi)
    lh = consistency.head_plane_loss(maps[1], truth, roi)
    lt = consistency.temporal_loss(*maps, blocks)
    print(json.dumps({"head_plane_loss": lh, "temporal_loss": lt, "composite_loss": lh + lt}))


def cmd_eval(args):
    doc = formats.load_json(args.pairs)
    entries = doc.get("pairs") if isinstance(doc, dict) else doc
    if not isinstance(entries, list):
        raise InputError(f"{args.pairs}: expected a list of pairs")
    base = Path(args.pairs).parent
    default_roi = _roi(args.roi)

    def load(entry):
        try:
            truth = formats.read_dmap(base / entry["truth"])
            pred = formats.read_dmap(base / entry["pred"])
        except (KeyError, TypeError) as exc:
            raise InputError(f"{args.pairs}: malformed pair entry ({exc!r})") from None
        roi = _roi(base / entry["roi"]) if entry.get("roi") else default_roi
        return metrics.FramePair(truth, pred, roi)

    batch = metrics.EvaluationBatch(_ordered_map(load, entries))
    report = metrics.evaluate(batch)
    formats.dump_json(args.out, report)
    logger.info("MAE %.4f RMSE %.4f MPAE %.4f over %d frames", report["mae"], report["rmse"], report["mpae"], report["n_frames"])


def roi_from_poses(grid, K, poses):
    """Head-plane mask of cells whose centre is in view for every pose."""
    xs, ys = grid.cell_centers()
    pts = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)
    keep = np.ones(len(pts), dtype=bool)
    for pose in poses:
        uv, depth = crowdsim.project_points(K, pose, pts)
        with np.errstate(invalid="ignore"):
            keep &= (depth > 0) & (uv[:, 0] >= 0) & (uv[:, 0] < K.width) & (uv[:, 1] >= 0) & (uv[:, 1] < K.height)
    return DensityMap.on_grid(keep.reshape(grid.shape).astype(np.float64), grid)


def cmd_simulate(args):
    cfg_doc = formats.load_json(args.config)
    if not isinstance(cfg_doc, dict):
        raise InputError(f"{args.config}: expected a JSON object")
    config = crowdsim.SimConfig.from_dict(cfg_doc)
    frames = crowdsim.simulate(config)
    out = Path(args.out_dir)
    (out / "annotations").mkdir(parents=True, exist_ok=True)
    (out / "counts").mkdir(exist_ok=True)

    blocks = crowdsim.world_blocks(config)
    poses = [f.pose for f in frames]
    exempt = crowdsim.blocks_outside_view(blocks, config.intrinsics, poses)
    formats.dump_json(out / "config.json", config.to_dict())
    formats.dump_json(out / "grid.json", blocks.grid.to_dict())
    formats.dump_json(out / "blocks.json", {"block_m": blocks.block_m, "exempt": [list(e) for e in exempt]})
    formats.write_dmap(out / "roi.dmap", roi_from_poses(blocks.grid, config.intrinsics, poses))
    formats.dump_json(out / "telemetry.json", [f.telemetry for f in frames])

    def write(f):
        name = f"frame_{f.frame:06d}.json"
        formats.dump_json(out / "annotations" / name, f.annotations.to_dict())
        formats.dump_json(
            out / "counts" / name,
            {"frame": f.frame, "time_s": f.time, "counts": f.true_counts.counts.tolist()},
        )
        return {
            "frame": f.frame,
            "time_s": f.time,
            "annotations": f"annotations/{name}",
            "counts": f"counts/{name}",
            "n_visible": f.annotations.count,
        }

    entries = _ordered_map(write, frames)
    manifest = {
        "n_frames": len(frames),
        "fps": config.fps,
        "config": "config.json",
        "telemetry": "telemetry.json",
        "grid": "grid.json",
        "blocks": "blocks.json",
        "roi": "roi.dmap",
        "frames": entries,
    }
    formats.dump_json(out / "manifest.json", manifest)
    logger.info("wrote %d frames to %s", len(frames), out)


def build_parser():
    p = argparse.ArgumentParser(prog="geodensity", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def grid_opts(sp, with_cell=True):
        sp.add_argument("--grid", help="head-plane grid JSON; default: the image footprint")
        if with_cell:
            sp.add_argument("--cell", type=float, default=density.DEFAULT_CELL, help="cell side in metres")
        sp.add_argument("--max-range", type=float, default=None,
                        help="limit the footprint to this distance (m) from the point below the drone")

    sp = sub.add_parser("scalemap", help="per-pixel perspective scale map")
    sp.add_argument("--telemetry", required=True)
    sp.add_argument("--frame", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_scalemap)

    sp = sub.add_parser("gtdensity", help="ground-truth head-plane density from annotations")
    sp.add_argument("--annotations", required=True)
    sp.add_argument("--telemetry", required=True)
    sp.add_argument("--frame", type=int, default=None, help="telemetry frame (default: the annotation frame)")
    sp.add_argument("--sigma", type=float, default=density.DEFAULT_SIGMA, help="kernel std in metres")
    grid_opts(sp)
    sp.add_argument("--expand-grid", action="store_true", help="grow the grid to cover outlying heads")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gtdensity)

    sp = sub.add_parser("convert", help="convert between image- and head-plane density")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--to", choices=[IMAGE, HEAD], required=True)
    sp.add_argument("--telemetry", required=True)
    sp.add_argument("--frame", type=int, required=True)
    grid_opts(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_convert)

    sp = sub.add_parser("predict", help="run a stand-in predictor on a ground-truth map")
    sp.add_argument("--predictor", choices=sorted(predictors.PREDICTORS), required=True)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--std", type=float, default=0.01, help="noise std (people/m^2) for noisy-oracle")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--roi", help="ROI DMAP for the uniform predictor")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("check", help="report people-conservation violations")
    sp.add_argument("--pred", nargs=3, required=True, metavar=("P0", "P1", "P2"))
    sp.add_argument("--blocks", required=True)
    sp.add_argument("--slack", type=float, default=None)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("loss", help="head-plane, temporal and composite losses")
    sp.add_argument("--pred", nargs=3, required=True, metavar=("P0", "P1", "P2"))
    sp.add_argument("--truth", required=True)
    sp.add_argument("--blocks", required=True)
    sp.add_argument("--roi", default=None)
    sp.set_defaults(func=cmd_loss)

    sp = sub.add_parser("eval", help="MAE / RMSE / MPAE over a manifest of map pairs")
    sp.add_argument("--pairs", required=True)
    sp.add_argument("--roi", default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("simulate", help="synthetic crowd sequence")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args.func(args)
    except GeoDensityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return InputError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
