"""Command-line entry point wiring the pipeline together.

Subcommands: stats, curate, postprocess, eval, synth. Logs go to
stderr, data to files (stats prints CSV to stdout). Exit codes: 0 on
success, 1 on input errors, 2 on contract violations.
"""

from __future__ import annotations

import argparse
import logging
import re
import sys
from pathlib import Path

from tilkit import __version__
from tilkit.annotation_io import CocoImage, coco_dict, parse_coco, save_image, write_manifest
from tilkit.errors import ConfigError, ContractError, InputError
from tilkit.froc import (
    DEFAULT_HIT_RADIUS,
    DEFAULT_OPERATING_POINTS,
    FrocConfig,
    area_mm2,
    curve_csv,
    froc_curve,
    froc_score,
    pooled_precision_recall,
)
from tilkit.pipeline import CurateConfig, run_curate
from tilkit.postprocess import (
    BORDER_EPS,
    DEDUP_RADIUS,
    MAX_CELL_PX,
    MIN_CELL_PX,
    adjust_partial_centers,
    size_filter,
    to_global,
)
from tilkit.predictions import read_predictions, write_predictions
from tilkit.rng import RngStream
from tilkit.router import histogram, max_dim
from tilkit.synth import gen_detections, gen_patch, patch_area_mm2
from tilkit.types import DEFAULT_MPP

import json

logger = logging.getLogger("tilkit")

_TILE_NAME = re.compile(r"^(?P<source>.+)_x(?P<x>\d+)_y(?P<y>\d+)$")


def read_config_file(path: str) -> dict[str, str]:
    """Parse a `key = value` config file; '#' starts a comment."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _merged(args: argparse.Namespace, key: str, cast, default):
    """CLI flag beats config file beats built-in default."""
    cli_value = getattr(args, key, None)
    if cli_value is not None:
        return cli_value
    file_values = getattr(args, "_config_file_values", {})
    if key in file_values:
        try:
            return cast(file_values[key])
        except ValueError as exc:
            raise ConfigError(f"config file value for {key}: {exc}") from exc
    return default


def cmd_stats(args: argparse.Namespace) -> int:
    records = parse_coco(Path(args.coco).read_bytes(), allow_multiclass=args.allow_multiclass)
    sizes = [max_dim(img.width, img.height) for img, _ in records]
    hist = histogram(sizes, args.bin_width)
    sys.stdout.write(hist.to_csv())
    logger.info("histogram over %d patches, bin width %d", len(sizes), args.bin_width)
    return 0


def cmd_curate(args: argparse.Namespace) -> int:
    args._config_file_values = read_config_file(args.config) if args.config else {}
    config = CurateConfig(
        variant=_merged(args, "variant", str, "optimized"),
        target_size=_merged(args, "target_size", int, 256),
        seed=_merged(args, "seed", int, 0),
        jobs=_merged(args, "jobs", int, 1),
        mpp=_merged(args, "mpp", float, DEFAULT_MPP),
        cell_rate=_merged(args, "cell_rate", float, 3.0),
        max_cells=_merged(args, "max_cells", int, 8),
        feather_px=_merged(args, "feather_px", int, 3),
        allow_multiclass=args.allow_multiclass,
    )
    logger.info("effective config: %s, global seed %d", config, config.seed)
    manifest = run_curate(args.coco, args.images, args.out, config)
    logger.info("manifest: %s", Path(args.out) / "manifest.json")
    print(f"curated {len(manifest.records)} outputs into {args.out}")
    return 0


def _stitch(entries: list[tuple[str | int, list]], dedup_radius: float):
    """Group tile predictions by source id via the output naming scheme."""
    by_source: dict[str, list] = {}
    origins: dict[str, tuple[int, int]] = {}
    for image_id, dets in entries:
        m = _TILE_NAME.match(str(image_id))
        if m is None:
            raise InputError(
                f"image_id {image_id!r} does not follow '<source>_x<x0>_y<y0>'; "
                "cannot infer its tile origin for stitching"
            )
        source = m.group("source")
        origins[str(image_id)] = (int(m.group("x")), int(m.group("y")))
        by_source.setdefault(source, []).append((str(image_id), dets))
    out = []
    for source in sorted(by_source):
        tiles = by_source[source]
        merged = to_global(tiles, {tid: origins[tid] for tid, _ in tiles}, dedup_radius)
        out.append((source, merged))
    return out


def cmd_postprocess(args: argparse.Namespace) -> int:
    entries = read_predictions(args.pred)
    refined = []
    for image_id, dets in entries:
        dets = size_filter(dets, args.min_size, args.max_size)
        dets = adjust_partial_centers(dets, args.patch_size, args.patch_size, args.border_eps)
        refined.append((image_id, dets))
    if args.stitch:
        refined = _stitch(refined, args.dedup_radius)
    write_predictions(refined, args.out)
    n_in = sum(len(d) for _, d in entries)
    n_out = sum(len(d) for _, d in refined)
    logger.info("refined %d detections to %d across %d entries", n_in, n_out, len(refined))
    print(f"wrote {args.out} ({n_out} detections)")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    records = parse_coco(Path(args.gt).read_bytes(), allow_multiclass=args.allow_multiclass)
    by_key: dict[str, tuple] = {}
    for img, boxes in records:
        centers = [b.center for b in boxes]
        area = area_mm2(img.width, img.height, args.mpp)
        by_key[str(img.id)] = (centers, area)
        if img.file_name:
            by_key.setdefault(Path(img.file_name).stem, (centers, area))

    dets_by_key = {}
    for image_id, dets in read_predictions(args.pred):
        key = str(image_id)
        if key not in by_key:
            raise InputError(f"predictions reference unknown image {image_id!r}")
        dets_by_key[key] = dets

    per_image = []
    pr_items = []
    seen = set()
    for img, boxes in records:
        key = str(img.id)
        if key not in dets_by_key and img.file_name:
            key = Path(img.file_name).stem
        dets = dets_by_key.get(key, [])
        seen.add(key)
        centers, area = by_key[str(img.id)]
        per_image.append((centers, dets, area))
        pr_items.append((centers, dets))

    config = FrocConfig(hit_radius=args.radius, mpp=args.mpp, operating_points=tuple(args.ops))
    curve = froc_curve(per_image, config)
    score = froc_score(curve, config.operating_points)
    precision, recall = pooled_precision_recall(pr_items, args.radius, args.conf)

    Path(args.curve_out).write_text(curve_csv(curve), encoding="utf-8")
    logger.info("config: %s", config)
    print(f"images:     {len(per_image)}")
    print(f"gt cells:   {sum(len(c) for c, _, _ in per_image)}")
    print(f"detections: {sum(len(d) for _, d, _ in per_image)}")
    print(f"froc score: {score:.4f}  (operating points: {', '.join(str(p) for p in config.operating_points)})")
    print(f"precision:  {precision:.4f}  at confidence >= {args.conf}")
    print(f"recall:     {recall:.4f}  at confidence >= {args.conf}")
    print(f"curve:      {args.curve_out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.out)
    images_dir = out / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    corpus_rng = RngStream(args.seed, "synth-corpus")

    coco_images = []
    boxes_per_image = []
    prediction_entries = []
    for i in range(1, args.n_patches + 1):
        if corpus_rng.u01() < args.large_frac:
            lo, hi = args.large_range
        else:
            lo, hi = args.small_range
        width = corpus_rng.randint(lo, hi)
        height = corpus_rng.randint(lo, hi)
        n_cells = corpus_rng.randint(1, max(1, min(40, (width * height) // 3500)))
        patch = gen_patch(
            RngStream(args.seed, f"patch_{i:04d}"),
            width,
            height,
            n_cells,
            mpp=args.mpp,
            source_id=f"patch_{i:04d}",
        )
        file_name = f"patch_{i:04d}.png"
        save_image(patch.patch, images_dir / file_name)
        coco_images.append(CocoImage(id=i, width=width, height=height, file_name=file_name))
        boxes_per_image.append(patch.boxes)
        if args.emit_predictions:
            dets = gen_detections(
                patch.boxes,
                tp_rate=args.tp_rate,
                fp_per_mm2=args.fp_per_mm2,
                area=patch_area_mm2(patch),
                jitter_px=args.jitter,
                rng=RngStream(args.seed, f"dets_{i:04d}"),
                width=width,
                height=height,
            )
            prediction_entries.append((i, dets))

    coco_path = out / "annotations.json"
    coco_path.write_text(
        json.dumps(coco_dict(coco_images, boxes_per_image), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    if args.emit_predictions:
        write_predictions(prediction_entries, out / "predictions.json")
    total_cells = sum(len(b) for b in boxes_per_image)
    logger.info("seed %d, %d patches, %d cells", args.seed, args.n_patches, total_cells)
    print(f"wrote {args.n_patches} patches ({total_cells} cells) under {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tilkit",
        description="Curate lymphocyte-detection training data and score predictions.",
    )
    parser.add_argument("--version", action="version", version=f"tilkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="print the source patch size histogram as CSV")
    p.add_argument("--coco", required=True, help="COCO annotation JSON")
    p.add_argument("--bin-width", type=int, default=32)
    p.add_argument("--allow-multiclass", action="store_true")
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("curate", help="build the 256x256 training set")
    p.add_argument("--coco", required=True)
    p.add_argument("--images", required=True, help="directory holding the source PNGs")
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=["padded", "optimized"], default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--target-size", type=int, default=None, dest="target_size")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--mpp", type=float, default=None)
    p.add_argument(
        "--lambda", type=float, default=None, dest="cell_rate",
        help="mean transplanted cells per stretched patch",
    )
    p.add_argument("--max-cells", type=int, default=None, dest="max_cells")
    p.add_argument("--feather", type=int, default=None, dest="feather_px")
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--allow-multiclass", action="store_true")
    p.set_defaults(handler=cmd_curate)

    p = sub.add_parser("postprocess", help="refine raw detector predictions")
    p.add_argument("--pred", required=True, help="predictions JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--min-size", type=float, default=MIN_CELL_PX)
    p.add_argument("--max-size", type=float, default=MAX_CELL_PX)
    p.add_argument("--dedup-radius", type=float, default=DEDUP_RADIUS)
    p.add_argument("--patch-size", type=float, default=256)
    p.add_argument("--border-eps", type=float, default=BORDER_EPS)
    p.add_argument(
        "--stitch", action="store_true",
        help="merge per-tile predictions into slide coordinates",
    )
    p.set_defaults(handler=cmd_postprocess)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--gt", required=True, help="COCO annotation JSON")
    p.add_argument("--pred", required=True, help="predictions JSON")
    p.add_argument("--mpp", type=float, default=DEFAULT_MPP)
    p.add_argument("--radius", type=float, default=DEFAULT_HIT_RADIUS)
    p.add_argument(
        "--ops", type=float, nargs="+", default=list(DEFAULT_OPERATING_POINTS),
        help="FP/mm2 operating points",
    )
    p.add_argument("--conf", type=float, default=0.5)
    p.add_argument("--curve-out", default="froc.csv")
    p.add_argument("--allow-multiclass", action="store_true")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic annotated corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n-patches", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--small-range", type=int, nargs=2, default=[64, 128], metavar=("LO", "HI"))
    p.add_argument("--large-range", type=int, nargs=2, default=[300, 500], metavar=("LO", "HI"))
    p.add_argument("--large-frac", type=float, default=0.2)
    p.add_argument("--mpp", type=float, default=DEFAULT_MPP)
    p.add_argument("--emit-predictions", action="store_true")
    p.add_argument("--tp-rate", type=float, default=0.8)
    p.add_argument("--fp-per-mm2", type=float, default=20.0)
    p.add_argument("--jitter", type=float, default=2.0)
    p.set_defaults(handler=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (InputError, OSError) as exc:
        logger.error("%s", exc)
        return 1
    except ContractError as exc:
        logger.error("contract violation: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
