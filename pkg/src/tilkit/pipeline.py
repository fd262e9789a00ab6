"""End-to-end curation: route, transform, and write the training set.

Outputs are deterministic for a given (inputs, config, seed) triple and
independent of the worker count: every patch draws from its own
counter-based stream keyed by (seed, source_id), and the manifest is
sorted before writing. Manifest paths are relative to the output
directory so two runs into different directories compare byte-equal.
"""

from __future__ import annotations

import logging
import multiprocessing
import os
from dataclasses import asdict, dataclass
from pathlib import Path

from tilkit.annotation_io import (
    DatasetManifest,
    ManifestRecord,
    emit_yolo,
    load_image,
    parse_coco,
    save_image,
    write_manifest,
)
from tilkit.errors import InputError
from tilkit.rng import RngStream
from tilkit.router import DEFAULT_TARGET_SIZE, Route, route
from tilkit.stretcher import DonorPool, StretchConfig, gray_pad, stretch_compose
from tilkit.tiler import tile
from tilkit.types import DEFAULT_MPP, AnnotatedPatch

logger = logging.getLogger(__name__)

VARIANT_PADDED = "padded"
VARIANT_OPTIMIZED = "optimized"


@dataclass
class CurateConfig:
    variant: str = VARIANT_OPTIMIZED
    target_size: int = DEFAULT_TARGET_SIZE
    seed: int = 0
    jobs: int = 1
    mpp: float = DEFAULT_MPP
    cell_rate: float = 3.0
    max_cells: int = 8
    feather_px: int = 3
    allow_multiclass: bool = False

    def __post_init__(self) -> None:
        if self.variant not in (VARIANT_PADDED, VARIANT_OPTIMIZED):
            raise InputError(f"unknown variant {self.variant!r}")
        if self.jobs < 1:
            raise InputError(f"jobs must be >= 1, got {self.jobs}")

    def stretch_config(self) -> StretchConfig:
        return StretchConfig(
            target_size=self.target_size,
            cell_rate=self.cell_rate,
            max_cells=self.max_cells,
            feather_px=self.feather_px,
        )


def load_sources(coco_path: str | os.PathLike, images_dir: str | os.PathLike, config: CurateConfig) -> list[AnnotatedPatch]:
    """Load every annotated source patch, sorted by source id."""
    records = parse_coco(Path(coco_path).read_bytes(), allow_multiclass=config.allow_multiclass)
    stems = [Path(img.file_name).stem if img.file_name else str(img.id) for img, _ in records]
    unique = len(set(stems)) == len(stems)
    sources = []
    for (img, boxes), stem in zip(records, stems):
        if img.file_name is None:
            raise InputError(f"image id {img.id} has no file_name; cannot locate its pixels")
        source_id = stem if unique else f"{img.id}_{stem}"
        path = Path(images_dir) / img.file_name
        patch = load_image(path, mpp=config.mpp)
        if (patch.width, patch.height) != (img.width, img.height):
            raise InputError(
                f"{path}: raster is {patch.width}x{patch.height} but annotations declare "
                f"{img.width}x{img.height}"
            )
        sources.append(AnnotatedPatch(patch=patch, boxes=boxes, source_id=source_id))
    sources.sort(key=lambda ann: ann.source_id)
    return sources


def curate_patch(
    ann: AnnotatedPatch, config: CurateConfig, pool: DonorPool | None
) -> list[tuple[AnnotatedPatch, str, int]]:
    """Transform one source patch into (output, kind, dropped_boxes) items."""
    decision = route(ann.width, ann.height, config.target_size)
    if decision.route is Route.PASS_THROUGH:
        return [(ann, "passthrough", 0)]
    if decision.route is Route.TILE:
        pad_mode = "mirror" if config.variant == VARIANT_OPTIMIZED else "gray"
        return [
            (t.patch, "tile", t.dropped_box_count)
            for t in tile(ann, config.target_size, pad_mode=pad_mode)
        ]
    if config.variant == VARIANT_PADDED:
        return [(gray_pad(ann, config.target_size), "pad", 0)]
    rng = RngStream(config.seed, ann.source_id)
    outcome = stretch_compose(ann, pool, rng, config.stretch_config())
    return [(outcome.patch, "stretch", 0)]


def _write_outputs(
    outputs: list[tuple[AnnotatedPatch, str, int]], out_dir: Path
) -> list[ManifestRecord]:
    records = []
    for out_patch, kind, dropped in outputs:
        ox, oy = out_patch.origin
        stem = f"{out_patch.source_id}_x{ox}_y{oy}"
        image_path = out_dir / f"{stem}.png"
        label_path = out_dir / f"{stem}.txt"
        save_image(out_patch.patch, image_path)
        label_path.write_text(emit_yolo(out_patch), encoding="utf-8")
        records.append(
            ManifestRecord(
                image_path=image_path.name,
                label_path=label_path.name,
                source_id=out_patch.source_id,
                origin=(ox, oy),
                variant=kind,
                dropped_box_count=dropped,
            )
        )
    return records


# worker state inherited through fork; only read in children
_WORK: dict = {}


def _curate_one(index: int) -> list[ManifestRecord]:
    return _write_outputs(
        curate_patch(_WORK["sources"][index], _WORK["config"], _WORK["pool"]),
        _WORK["out_dir"],
    )


def run_curate(
    coco_path: str | os.PathLike,
    images_dir: str | os.PathLike,
    out_dir: str | os.PathLike,
    config: CurateConfig,
) -> DatasetManifest:
    """Curate a whole dataset and write images, labels, and manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sources = load_sources(coco_path, images_dir, config)
    logger.info("curating %d source patches, variant=%s seed=%d", len(sources), config.variant, config.seed)

    pool = None
    if config.variant == VARIANT_OPTIMIZED:
        pool = DonorPool.from_patches(sources)

    _WORK.update({"sources": sources, "config": config, "pool": pool, "out_dir": out})
    try:
        if config.jobs > 1 and len(sources) > 1:
            ctx = multiprocessing.get_context("fork")
            with ctx.Pool(config.jobs) as workers:
                per_patch = workers.map(_curate_one, range(len(sources)), chunksize=8)
        else:
            per_patch = [_curate_one(i) for i in range(len(sources))]
    finally:
        _WORK.clear()

    records = [rec for batch in per_patch for rec in batch]
    records.sort(key=lambda r: (r.source_id, r.origin[1], r.origin[0]))
    manifest = DatasetManifest(
        records=records,
        global_seed=config.seed,
        config={k: v for k, v in asdict(config).items() if k != "jobs"},
    )
    write_manifest(manifest, out / "manifest.json")
    dropped_total = sum(r.dropped_box_count for r in records)
    logger.info("wrote %d outputs (%d boxes dropped at tile edges)", len(records), dropped_total)
    return manifest
