"""COCO parsing, YOLO label emission, PNG and manifest I/O.

Only the box subset of COCO is handled (images / annotations /
categories with 4-element bbox); segmentation polygons are ignored.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from PIL import Image, UnidentifiedImageError

from tilkit import __version__
from tilkit.errors import (
    CocoParseError,
    ContractError,
    InputError,
    ReferentialError,
    SchemaError,
    UnsupportedImageError,
)
from tilkit.types import BBox, PixelPatch, AnnotatedPatch

logger = logging.getLogger(__name__)

PIPELINE_VERSION = __version__


@dataclass(frozen=True)
class CocoImage:
    id: int
    width: int
    height: int
    file_name: str | None = None


def _require(record: dict, key: str, where: str) -> Any:
    if key not in record:
        raise SchemaError(f"missing required field {where}.{key}")
    return record[key]


def parse_coco(
    json_text: bytes | str, allow_multiclass: bool = False
) -> list[tuple[CocoImage, list[BBox]]]:
    """Parse COCO-style annotations into per-image box lists.

    Categories are remapped to dense class ids starting at 0 (sorted by
    original category id). With a single category everything maps to
    class 0; more than one category is rejected unless allow_multiclass
    is set, since the detector is single-class.
    """
    if isinstance(json_text, bytes):
        try:
            text = json_text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CocoParseError(f"not valid UTF-8 at byte offset {exc.start}") from exc
    else:
        text = json_text
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        byte_offset = len(text[: exc.pos].encode("utf-8"))
        raise CocoParseError(f"malformed JSON at byte offset {byte_offset}: {exc.msg}") from exc

    if not isinstance(doc, dict):
        raise SchemaError("top-level JSON value must be an object")
    images = _require(doc, "images", "$")
    annotations = _require(doc, "annotations", "$")
    categories = _require(doc, "categories", "$")

    cat_ids = sorted(_require(cat, "id", f"categories[{i}]") for i, cat in enumerate(categories))
    if len(set(cat_ids)) != len(cat_ids):
        raise SchemaError("duplicate category ids")
    if len(cat_ids) > 1 and not allow_multiclass:
        names = [cat.get("name", "?") for cat in categories]
        raise InputError(
            f"dataset declares {len(cat_ids)} categories {names}; the pipeline is "
            "single-class (lymphocyte). Pass --allow-multiclass to map them anyway."
        )
    class_map = {cid: dense for dense, cid in enumerate(cat_ids)}

    records: dict[int, tuple[CocoImage, list[BBox]]] = {}
    order: list[int] = []
    for i, img in enumerate(images):
        image = CocoImage(
            id=_require(img, "id", f"images[{i}]"),
            width=int(_require(img, "width", f"images[{i}]")),
            height=int(_require(img, "height", f"images[{i}]")),
            file_name=img.get("file_name"),
        )
        if image.id in records:
            raise SchemaError(f"duplicate image id {image.id}")
        records[image.id] = (image, [])
        order.append(image.id)

    for i, ann in enumerate(annotations):
        where = f"annotations[{i}]"
        image_id = _require(ann, "image_id", where)
        if image_id not in records:
            raise ReferentialError(f"{where} references unknown image_id {image_id}")
        bbox = _require(ann, "bbox", where)
        if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
            raise SchemaError(f"{where}.bbox must have 4 elements, got {bbox!r}")
        category_id = _require(ann, "category_id", where)
        if category_id not in class_map:
            raise ReferentialError(f"{where} references unknown category_id {category_id}")
        x, y, w, h = (float(v) for v in bbox)
        records[image_id][1].append(BBox(x, y, w, h, class_id=class_map[category_id]))

    return [records[image_id] for image_id in order]


def coco_dict(
    images: list[CocoImage],
    boxes_per_image: list[list[BBox]],
    category_name: str = "lymphocyte",
) -> dict:
    """Assemble the COCO counterpart of parse_coco output."""
    if len(images) != len(boxes_per_image):
        raise ContractError("one box list per image required")
    annotations = []
    ann_id = 1
    for image, boxes in zip(images, boxes_per_image):
        for box in boxes:
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": image.id,
                    "category_id": box.class_id + 1,
                    "bbox": [box.x_min, box.y_min, box.width, box.height],
                    "area": box.area,
                    "iscrowd": 0,
                }
            )
            ann_id += 1
    return {
        "images": [
            {"id": im.id, "width": im.width, "height": im.height, "file_name": im.file_name}
            for im in images
        ],
        "annotations": annotations,
        "categories": [{"id": 1, "name": category_name}],
    }


def emit_yolo(patch: AnnotatedPatch) -> str:
    """Render boxes as YOLO label lines, normalized to [0, 1].

    One `class cx cy w h` line per box with fixed 6-decimal formatting;
    every line newline-terminated, no trailing blank line. Containment
    violations raise instead of clamping.
    """
    w, h = patch.width, patch.height
    lines = []
    for box in patch.boxes:
        if not box.fits_in(w, h) or box.x_min < 0 or box.y_min < 0:
            raise ContractError(f"box {box} not contained in {w}x{h} patch")
        cx, cy = box.center
        lines.append(
            f"{box.class_id} {cx / w:.6f} {cy / h:.6f} {box.width / w:.6f} {box.height / h:.6f}\n"
        )
    return "".join(lines)


def parse_yolo(text: str, width: int, height: int) -> list[BBox]:
    """Inverse of emit_yolo up to 6-decimal quantization of normalized coords."""
    boxes = []
    for lineno, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 5:
            raise SchemaError(f"label line {lineno}: expected 5 fields, got {len(parts)}")
        class_id = int(parts[0])
        cx, cy, bw, bh = (float(v) for v in parts[1:])
        x_min = (cx - bw / 2) * width
        y_min = (cy - bh / 2) * height
        # 6-decimal quantization can push an edge-hugging box a hair
        # below zero; snap that noise back, reject anything larger
        if -1e-3 < x_min < 0:
            x_min = 0.0
        if -1e-3 < y_min < 0:
            y_min = 0.0
        boxes.append(
            BBox(
                x_min=x_min,
                y_min=y_min,
                width=bw * width,
                height=bh * height,
                class_id=class_id,
            )
        )
    return boxes


def load_image(path: str | os.PathLike, mpp: float | None = None) -> PixelPatch:
    """Load an 8-bit RGB(A) PNG; alpha is dropped."""
    try:
        img = Image.open(path)
        img.load()
    except (OSError, UnidentifiedImageError) as exc:
        raise InputError(f"cannot read image {path}: {exc}") from exc
    if img.mode == "RGBA":
        img = img.convert("RGB")
    if img.mode != "RGB":
        raise UnsupportedImageError(
            f"{path}: unsupported image mode {img.mode!r}; only 8-bit RGB/RGBA PNG is accepted"
        )
    pixels = np.asarray(img, dtype=np.uint8)
    if mpp is None:
        return PixelPatch(pixels)
    return PixelPatch(pixels, mpp=mpp)


# moderate zlib effort: ~2.5x faster than the default for ~20% larger
# files, still lossless; fixed so output bytes stay run-to-run stable
PNG_COMPRESS_LEVEL = 3


def save_image(patch: PixelPatch, path: str | os.PathLike) -> None:
    """Write the raster as PNG; save/load round-trips samples exactly."""
    Image.fromarray(patch.pixels, mode="RGB").save(
        path, format="PNG", compress_level=PNG_COMPRESS_LEVEL
    )


@dataclass
class ManifestRecord:
    image_path: str
    label_path: str
    source_id: str
    origin: tuple[int, int]
    variant: str
    dropped_box_count: int = 0

    def __post_init__(self) -> None:
        self.origin = tuple(self.origin)
        if self.dropped_box_count < 0:
            raise ContractError("dropped_box_count must be non-negative")


@dataclass
class DatasetManifest:
    records: list[ManifestRecord] = field(default_factory=list)
    global_seed: int = 0
    version: str = PIPELINE_VERSION
    config: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        paths = [r.image_path for r in self.records]
        if len(set(paths)) != len(paths):
            raise ContractError("manifest image paths must be unique")


def write_manifest(manifest: DatasetManifest, path: str | os.PathLike) -> None:
    doc = {
        "version": manifest.version,
        "global_seed": manifest.global_seed,
        "config": manifest.config,
        "records": [asdict(r) for r in manifest.records],
    }
    # sorted keys keep diffs between runs reviewable
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_manifest(path: str | os.PathLike) -> DatasetManifest:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read manifest {path}: {exc}") from exc
    version = doc.get("version", "")
    if version != PIPELINE_VERSION:
        logger.warning(
            "manifest %s was written by pipeline version %s (current %s)",
            path,
            version,
            PIPELINE_VERSION,
        )
    records = [
        ManifestRecord(
            image_path=r["image_path"],
            label_path=r["label_path"],
            source_id=r["source_id"],
            origin=tuple(r["origin"]),
            variant=r["variant"],
            dropped_box_count=r["dropped_box_count"],
        )
        for r in doc.get("records", [])
    ]
    return DatasetManifest(
        records=records,
        global_seed=doc.get("global_seed", 0),
        version=version,
        config=doc.get("config", {}),
    )
