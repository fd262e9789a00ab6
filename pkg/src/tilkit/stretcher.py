"""Upsample small patches to natural-looking target-size images.

The composition grows a small patch by mirroring its own content, fills
whatever the mirror cannot reach with background crops taken from donor
patches, then transplants a few whole cells. Donor crops get minor
augmentations (right-angle rotation, light blur, small color shift) and
feathered edges so they blend in; transplanted cells are copied verbatim
so their pixels stay auditable against the donor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from tilkit.errors import ContractError, PlacementRejected
from tilkit.rng import RngStream
from tilkit.router import DEFAULT_TARGET_SIZE
from tilkit.tiler import GRAY_FILL
from tilkit.types import AnnotatedPatch, BBox, PixelPatch

MAX_BLUR_SIGMA = 1.5
MAX_COLOR_SHIFT = 10
TRANSPLANT_IOU_LIMIT = 0.1


@dataclass(frozen=True)
class AugmentParams:
    rotation: int = 0  # degrees, counter-clockwise
    blur_sigma: float = 0.0
    color_shift: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self) -> None:
        if self.rotation not in (0, 90, 180, 270):
            raise ContractError(f"rotation must be a multiple of 90, got {self.rotation}")
        if not 0.0 <= self.blur_sigma <= MAX_BLUR_SIGMA:
            raise ContractError(f"blur_sigma must be in [0, {MAX_BLUR_SIGMA}], got {self.blur_sigma}")
        if any(abs(int(d)) > MAX_COLOR_SHIFT for d in self.color_shift):
            raise ContractError(f"color_shift components must be within +-{MAX_COLOR_SHIFT}")


@dataclass
class StretchConfig:
    target_size: int = DEFAULT_TARGET_SIZE
    cell_rate: float = 3.0  # Poisson mean for transplanted cells per patch
    max_cells: int = 8
    max_attempts: int = 50  # rejection-sampling budget per placement
    feather_px: int = 3
    fill_cell: int = 32  # max side of one donor background crop


@dataclass
class DonorEntry:
    patch: AnnotatedPatch
    mean_rgb: np.ndarray

    @classmethod
    def from_patch(cls, patch: AnnotatedPatch) -> "DonorEntry":
        return cls(patch=patch, mean_rgb=patch.patch.pixels.reshape(-1, 3).mean(axis=0))


@dataclass
class DonorPool:
    entries: list[DonorEntry] = field(default_factory=list)

    @classmethod
    def from_patches(cls, patches: list[AnnotatedPatch]) -> "DonorPool":
        return cls([DonorEntry.from_patch(p) for p in patches])

    def __len__(self) -> int:
        return len(self.entries)

    def nearest_to(self, pixels: np.ndarray, exclude_source_id: str) -> list[DonorEntry]:
        """Donor entries ordered by mean-RGB distance to the given raster;
        ties resolve by pool order. The patch itself is never a donor."""
        mean = pixels.reshape(-1, 3).mean(axis=0)
        candidates = [e for e in self.entries if e.patch.source_id != exclude_source_id]
        return sorted(
            candidates, key=lambda e: float(np.sum((e.mean_rgb - mean) ** 2))
        )


@dataclass(frozen=True)
class TransplantRecord:
    dest_x: int
    dest_y: int
    width: int
    height: int
    donor_source_id: str
    donor_pixels: np.ndarray


@dataclass
class StretchOutcome:
    patch: AnnotatedPatch
    transplants: list[TransplantRecord]
    paste_count: int


def _mirror_positions(x_min: float, extent: float, dim: int, out_dim: int) -> list[float]:
    """All reflected copies of one interval inside [0, out_dim).

    Panel p covers [p*dim, (p+1)*dim); even panels repeat the original
    orientation, odd panels reflect it, so panel 1 maps the interval
    start to 2*dim - (x_min + extent).
    """
    positions = []
    p = 0
    while p * dim < out_dim:
        if p % 2 == 0:
            x = p * dim + x_min
        else:
            x = (p + 1) * dim - (x_min + extent)
        if x + extent <= out_dim:
            positions.append(x)
        p += 1
    return positions


def _mirrored_boxes(boxes: list[BBox], width: int, height: int, out_w: int, out_h: int) -> list[BBox]:
    out = []
    for box in boxes:
        xs = _mirror_positions(box.x_min, box.width, width, out_w)
        ys = _mirror_positions(box.y_min, box.height, height, out_h)
        for y in ys:
            for x in xs:
                out.append(BBox(x, y, box.width, box.height, box.class_id))
    return out


def mirror_expand(ann: AnnotatedPatch, out_w: int, out_h: int) -> AnnotatedPatch:
    """Extend a patch by reflect-tiling its own pixels.

    Every source box spawns one copy per reflection panel; copies are
    kept only when fully inside the output. Reflecting the output's
    second panel back recovers the source exactly.
    """
    if out_w < ann.width or out_h < ann.height:
        raise ContractError(
            f"mirror_expand output {out_w}x{out_h} smaller than input {ann.width}x{ann.height}"
        )
    pixels = np.pad(
        ann.patch.pixels,
        ((0, out_h - ann.height), (0, out_w - ann.width), (0, 0)),
        mode="symmetric",
    )
    boxes = _mirrored_boxes(ann.boxes, ann.width, ann.height, out_w, out_h)
    return AnnotatedPatch(
        patch=PixelPatch(pixels, mpp=ann.patch.mpp),
        boxes=boxes,
        source_id=ann.source_id,
        origin=ann.origin,
    )


def _rect_overlaps_box(x: float, y: float, w: float, h: float, box: BBox) -> bool:
    return x < box.x_max and x + w > box.x_min and y < box.y_max and y + h > box.y_min


def _augment_crop(crop: np.ndarray, params: AugmentParams) -> np.ndarray:
    out = crop
    if params.rotation:
        out = np.rot90(out, k=params.rotation // 90)
    if params.blur_sigma > 0:
        blurred = gaussian_filter(
            out.astype(np.float64), (params.blur_sigma, params.blur_sigma, 0.0)
        )
        out = np.clip(np.rint(blurred), 0, 255).astype(np.uint8)
    if any(params.color_shift):
        shifted = out.astype(np.int16) + np.asarray(params.color_shift, dtype=np.int16)
        out = np.clip(shifted, 0, 255).astype(np.uint8)
    return out


def _feather_alpha(h: int, w: int, feather_px: int) -> np.ndarray:
    if feather_px <= 0:
        return np.ones((h, w, 1))
    ys = np.minimum(np.arange(h), np.arange(h)[::-1])
    xs = np.minimum(np.arange(w), np.arange(w)[::-1])
    dist = np.minimum(ys[:, None], xs[None, :])
    alpha = np.minimum(1.0, (dist + 1.0) / (feather_px + 1.0))
    return alpha[:, :, None]


def paste_crop(
    canvas: AnnotatedPatch,
    donor: AnnotatedPatch,
    donor_rect: tuple[int, int, int, int],
    dest: tuple[int, int],
    params: AugmentParams,
    feather_px: int = 0,
) -> AnnotatedPatch:
    """Composite a background-only donor crop onto the canvas in place.

    The crop is augmented per params and alpha-feathered over feather_px
    at its border; no boxes are added. Crops that touch any donor box
    are refused, this keeps pasted background free of unlabeled cells.
    """
    rx, ry, rw, rh = donor_rect
    if rx < 0 or ry < 0 or rx + rw > donor.width or ry + rh > donor.height:
        raise ContractError(f"donor rect {donor_rect} outside donor {donor.width}x{donor.height}")
    for box in donor.boxes:
        if _rect_overlaps_box(rx, ry, rw, rh, box):
            raise ContractError(f"donor rect {donor_rect} overlaps annotated box {box}")
    crop = _augment_crop(donor.patch.pixels[ry : ry + rh, rx : rx + rw], params)
    dx, dy = dest
    ch, cw = crop.shape[:2]
    if dx < 0 or dy < 0 or dx + cw > canvas.width or dy + ch > canvas.height:
        raise ContractError(f"dest region {dest} + {cw}x{ch} outside canvas")
    alpha = _feather_alpha(ch, cw, feather_px)
    base = canvas.patch.pixels[dy : dy + ch, dx : dx + cw].astype(np.float64)
    blended = alpha * crop.astype(np.float64) + (1.0 - alpha) * base
    canvas.patch.pixels[dy : dy + ch, dx : dx + cw] = np.clip(np.rint(blended), 0, 255).astype(
        np.uint8
    )
    return canvas


def transplant_cell(
    canvas: AnnotatedPatch,
    donor: AnnotatedPatch,
    donor_box: BBox,
    dest: tuple[int, int],
) -> tuple[AnnotatedPatch, TransplantRecord]:
    """Copy one donor cell rectangle verbatim and annotate it.

    No augmentation and no feathering, so the output rectangle stays
    bit-identical to the donor. Placements overlapping existing boxes
    beyond IoU 0.1 are rejected for the caller to retry.
    """
    ix = int(round(donor_box.x_min))
    iy = int(round(donor_box.y_min))
    iw = max(1, int(round(donor_box.width)))
    ih = max(1, int(round(donor_box.height)))
    if ix + iw > donor.width or iy + ih > donor.height:
        raise ContractError(f"donor box {donor_box} outside donor raster")
    dx, dy = dest
    if dx < 0 or dy < 0 or dx + iw > canvas.width or dy + ih > canvas.height:
        raise ContractError(f"dest {dest} + {iw}x{ih} outside canvas")
    new_box = BBox(float(dx), float(dy), float(iw), float(ih), donor_box.class_id)
    for existing in canvas.boxes:
        if new_box.iou(existing) > TRANSPLANT_IOU_LIMIT:
            raise PlacementRejected(
                f"dest box IoU {new_box.iou(existing):.3f} with existing box exceeds "
                f"{TRANSPLANT_IOU_LIMIT}"
            )
    cell = donor.patch.pixels[iy : iy + ih, ix : ix + iw].copy()
    canvas.patch.pixels[dy : dy + ih, dx : dx + iw] = cell
    canvas.boxes.append(new_box)
    record = TransplantRecord(
        dest_x=dx,
        dest_y=dy,
        width=iw,
        height=ih,
        donor_source_id=donor.source_id,
        donor_pixels=cell,
    )
    return canvas, record


def gray_pad(ann: AnnotatedPatch, target_size: int = DEFAULT_TARGET_SIZE) -> AnnotatedPatch:
    """Center the patch on a uniform gray letterbox canvas."""
    if ann.width > target_size or ann.height > target_size:
        raise ContractError(
            f"gray_pad requires dims <= {target_size}, got {ann.width}x{ann.height}"
        )
    off_x = (target_size - ann.width) // 2
    off_y = (target_size - ann.height) // 2
    canvas = np.full((target_size, target_size, 3), GRAY_FILL, dtype=np.uint8)
    canvas[off_y : off_y + ann.height, off_x : off_x + ann.width] = ann.patch.pixels
    return AnnotatedPatch(
        patch=PixelPatch(canvas, mpp=ann.patch.mpp),
        boxes=[b.translate(off_x, off_y) for b in ann.boxes],
        source_id=ann.source_id,
        origin=ann.origin,
    )


def _fill_cells(mirror_w: int, mirror_h: int, target: int, cell: int) -> list[tuple[int, int, int, int]]:
    """Grid the area outside the mirrored region into paste cells.

    The uncovered area is an L shape: a full-height band right of the
    mirrored content plus a band below it.
    """

    def split(start: int, stop: int) -> list[tuple[int, int]]:
        spans = []
        pos = start
        while pos < stop:
            size = min(cell, stop - pos)
            spans.append((pos, size))
            pos += size
        return spans

    cells = []
    for y0, ch in split(0, target):
        for x0, cw in split(mirror_w, target):
            cells.append((x0, y0, cw, ch))
    for y0, ch in split(mirror_h, target):
        for x0, cw in split(0, mirror_w):
            cells.append((x0, y0, cw, ch))
    return cells


def _draw_params(rng: RngStream) -> AugmentParams:
    return AugmentParams(
        rotation=rng.choice((0, 90, 180, 270)),
        blur_sigma=rng.uniform(0.0, MAX_BLUR_SIGMA),
        color_shift=(
            rng.randint(-MAX_COLOR_SHIFT, MAX_COLOR_SHIFT),
            rng.randint(-MAX_COLOR_SHIFT, MAX_COLOR_SHIFT),
            rng.randint(-MAX_COLOR_SHIFT, MAX_COLOR_SHIFT),
        ),
    )


def _find_background_rect(
    donor: AnnotatedPatch, w: int, h: int, rng: RngStream, attempts: int
) -> tuple[int, int] | None:
    if donor.width < w or donor.height < h:
        return None
    for _ in range(attempts):
        x = rng.randint(0, donor.width - w)
        y = rng.randint(0, donor.height - h)
        if not any(_rect_overlaps_box(x, y, w, h, box) for box in donor.boxes):
            return x, y
    return None


def stretch_compose(
    ann: AnnotatedPatch,
    pool: DonorPool,
    rng: RngStream,
    config: StretchConfig | None = None,
) -> StretchOutcome:
    """Grow a small patch to target size: mirror, donor-fill, transplant.

    Step 1 reflect-tiles the patch to min(2*dim - 1, target) per axis,
    keeping mirrored box copies that land fully inside that extent.
    Step 2 covers the rest of the canvas with augmented background crops
    from the donors nearest in mean RGB. Step 3 transplants a Poisson
    number of donor cells (capped) into the donor-filled area only, so
    the mirrored region stays an exact reflection of the source.
    Deterministic given (patch, pool order, rng state).
    """
    config = config or StretchConfig()
    target = config.target_size
    if ann.width > target or ann.height > target:
        raise ContractError(f"stretch requires dims <= {target}, got {ann.width}x{ann.height}")
    if len(pool) == 0:
        raise ContractError(
            "donor pool is empty; stretch composition needs donor patches "
            "(use the gray-padded variant for pool-free curation)"
        )
    donors = pool.nearest_to(ann.patch.pixels, exclude_source_id=ann.source_id)
    if not donors:
        raise ContractError(
            f"no donor candidates besides {ann.source_id!r} itself; "
            "use the gray-padded variant for single-patch datasets"
        )

    w, h = ann.width, ann.height
    mirror_w = min(2 * w - 1, target)
    mirror_h = min(2 * h - 1, target)

    pixels = np.pad(
        ann.patch.pixels, ((0, target - h), (0, target - w), (0, 0)), mode="symmetric"
    )
    boxes = _mirrored_boxes(ann.boxes, w, h, mirror_w, mirror_h)
    canvas = AnnotatedPatch(
        patch=PixelPatch(np.ascontiguousarray(pixels), mpp=ann.patch.mpp),
        boxes=boxes,
        source_id=ann.source_id,
        origin=ann.origin,
    )

    paste_count = 0
    for x0, y0, cw, ch in _fill_cells(mirror_w, mirror_h, target, config.fill_cell):
        params = _draw_params(rng)
        need_w, need_h = (cw, ch) if params.rotation in (0, 180) else (ch, cw)
        placed = False
        for donor in donors:
            found = _find_background_rect(donor.patch, need_w, need_h, rng, config.max_attempts)
            if found is None:
                continue
            paste_crop(
                canvas,
                donor.patch,
                (found[0], found[1], need_w, need_h),
                (x0, y0),
                params,
                feather_px=config.feather_px,
            )
            paste_count += 1
            placed = True
            break
        if not placed:
            raise ContractError(
                f"no donor offers a {need_w}x{need_h} background crop for patch "
                f"{ann.source_id!r}; donor pool too small or too dense"
            )

    transplants: list[TransplantRecord] = []
    has_band = mirror_w < target or mirror_h < target
    cell_donors = [d for d in donors if d.patch.boxes]
    if has_band and cell_donors:
        n_cells = min(config.max_cells, rng.poisson(config.cell_rate))
        for _ in range(n_cells):
            for _ in range(config.max_attempts):
                donor = rng.choice(cell_donors)
                donor_box = rng.choice(donor.patch.boxes)
                iw = max(1, int(round(donor_box.width)))
                ih = max(1, int(round(donor_box.height)))
                if iw > target or ih > target:
                    continue
                dx = rng.randint(0, target - iw)
                dy = rng.randint(0, target - ih)
                if dx < mirror_w and dy < mirror_h:
                    continue  # would overwrite mirrored source content
                if any(
                    dx < t.dest_x + t.width
                    and dx + iw > t.dest_x
                    and dy < t.dest_y + t.height
                    and dy + ih > t.dest_y
                    for t in transplants
                ):
                    continue  # pixel overlap would break the verbatim-copy audit
                try:
                    _, record = transplant_cell(canvas, donor.patch, donor_box, (dx, dy))
                except PlacementRejected:
                    continue
                transplants.append(record)
                break

    return StretchOutcome(patch=canvas, transplants=transplants, paste_count=paste_count)
