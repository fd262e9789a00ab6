"""Synthetic annotated patches and detection sets for pipeline tests.

Patches imitate H&E texture just enough to exercise the pipeline: a
low-frequency pink background with dark-purple elliptical pseudo-cells.
Detection sets are generated with controlled hit rates so downstream
metrics have known values. Not a realism claim.
"""

from __future__ import annotations

import numpy as np

from tilkit.errors import ContractError
from tilkit.froc import area_mm2
from tilkit.rng import RngStream
from tilkit.types import DEFAULT_MPP, AnnotatedPatch, BBox, Detection, PixelPatch

BASE_TONE = (214, 168, 188)  # pale eosin pink
TONE_SPREAD = 28
CELL_TONE = (94, 52, 124)  # hematoxylin purple
PLACEMENT_ATTEMPTS = 50
PLACEMENT_IOU_LIMIT = 0.1


def _noise_grid(rng: RngStream, cells_y: int, cells_x: int) -> np.ndarray:
    grid = np.empty((cells_y, cells_x, 3))
    for y in range(cells_y):
        for x in range(cells_x):
            for c in range(3):
                grid[y, x, c] = rng.uniform(-TONE_SPREAD, TONE_SPREAD)
    return grid


def _interp_axis(arr: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = arr.shape[axis]
    if n_in == 1:
        reps = [1] * arr.ndim
        reps[axis] = n_out
        return np.tile(arr, reps)
    pos = np.linspace(0, n_in - 1, n_out)
    i0 = np.minimum(pos.astype(int), n_in - 2)
    frac = pos - i0
    shape = [1] * arr.ndim
    shape[axis] = n_out
    f = frac.reshape(shape)
    a = np.take(arr, i0, axis=axis)
    b = np.take(arr, i0 + 1, axis=axis)
    return a * (1 - f) + b * f


def _bilinear_upsample(grid: np.ndarray, height: int, width: int) -> np.ndarray:
    # separable: stretch the coarse axis first, full-size blend runs once
    return _interp_axis(_interp_axis(grid, height, 0), width, 1)


def gen_patch(
    rng: RngStream,
    width: int,
    height: int,
    n_cells: int,
    cell_radius_range: tuple[int, int] = (4, 10),
    mpp: float = DEFAULT_MPP,
    source_id: str = "synthetic",
) -> AnnotatedPatch:
    """Textured background with n_cells pseudo-cells and their GT boxes.

    Cell boxes keep pairwise IoU <= 0.1; each placement gets a bounded
    number of rejection attempts before the whole patch is declared
    unplaceable.
    """
    r_lo, r_hi = cell_radius_range
    if r_lo < 1 or r_hi < r_lo:
        raise ContractError(f"bad cell radius range {cell_radius_range}")

    grid = _noise_grid(rng, max(2, height // 32 + 1), max(2, width // 32 + 1))
    noise = _bilinear_upsample(grid, height, width)
    pixels = np.clip(np.rint(np.asarray(BASE_TONE) + noise), 0, 255).astype(np.uint8)

    boxes: list[BBox] = []
    for _ in range(n_cells):
        for attempt in range(PLACEMENT_ATTEMPTS + 1):
            if attempt == PLACEMENT_ATTEMPTS:
                raise ContractError(
                    f"could not place {n_cells} cells in a {width}x{height} patch "
                    f"within {PLACEMENT_ATTEMPTS} attempts; use fewer cells"
                )
            rx = rng.randint(r_lo, min(r_hi, max(r_lo, width // 2 - 1)))
            ry = rng.randint(r_lo, min(r_hi, max(r_lo, height // 2 - 1)))
            cx = rng.randint(rx, width - rx)
            cy = rng.randint(ry, height - ry)
            box = BBox(float(cx - rx), float(cy - ry), float(2 * rx), float(2 * ry))
            if all(box.iou(existing) <= PLACEMENT_IOU_LIMIT for existing in boxes):
                break
        shade = rng.randint(-18, 18)
        tone = np.clip(np.asarray(CELL_TONE) + shade, 0, 255).astype(np.uint8)
        # rasterize the ellipse inside its bounding box only; strict
        # inequality keeps the extreme pixels within the box extents
        yy, xx = np.mgrid[cy - ry : cy + ry, cx - rx : cx + rx]
        local = pixels[cy - ry : cy + ry, cx - rx : cx + rx]
        mask = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 < 1.0
        local[mask] = tone
        boxes.append(box)

    return AnnotatedPatch(
        patch=PixelPatch(pixels, mpp=mpp), boxes=boxes, source_id=source_id, origin=(0, 0)
    )


def gen_detections(
    gt: list[BBox],
    tp_rate: float,
    fp_per_mm2: float,
    area: float,
    jitter_px: float,
    rng: RngStream,
    width: int = 256,
    height: int = 256,
) -> list[Detection]:
    """Detections with known TP/FP structure for metric tests.

    Each GT box is detected independently with probability tp_rate, its
    center jittered uniformly within +-jitter_px per axis, confidence in
    [0.5, 1); false detections arrive Poisson(fp_per_mm2 * area) at
    uniform positions with confidence in [0, 0.5). The confidence split
    makes synthetic FROC curves strictly informative.
    """
    if not 0.0 <= tp_rate <= 1.0:
        raise ContractError(f"tp_rate must be in [0, 1], got {tp_rate}")
    dets: list[Detection] = []
    for box in gt:
        if rng.u01() < tp_rate:
            cx, cy = box.center
            dets.append(
                Detection(
                    cx=cx + rng.uniform(-jitter_px, jitter_px),
                    cy=cy + rng.uniform(-jitter_px, jitter_px),
                    width=box.width,
                    height=box.height,
                    confidence=rng.uniform(0.5, 1.0),
                )
            )
    n_fp = rng.poisson(fp_per_mm2 * area)
    for _ in range(n_fp):
        dets.append(
            Detection(
                cx=rng.uniform(0, width),
                cy=rng.uniform(0, height),
                width=float(rng.randint(8, 20)),
                height=float(rng.randint(8, 20)),
                confidence=rng.uniform(0.0, 0.5),
            )
        )
    return dets


def patch_area_mm2(patch: AnnotatedPatch) -> float:
    return area_mm2(patch.width, patch.height, patch.patch.mpp)
