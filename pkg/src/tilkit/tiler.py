"""Slice large patches into target-size tiles, keeping complete boxes only.

Stride equals the tile size (no systematic overlap); when a dimension is
not an exact multiple one extra edge-aligned window rescues boxes near
the far border. Boxes straddling a window edge are dropped from that
window and the drop is counted for the manifest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tilkit.errors import ContractError
from tilkit.router import DEFAULT_TARGET_SIZE
from tilkit.types import AnnotatedPatch, BBox, PixelPatch

GRAY_FILL = 114


@dataclass(frozen=True)
class TileWindow:
    x0: int
    y0: int
    size: int


@dataclass
class Tile:
    patch: AnnotatedPatch
    dropped_box_count: int


def _axis_offsets(dim: int, target: int) -> list[int]:
    offsets = list(range(0, dim - target + 1, target))
    if dim % target != 0:
        offsets.append(dim - target)
    return sorted(set(offsets))


def plan_windows(width: int, height: int, target_size: int) -> list[TileWindow]:
    """Row-major, duplicate-free window grid covering the raster."""
    if width < target_size or height < target_size:
        raise ContractError(
            f"plan_windows needs both dims >= {target_size} (pad the short axis first), "
            f"got {width}x{height}"
        )
    xs = _axis_offsets(width, target_size)
    ys = _axis_offsets(height, target_size)
    return [TileWindow(x, y, target_size) for y in ys for x in xs]


def clip_and_assign(window: TileWindow, boxes: list[BBox]) -> tuple[list[BBox], int]:
    """Keep boxes fully inside the window, translated to window coords.

    Returns (kept, dropped); dropped counts boxes that intersect the
    window without being contained. Boxes fully outside are neither.
    """
    kept: list[BBox] = []
    dropped = 0
    x1, y1 = window.x0 + window.size, window.y0 + window.size
    for box in boxes:
        contained = (
            box.x_min >= window.x0 and box.y_min >= window.y0 and box.x_max <= x1 and box.y_max <= y1
        )
        if contained:
            kept.append(box.translate(-window.x0, -window.y0))
            continue
        intersects = box.x_min < x1 and box.x_max > window.x0 and box.y_min < y1 and box.y_max > window.y0
        if intersects:
            dropped += 1
    return kept, dropped


def pad_short_axis(pixels: np.ndarray, target_size: int, mode: str = "mirror") -> np.ndarray:
    """Extend any axis shorter than target_size at the bottom/right.

    mode "mirror" reflects existing content (edge pixel included);
    mode "gray" fills with the uniform letterbox value.
    """
    h, w = pixels.shape[:2]
    pad_h = max(0, target_size - h)
    pad_w = max(0, target_size - w)
    if pad_h == 0 and pad_w == 0:
        return pixels
    widths = ((0, pad_h), (0, pad_w), (0, 0))
    if mode == "mirror":
        return np.pad(pixels, widths, mode="symmetric")
    if mode == "gray":
        return np.pad(pixels, widths, mode="constant", constant_values=GRAY_FILL)
    raise ContractError(f"unknown pad mode {mode!r}")


def tile(
    ann: AnnotatedPatch, target_size: int = DEFAULT_TARGET_SIZE, pad_mode: str = "mirror"
) -> list[Tile]:
    """Cut one annotated patch into target x target tiles.

    The short axis, if any, is padded first; padding synthesizes pixels
    only, no box annotations are mirrored into the band. Tile origins
    are window offsets, so adding the origin to a kept box reproduces
    the source box exactly.
    """
    if max(ann.width, ann.height) < target_size:
        raise ContractError(
            f"tile() requires max dim >= {target_size}, got {ann.width}x{ann.height}"
        )
    padded = pad_short_axis(ann.patch.pixels, target_size, mode=pad_mode)
    windows = plan_windows(padded.shape[1], padded.shape[0], target_size)
    tiles = []
    for win in windows:
        kept, dropped = clip_and_assign(win, ann.boxes)
        raster = np.ascontiguousarray(
            padded[win.y0 : win.y0 + target_size, win.x0 : win.x0 + target_size]
        )
        tiles.append(
            Tile(
                patch=AnnotatedPatch(
                    patch=PixelPatch(raster, mpp=ann.patch.mpp),
                    boxes=kept,
                    source_id=ann.source_id,
                    origin=(ann.origin[0] + win.x0, ann.origin[1] + win.y0),
                ),
                dropped_box_count=dropped,
            )
        )
    return tiles
