"""Refine raw detector outputs before scoring.

Three passes: drop boxes outside the plausible lymphocyte size band,
repair boxes truncated by a patch border, and stitch patch-local
detections into slide coordinates while de-duplicating cells seen by
two overlapping tiles.
"""

from __future__ import annotations

from dataclasses import replace

from tilkit.errors import ReferentialError
from tilkit.types import Detection

MIN_CELL_PX = 8
MAX_CELL_PX = 20
DEDUP_RADIUS = 4.0
BORDER_EPS = 0.5


def size_filter(
    dets: list[Detection], min_px: float = MIN_CELL_PX, max_px: float = MAX_CELL_PX
) -> list[Detection]:
    """Keep detections whose width and height both lie in [min_px, max_px]."""
    return [
        d for d in dets if min_px <= d.width <= max_px and min_px <= d.height <= max_px
    ]


def _axis_truncation(center: float, extent: float, limit: float, eps: float) -> int:
    """-1 truncated at the low border, +1 at the high border, 0 otherwise.

    A box touching both borders of one axis gives no usable signal and
    reports 0.
    """
    at_low = center - extent / 2 <= eps
    at_high = center + extent / 2 >= limit - eps
    if at_low == at_high:
        return 0
    return -1 if at_low else 1


def adjust_partial_centers(
    dets: list[Detection], patch_w: float, patch_h: float, border_eps: float = BORDER_EPS
) -> list[Detection]:
    """Repair boxes cut off by one patch border.

    Lymphocytes are roughly round, so a truncated extent is assumed to
    really be the other axis's extent: the truncated extent is replaced
    by it and the center shifts toward the border by half the missing
    length. Corner boxes (truncated on both axes) are left unchanged
    since neither axis provides a trustworthy full extent. Idempotent:
    after adjustment both extents are equal, so a second pass shifts by
    zero.
    """
    out = []
    for d in dets:
        x_sign = _axis_truncation(d.cx, d.width, patch_w, border_eps)
        y_sign = _axis_truncation(d.cy, d.height, patch_h, border_eps)
        if x_sign and y_sign:
            out.append(d)
            continue
        if x_sign:
            shift = (d.height - d.width) / 2
            out.append(replace(d, cx=d.cx + x_sign * shift, width=d.height))
        elif y_sign:
            shift = (d.width - d.height) / 2
            out.append(replace(d, cy=d.cy + y_sign * shift, height=d.width))
        else:
            out.append(d)
    return out


def to_global(
    tile_dets: list[tuple[str, list[Detection]]],
    origins: dict[str, tuple[int, int]],
    dedup_radius: float = DEDUP_RADIUS,
) -> list[Detection]:
    """Translate per-tile detections into slide coordinates and merge.

    Among detections from different tiles whose centers fall within
    dedup_radius of each other only the highest-confidence one survives;
    confidence ties go to the tile earliest in row-major origin order.
    """
    staged = []
    for seq, (tile_id, dets) in enumerate(tile_dets):
        if tile_id not in origins:
            raise ReferentialError(f"unknown tile origin for tile id {tile_id!r}")
        ox, oy = origins[tile_id]
        for d in dets:
            staged.append(
                (
                    -d.confidence,
                    oy,
                    ox,
                    seq,
                    tile_id,
                    replace(d, cx=d.cx + ox, cy=d.cy + oy, frame="slide"),
                )
            )
    staged.sort(key=lambda item: item[:4])
    kept: list[tuple[str, Detection]] = []
    r2 = dedup_radius * dedup_radius
    for *_, tile_id, det in staged:
        duplicate = any(
            other_tile != tile_id
            and (other.cx - det.cx) ** 2 + (other.cy - det.cy) ** 2 <= r2
            for other_tile, other in kept
        )
        if not duplicate:
            kept.append((tile_id, det))
    return [det for _, det in kept]
