from __future__ import annotations

import numpy as np
import pytest

from tilkit.types import AnnotatedPatch, BBox, PixelPatch


def textured_pixels(width: int, height: int) -> np.ndarray:
    """Raster where every pixel value encodes its position, so any
    reflection or translation mistake shows up as a value mismatch."""
    yy, xx = np.mgrid[0:height, 0:width]
    r = (yy * 7 + xx * 13) % 256
    g = (yy * 3 + xx * 5 + 17) % 256
    b = (yy + xx * 11 + 101) % 256
    return np.stack([r, g, b], axis=-1).astype(np.uint8)


def make_patch(
    width: int,
    height: int,
    boxes: list[BBox] | None = None,
    source_id: str = "src",
    fill: tuple[int, int, int] | None = None,
) -> AnnotatedPatch:
    if fill is None:
        pixels = textured_pixels(width, height)
    else:
        pixels = np.full((height, width, 3), fill, dtype=np.uint8)
    return AnnotatedPatch(
        patch=PixelPatch(pixels), boxes=list(boxes or []), source_id=source_id
    )


@pytest.fixture
def tmp_out(tmp_path):
    return tmp_path
