"""Core domain types: rasters, boxes, annotated patches, detections."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from tilkit.errors import ContractError

DEFAULT_MPP = 0.5  # microns per pixel, overridable everywhere it matters


@dataclass(eq=False)
class PixelPatch:
    """Owned 8-bit RGB raster with a micron-per-pixel scale.

    pixels has shape (height, width, 3), dtype uint8, row-major.
    """

    pixels: np.ndarray
    mpp: float = DEFAULT_MPP

    def __post_init__(self) -> None:
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ContractError(f"expected (h, w, 3) RGB raster, got shape {self.pixels.shape}")
        if self.pixels.dtype != np.uint8:
            raise ContractError(f"expected uint8 samples, got {self.pixels.dtype}")
        if self.width < 1 or self.height < 1:
            raise ContractError("raster must have at least one pixel per axis")
        if not self.mpp > 0:
            raise ContractError(f"mpp must be positive, got {self.mpp}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def same_pixels(self, other: "PixelPatch") -> bool:
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in patch pixel coordinates, COCO style (x, y, w, h)."""

    x_min: float
    y_min: float
    width: float
    height: float
    class_id: int = 0

    def __post_init__(self) -> None:
        if self.x_min < 0 or self.y_min < 0:
            raise ContractError(f"box origin must be non-negative, got ({self.x_min}, {self.y_min})")
        if self.width <= 0 or self.height <= 0:
            raise ContractError(f"box extents must be positive, got {self.width}x{self.height}")

    @property
    def x_max(self) -> float:
        return self.x_min + self.width

    @property
    def y_max(self) -> float:
        return self.y_min + self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x_min + self.width / 2, self.y_min + self.height / 2)

    @property
    def area(self) -> float:
        return self.width * self.height

    def translate(self, dx: float, dy: float) -> "BBox":
        return replace(self, x_min=self.x_min + dx, y_min=self.y_min + dy)

    def fits_in(self, width: float, height: float) -> bool:
        return self.x_max <= width and self.y_max <= height

    def iou(self, other: "BBox") -> float:
        ix = min(self.x_max, other.x_max) - max(self.x_min, other.x_min)
        iy = min(self.y_max, other.y_max) - max(self.y_min, other.y_min)
        if ix <= 0 or iy <= 0:
            return 0.0
        inter = ix * iy
        return inter / (self.area + other.area - inter)


@dataclass(eq=False)
class AnnotatedPatch:
    """A raster plus its lymphocyte boxes and provenance.

    origin is the offset of this patch in source coordinates;
    (0, 0) for original, un-tiled patches.
    """

    patch: PixelPatch
    boxes: list[BBox] = field(default_factory=list)
    source_id: str = ""
    origin: tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        for box in self.boxes:
            if not box.fits_in(self.patch.width, self.patch.height):
                raise ContractError(
                    f"box {box} exceeds patch bounds "
                    f"{self.patch.width}x{self.patch.height} (source {self.source_id!r})"
                )

    @property
    def width(self) -> int:
        return self.patch.width

    @property
    def height(self) -> int:
        return self.patch.height


@dataclass(frozen=True)
class Detection:
    """Predicted box with confidence, center parameterized.

    frame tags whether coordinates are patch-local or slide-global.
    """

    cx: float
    cy: float
    width: float
    height: float
    confidence: float
    frame: str = "patch"

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ContractError(f"confidence must be in [0, 1], got {self.confidence}")
        if self.width <= 0 or self.height <= 0:
            raise ContractError(f"detection extents must be positive, got {self.width}x{self.height}")
