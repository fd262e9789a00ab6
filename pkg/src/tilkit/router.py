"""Size-based routing of source patches: pass through, tile, or stretch."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from tilkit.errors import ContractError

DEFAULT_TARGET_SIZE = 256


class Route(enum.Enum):
    PASS_THROUGH = "passthrough"
    TILE = "tile"
    STRETCH = "stretch"


@dataclass(frozen=True)
class RouterDecision:
    route: Route
    max_dim: int


def max_dim(width: int, height: int) -> int:
    return max(width, height)


def route(width: int, height: int, target_size: int = DEFAULT_TARGET_SIZE) -> RouterDecision:
    """Pure size rule: exact-size patches pass through, larger ones are
    tiled, smaller ones are stretch-upsampled. Mixed patches (one axis
    over target, the other under) go to the tiler, which pads the short
    axis before windowing."""
    if target_size < 1:
        raise ContractError(f"target_size must be >= 1, got {target_size}")
    m = max_dim(width, height)
    if width == height == target_size:
        return RouterDecision(Route.PASS_THROUGH, m)
    if m >= target_size:
        return RouterDecision(Route.TILE, m)
    return RouterDecision(Route.STRETCH, m)


@dataclass
class SizeHistogram:
    bin_width: int
    counts: list[int]
    min_size: int | None
    max_size: int | None

    def to_csv(self) -> str:
        lines = ["bin_start,count\n"]
        for i, count in enumerate(self.counts):
            lines.append(f"{i * self.bin_width},{count}\n")
        return "".join(lines)


def histogram(sizes: list[int], bin_width: int) -> SizeHistogram:
    """Bin sizes into [i*bin, (i+1)*bin) buckets; a boundary value lands
    in the upper bin."""
    if bin_width < 1:
        raise ContractError(f"bin_width must be >= 1, got {bin_width}")
    if not sizes:
        return SizeHistogram(bin_width, [], None, None)
    top_bin = max(sizes) // bin_width
    counts = [0] * (top_bin + 1)
    for s in sizes:
        counts[s // bin_width] += 1
    return SizeHistogram(bin_width, counts, min(sizes), max(sizes))
