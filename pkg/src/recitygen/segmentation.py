"""Click-driven fallback segmenter: color region growing with exclude barriers.

This keeps the platform fully runnable offline. Include clicks seed a
4-connected region grow over pixels whose color is close to the mean seed
color; exclude clicks stamp hard square barriers the region may never enter.
Three nested candidates come from a tolerance ladder (t/2, t, 2t), tightest
first; identical inputs always yield byte-identical outputs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .images import ImageBuffer
from .masks import FOUR_CONNECTED, BinaryMask


class Polarity(enum.Enum):
    INCLUDE = "include"
    EXCLUDE = "exclude"


@dataclass(frozen=True)
class ClickPoint:
    x: int
    y: int
    polarity: Polarity


@dataclass(frozen=True)
class MaskCandidate:
    mask: BinaryMask
    score: float


@dataclass(frozen=True)
class SegmentationParams:
    tolerance: int = 32        # per-channel color distance, 0..255
    barrier_radius: int = 5    # Chebyshev radius stamped around exclude clicks

    def __post_init__(self) -> None:
        if not 0 <= self.tolerance <= 255:
            raise ValueError(f"tolerance {self.tolerance} out of 0..255")
        if self.barrier_radius < 0:
            raise ValueError("barrier_radius must be >= 0")


class SegmentationError(Exception):
    pass


class NoIncludeClick(SegmentationError):
    pass


class ClickOutOfBounds(SegmentationError):
    pass


class IncludeInsideBarrier(SegmentationError):
    pass


def sort_candidates(candidates: list[MaskCandidate]) -> list[MaskCandidate]:
    """Score descending; ties broken by smaller mask population first."""
    return sorted(candidates, key=lambda c: (-c.score, c.mask.population))


def _barrier_map(shape: tuple[int, int], excludes: list[ClickPoint], radius: int) -> np.ndarray:
    barrier = np.zeros(shape, dtype=bool)
    h, w = shape
    for click in excludes:
        y0, y1 = max(0, click.y - radius), min(h, click.y + radius + 1)
        x0, x1 = max(0, click.x - radius), min(w, click.x + radius + 1)
        barrier[y0:y1, x0:x1] = True
    return barrier


def _grow(joinable: np.ndarray, seeds: list[ClickPoint]) -> np.ndarray:
    """Region reachable from the seeds: every seed pixel unconditionally, plus
    each joinable 4-connected component touching a seed or its 4-neighbors."""
    labels, count = ndimage.label(joinable, structure=FOUR_CONNECTED)
    region = np.zeros(joinable.shape, dtype=bool)
    h, w = joinable.shape
    wanted: set[int] = set()
    for seed in seeds:
        region[seed.y, seed.x] = True
        for y, x in (
            (seed.y, seed.x),
            (seed.y - 1, seed.x),
            (seed.y + 1, seed.x),
            (seed.y, seed.x - 1),
            (seed.y, seed.x + 1),
        ):
            if 0 <= y < h and 0 <= x < w and labels[y, x] != 0:
                wanted.add(int(labels[y, x]))
    if wanted:
        region |= np.isin(labels, sorted(wanted))
    return region


def fallback_segment(
    image: ImageBuffer,
    clicks: list[ClickPoint],
    params: SegmentationParams | None = None,
) -> list[MaskCandidate]:
    """Produce 1..3 nested mask candidates for a click set.

    Candidates are grown at thresholds tolerance/2, tolerance and 2*tolerance
    (duplicates collapsed), scored 1 - t/256 so the tightest mask sorts first.
    Every include pixel is in every candidate; nothing within barrier_radius
    of an exclude click is ever included.
    """
    if params is None:
        params = SegmentationParams()

    for click in clicks:
        if not (0 <= click.x < image.width and 0 <= click.y < image.height):
            raise ClickOutOfBounds(
                f"click ({click.x},{click.y}) outside {image.width}x{image.height}"
            )
    includes = [c for c in clicks if c.polarity is Polarity.INCLUDE]
    excludes = [c for c in clicks if c.polarity is Polarity.EXCLUDE]
    if not includes:
        raise NoIncludeClick("at least one include click is required")

    barrier = _barrier_map((image.height, image.width), excludes, params.barrier_radius)
    for seed in includes:
        if barrier[seed.y, seed.x]:
            raise IncludeInsideBarrier(
                f"include click ({seed.x},{seed.y}) lies within "
                f"{params.barrier_radius}px of an exclude click"
            )

    seed_colors = np.stack([image.pixels[c.y, c.x] for c in includes]).astype(np.float64)
    mean_color = seed_colors.mean(axis=0)
    distance = np.max(np.abs(image.pixels.astype(np.float64) - mean_color), axis=2)

    candidates: list[MaskCandidate] = []
    for t in (params.tolerance / 2.0, float(params.tolerance), 2.0 * params.tolerance):
        joinable = (distance <= t) & ~barrier
        mask = BinaryMask(_grow(joinable, includes))
        if any(mask == c.mask for c in candidates):
            continue
        candidates.append(MaskCandidate(mask=mask, score=1.0 - t / 256.0))
    return candidates
