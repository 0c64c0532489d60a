"""Binary mask algebra, morphology, feathering, and the RLE codec.

Masks are row-major boolean grids. All functions are pure: inputs are never
mutated (arrays are frozen on construction) and identical inputs always
produce identical outputs, so everything here is safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

# 4-neighborhood everywhere: no diagonal leakage in segmentation or labeling.
FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)

MAX_SIDE = 8192


class MaskError(Exception):
    pass


class DimensionMismatch(MaskError):
    pass


class RleDecodeError(MaskError):
    pass


class RunSumMismatch(RleDecodeError):
    pass


class IllegalZeroRun(RleDecodeError):
    pass


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Per-pixel 0/1 selection over an image grid, shape (height, width)."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {bits.shape}")
        h, w = bits.shape
        if not (1 <= w <= MAX_SIDE and 1 <= h <= MAX_SIDE):
            raise ValueError(f"mask dimensions {w}x{h} out of range")
        object.__setattr__(self, "bits", _freeze(bits.astype(bool)))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def population(self) -> int:
        """Number of set pixels."""
        return int(np.count_nonzero(self.bits))

    @classmethod
    def zeros(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def full(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.ones((height, width), dtype=bool))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(
            np.array_equal(self.bits, other.bits)
        )

    def __hash__(self) -> int:
        return hash((self.bits.shape, self.bits.tobytes()))

    def is_subset_of(self, other: "BinaryMask") -> bool:
        _check_dims(self, other)
        return bool(np.all(other.bits[self.bits]))


@dataclass(frozen=True, eq=False)
class AlphaMask:
    """Per-pixel 0..255 weight, shape (height, width); 0 means untouched."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise ValueError(f"alpha mask must be 2-D, got shape {values.shape}")
        if values.dtype != np.uint8:
            if values.min(initial=0) < 0 or values.max(initial=0) > 255:
                raise ValueError("alpha values out of 0..255")
            values = values.astype(np.uint8)
        object.__setattr__(self, "values", _freeze(values))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AlphaMask):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(
            np.array_equal(self.values, other.values)
        )

    def __hash__(self) -> int:
        return hash((self.values.shape, self.values.tobytes()))


def _check_dims(a: BinaryMask, b: BinaryMask) -> None:
    if a.bits.shape != b.bits.shape:
        raise DimensionMismatch(
            f"mask dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def mask_union(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    """Bitwise OR of two equally sized masks."""
    _check_dims(a, b)
    return BinaryMask(a.bits | b.bits)


def mask_intersect(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    """Bitwise AND of two equally sized masks."""
    _check_dims(a, b)
    return BinaryMask(a.bits & b.bits)


def mask_subtract(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    """Pixels of `a` not in `b` (a AND NOT b)."""
    _check_dims(a, b)
    return BinaryMask(a.bits & ~b.bits)


def mask_invert(a: BinaryMask) -> BinaryMask:
    """Bitwise NOT; an involution."""
    return BinaryMask(~a.bits)


def _square(k: int) -> np.ndarray:
    return np.ones((2 * k + 1, 2 * k + 1), dtype=bool)


def dilate(a: BinaryMask, k: int) -> BinaryMask:
    """Dilation by a square structuring element of side 2k+1 (Chebyshev ball)."""
    if k < 0:
        raise ValueError("radius must be >= 0")
    if k == 0 or not a.bits.any():
        return a
    return BinaryMask(ndimage.binary_dilation(a.bits, structure=_square(k)))


def erode(a: BinaryMask, k: int) -> BinaryMask:
    """Erosion by a square structuring element; pixels beyond the border count
    as unset, so the mask shrinks at the image edge."""
    if k < 0:
        raise ValueError("radius must be >= 0")
    if k == 0:
        return a
    return BinaryMask(ndimage.binary_erosion(a.bits, structure=_square(k), border_value=0))


def feather(a: BinaryMask, radius: int) -> AlphaMask:
    """Binary-to-alpha conversion with an outward linear ramp.

    Set pixels get alpha 255. An unset pixel at Chebyshev distance d from the
    nearest set pixel (1 <= d <= radius) gets round(255 * (1 - d/(radius+1))),
    rounding half up; everything farther out is 0. radius 0 yields a hard
    0/255 mask. The mask itself stays fully opaque; the ramp only extends
    outward.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    alpha = np.zeros(a.bits.shape, dtype=np.uint8)
    if not a.bits.any():
        return AlphaMask(alpha)
    alpha[a.bits] = 255
    if radius > 0:
        dist = ndimage.distance_transform_cdt(~a.bits, metric="chessboard")
        ring = (dist >= 1) & (dist <= radius)
        ramp = 255.0 * (1.0 - dist[ring] / (radius + 1.0))
        alpha[ring] = np.floor(ramp + 0.5).astype(np.uint8)
    return AlphaMask(alpha)


def rle_encode(a: BinaryMask) -> list[int]:
    """Run-length encode a mask: alternating run counts over the row-major
    scan, starting with the count of leading zeros (possibly 0)."""
    flat = a.bits.ravel()
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    edges = np.concatenate(([0], boundaries, [flat.size]))
    runs = np.diff(edges).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def rle_decode(runs: list[int], width: int, height: int) -> BinaryMask:
    """Inverse of rle_encode. Counts must be non-negative; only the first may
    be zero; counts must sum to width*height."""
    if width < 1 or height < 1:
        raise RleDecodeError(f"invalid dimensions {width}x{height}")
    total = 0
    for pos, count in enumerate(runs):
        if not isinstance(count, int) or isinstance(count, bool):
            raise RleDecodeError(f"run at position {pos} is not an integer")
        if count < 0:
            raise RleDecodeError(f"negative run {count} at position {pos}")
        if count == 0 and pos != 0:
            raise IllegalZeroRun(f"zero run at position {pos}")
        total += count
    if total != width * height:
        raise RunSumMismatch(f"runs sum to {total}, expected {width * height}")
    values = np.arange(len(runs), dtype=np.int64) % 2 == 1
    flat = np.repeat(values, runs)
    return BinaryMask(flat.reshape(height, width))


def connected_components(a: BinaryMask) -> list[BinaryMask]:
    """Split a mask into its 4-connected components, each as its own mask,
    ordered by the row-major position of the component's first set pixel.
    The outputs are pairwise disjoint and union back to the input."""
    labels, count = ndimage.label(a.bits, structure=FOUR_CONNECTED)
    if count == 0:
        return []
    flat = labels.ravel()
    unique, first_index = np.unique(flat, return_index=True)
    order = sorted(
        (int(idx), int(lbl)) for lbl, idx in zip(unique, first_index) if lbl != 0
    )
    return [BinaryMask(labels == lbl) for _, lbl in order]
