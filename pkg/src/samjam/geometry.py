"""Binary mask and bounding-box arithmetic on a fixed frame grid.

Masks are stored run-length encoded: row-major, alternating
background/foreground run lengths, first run counting background pixels
(possibly zero). Every ratio is returned as an exact ``Fraction`` so
threshold comparisons reduce to integer cross-multiplication and can
never land on a float tie.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np


class GeometryError(ValueError):
    """Base class for mask/bbox arithmetic errors."""


class EmptyMaskError(GeometryError):
    """The operation needs a mask with at least one set pixel."""


class DimensionMismatchError(GeometryError):
    """Masks of different frame sizes were combined."""


class MalformedRleError(GeometryError):
    """Run lengths do not describe a valid bitmap."""


def as_fraction(value: int | float | str | Fraction) -> Fraction:
    """Exact ratio for a threshold-like value.

    Floats go through ``str()`` so that 0.1 means exactly 1/10 rather
    than the nearest binary float.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    return Fraction(str(value))


@dataclass(frozen=True, order=True)
class BBox:
    """Axis-aligned pixel box, inclusive min / exclusive max."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            value = getattr(self, name)
            if isinstance(value, (bool, float)) or not isinstance(value, (int, np.integer)):
                raise ValueError(f"bbox coordinate {name} must be an integer: {value!r}")
            object.__setattr__(self, name, int(value))
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if self.x_min < 0 or self.y_min < 0:
            raise ValueError(f"bbox coordinates must be non-negative: {coords}")
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ValueError(f"degenerate bbox: {coords}")

    @property
    def area(self) -> int:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class Mask:
    """Run-length encoded binary bitmap with an optional temporal ID.

    Canonical form: all run lengths positive except an optional single
    leading zero (used when the bitmap starts with a set pixel), and
    the runs sum to ``width * height``.
    """

    width: int
    height: int
    runs: tuple[int, ...]
    tid: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "runs", tuple(int(r) for r in self.runs))
        if self.width <= 0 or self.height <= 0:
            raise MalformedRleError(
                f"mask dimensions must be positive, got {self.width}x{self.height}"
            )
        if any(r < 0 for r in self.runs):
            raise MalformedRleError("negative run length")
        if any(r == 0 for r in self.runs[1:]):
            raise MalformedRleError("zero-length run after the leading run")
        total = sum(self.runs)
        if total != self.width * self.height:
            raise MalformedRleError(
                f"runs sum to {total}, expected {self.width * self.height}"
            )


def rle_encode(bitmap: np.ndarray, tid: int | None = None) -> Mask:
    """Encode an (H, W) 0/1 bitmap into the canonical run-length form."""
    arr = np.asarray(bitmap)
    if arr.ndim != 2 or arr.size == 0:
        raise MalformedRleError("bitmap must be a non-empty 2-D array")
    flat = (arr != 0).ravel()
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    height, width = arr.shape
    return Mask(width=int(width), height=int(height), runs=tuple(runs), tid=tid)


def rle_decode(mask: Mask) -> np.ndarray:
    """Decode a mask back to its (H, W) boolean bitmap."""
    values = np.zeros(len(mask.runs), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, mask.runs)
    return flat.reshape(mask.height, mask.width)


def mask_area(mask: Mask) -> int:
    """Number of set pixels (sum of the foreground runs)."""
    return sum(mask.runs[1::2])


def mask_to_bbox(mask: Mask) -> BBox:
    """Tightest box containing every set pixel."""
    if mask_area(mask) == 0:
        raise EmptyMaskError("cannot take the bbox of an empty mask")
    ys, xs = np.nonzero(rle_decode(mask))
    return BBox(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


def mask_union(
    masks: Iterable[Mask], width: int | None = None, height: int | None = None
) -> Mask:
    """Pixelwise OR of the given masks.

    Dimensions are taken from the first mask unless given explicitly;
    an empty input needs explicit dimensions and yields the all-zero
    mask.
    """
    masks = list(masks)
    if width is None or height is None:
        if not masks:
            raise ValueError("mask_union of an empty sequence needs width/height")
        width, height = masks[0].width, masks[0].height
    acc = np.zeros((height, width), dtype=bool)
    for m in masks:
        if (m.width, m.height) != (width, height):
            raise DimensionMismatchError(
                f"mask is {m.width}x{m.height}, expected {width}x{height}"
            )
        acc |= rle_decode(m)
    return rle_encode(acc)


def overlap_fraction(mask: Mask, reference: Mask) -> Fraction:
    """Fraction of ``mask``'s set pixels also set in ``reference``.

    Asymmetric by design; the denominator is ``mask``'s own area.
    """
    if (mask.width, mask.height) != (reference.width, reference.height):
        raise DimensionMismatchError(
            f"mask is {mask.width}x{mask.height}, reference is "
            f"{reference.width}x{reference.height}"
        )
    area = mask_area(mask)
    if area == 0:
        raise EmptyMaskError("overlap_fraction of an empty mask is undefined")
    inter = int(np.count_nonzero(rle_decode(mask) & rle_decode(reference)))
    return Fraction(inter, area)


def bbox_iou(a: BBox, b: BBox) -> Fraction:
    """Intersection over union of two boxes, exact."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return Fraction(0)
    inter = iw * ih
    return Fraction(inter, a.area + b.area - inter)


def mask_to_json(mask: Mask) -> dict:
    return {
        "tid": mask.tid,
        "width": mask.width,
        "height": mask.height,
        "runs": list(mask.runs),
    }


def mask_from_json(obj: dict) -> Mask:
    if not isinstance(obj, dict):
        raise MalformedRleError(f"mask JSON must be an object, got {type(obj).__name__}")
    try:
        tid = obj["tid"]
        width = obj["width"]
        height = obj["height"]
        runs = obj["runs"]
    except (KeyError, TypeError) as exc:
        raise MalformedRleError(f"mask JSON missing field: {exc}") from exc
    if tid is not None and not isinstance(tid, int):
        raise MalformedRleError(f"mask tid must be int or null, got {tid!r}")
    if not isinstance(width, int) or not isinstance(height, int):
        raise MalformedRleError("mask width/height must be integers")
    if not isinstance(runs, Sequence) or any(not isinstance(r, int) for r in runs):
        raise MalformedRleError("mask runs must be a list of integers")
    return Mask(width=width, height=height, runs=tuple(runs), tid=tid)
