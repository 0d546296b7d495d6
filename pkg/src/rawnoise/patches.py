"""Training-patch extraction with geometric augmentation.

Patches are square crops sampled uniformly at random. On a mosaic the crop
origin and size must be even so every crop starts on a CFA tile boundary and
the crop is itself a valid mosaic; on a packed image crops work per plane
with no alignment constraint. When overlap is disallowed, sampling rejects
colliding rectangles and falls back to a deterministic grid layout if random
placement keeps failing.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import CapacityError, DimensionError, DomainError
from .frames import PackedImage, RawFrame

TRANSFORMS = ("identity", "rotate90", "rotate180", "rotate270", "hflip", "vflip")

# Rejection count after which random placement gives up and the whole layout
# restarts as a raster grid. Grid placement always succeeds once the capacity
# check has passed.
_MAX_REJECTS = 1000


def apply_transform(data: np.ndarray, name: str) -> np.ndarray:
    """Apply a named transform to the last two axes."""
    if name == "identity":
        return data.copy()
    if name == "rotate90":
        return np.rot90(data, 1, axes=(-2, -1)).copy()
    if name == "rotate180":
        return np.rot90(data, 2, axes=(-2, -1)).copy()
    if name == "rotate270":
        return np.rot90(data, 3, axes=(-2, -1)).copy()
    if name == "hflip":
        return np.flip(data, axis=-1).copy()
    if name == "vflip":
        return np.flip(data, axis=-2).copy()
    raise DomainError(f"unknown transform {name!r}")


def inverse_transform(name: str) -> str:
    """Name of the transform that undoes ``name``."""
    if name == "rotate90":
        return "rotate270"
    if name == "rotate270":
        return "rotate90"
    if name not in TRANSFORMS:
        raise DomainError(f"unknown transform {name!r}")
    return name  # identity, rotate180 and the flips are involutions


@dataclass(frozen=True)
class PatchSpec:
    patch_size: int = 512
    count: int = 8
    overlap_allowed: bool = False
    geometric_aug: frozenset[str] = frozenset(TRANSFORMS[1:])

    def __post_init__(self):
        if self.patch_size <= 0 or self.count <= 0:
            raise DomainError("patch_size and count must be positive")
        bad = set(self.geometric_aug) - set(TRANSFORMS)
        if bad:
            raise DomainError(f"unknown transforms {sorted(bad)}")
        object.__setattr__(self, "geometric_aug", frozenset(self.geometric_aug))


@dataclass(frozen=True)
class Patch:
    """A crop after augmentation. ``y``/``x`` are the pre-transform origin."""

    data: np.ndarray = field(repr=False)
    y: int
    x: int
    size: int
    transform: str


def _disjoint(y: int, x: int, size: int, taken: list[tuple[int, int]]) -> bool:
    return all(abs(y - ty) >= size or abs(x - tx) >= size for ty, tx in taken)


def sample_patches(
    image: Union[RawFrame, PackedImage],
    spec: PatchSpec,
    rng: np.random.Generator,
) -> list[Patch]:
    """Sample ``spec.count`` patches; see module docstring for the layout rules."""
    if isinstance(image, RawFrame):
        grid = image.data
        align = 2
        if spec.patch_size % 2:
            raise DimensionError("mosaic patches need an even patch_size")
    else:
        grid = image.channels
        align = 1
    height, width = grid.shape[-2], grid.shape[-1]
    size = spec.patch_size
    if size > height or size > width:
        raise CapacityError(f"patch {size} does not fit in {height}x{width}")
    if not spec.overlap_allowed and (height // size) * (width // size) < spec.count:
        raise CapacityError(
            f"cannot place {spec.count} disjoint {size}px patches in {height}x{width}"
        )

    def draw_origin() -> tuple[int, int]:
        y = align * int(rng.integers(0, (height - size) // align + 1))
        x = align * int(rng.integers(0, (width - size) // align + 1))
        return y, x

    origins: list[tuple[int, int]] = []
    rejects = 0
    while len(origins) < spec.count:
        y, x = draw_origin()
        if spec.overlap_allowed or _disjoint(y, x, size, origins):
            origins.append((y, x))
            rejects = 0
            continue
        rejects += 1
        if rejects >= _MAX_REJECTS:
            # Dense layouts can starve rejection sampling; fall back to the
            # raster grid, which the capacity check guarantees to fit.
            origins = [
                (row * size, col * size)
                for row in range(height // size)
                for col in range(width // size)
            ][: spec.count]
            break

    choices = ("identity", *sorted(spec.geometric_aug))
    patches = []
    for y, x in origins:
        name = choices[int(rng.integers(len(choices)))]
        crop = grid[..., y : y + size, x : x + size]
        patches.append(Patch(apply_transform(crop, name), y, x, size, name))
    return patches
