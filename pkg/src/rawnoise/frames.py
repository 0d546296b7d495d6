"""Raw Bayer frames and the mosaic <-> plane transform.

A raw frame is a single-channel mosaic straight off the sensor: each pixel
saw the scene through one color filter of a repeating 2x2 tile. Packing
splits the mosaic into four half-resolution planes, one per filter site,
ordered (R, G1, G2, B); unpacking interleaves them back. The two transforms
are exact inverses, no resampling is involved.

Pixel values are digital numbers (DN). Arrays are float64 in memory even for
quantized frames; ``quantized=True`` asserts that every value is integral
and inside [0, white_level]. Black level is stored per CFA channel in tile
reading order (site (0,0), (0,1), (1,0), (1,1)).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .errors import DimensionError, DomainError, FormatError

BAYER_PATTERNS = ("RGGB", "BGGR", "GRBG", "GBRG")
CHANNEL_ORDER = ("R", "G1", "G2", "B")


def _readonly(arr: np.ndarray, dtype=np.float64) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=dtype)
    if out is arr:
        out = arr.view()
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SensorMeta:
    """Acquisition metadata attached to every frame."""

    width: int
    height: int
    cfa_pattern: str
    black_level: tuple[float, float, float, float]
    white_level: float
    iso: int
    exposure_time: float
    system_gain_k: float | None = None

    def __post_init__(self):
        if self.cfa_pattern not in BAYER_PATTERNS:
            raise FormatError(f"unsupported CFA pattern {self.cfa_pattern!r}")
        if self.width <= 0 or self.height <= 0:
            raise DimensionError("frame dimensions must be positive")
        if self.width % 2 or self.height % 2:
            # Odd sizes would leave ragged CFA tiles; packing requires full tiles.
            raise DimensionError(f"dimensions must be even, got {self.width}x{self.height}")
        black = tuple(float(b) for b in self.black_level)
        if len(black) != 4:
            raise FormatError("black_level needs one value per CFA site (4)")
        object.__setattr__(self, "black_level", black)
        if any(b < 0 for b in black) or not self.white_level > max(black):
            raise DomainError("need 0 <= black_level < white_level")
        if self.iso <= 0 or self.exposure_time <= 0:
            raise DomainError("iso and exposure_time must be positive")
        if self.system_gain_k is not None and not self.system_gain_k > 0:
            raise DomainError("system_gain_k must be positive when set")

    def cfa_offsets(self) -> dict[str, tuple[int, int]]:
        """Map channel name -> (row, col) offset of its site in the 2x2 tile."""
        out = {}
        seen_g = 0
        for idx, letter in enumerate(self.cfa_pattern):
            pos = (idx // 2, idx % 2)
            if letter == "G":
                seen_g += 1
                out[f"G{seen_g}"] = pos
            else:
                out[letter] = pos
        return out

    def channel_black(self) -> np.ndarray:
        """Black level per packed channel, in (R, G1, G2, B) order."""
        offsets = self.cfa_offsets()
        vals = [self.black_level[2 * dy + dx] for dy, dx in (offsets[c] for c in CHANNEL_ORDER)]
        return np.asarray(vals, dtype=np.float64)


def black_map(meta: SensorMeta) -> np.ndarray:
    """Full-resolution per-pixel black level, tiled from the CFA values."""
    tile = np.asarray(meta.black_level, dtype=np.float64).reshape(2, 2)
    return np.tile(tile, (meta.height // 2, meta.width // 2))


@dataclass(frozen=True)
class RawFrame:
    """One Bayer mosaic plus its metadata. Data is read-only after construction."""

    meta: SensorMeta
    data: np.ndarray = field(repr=False)
    quantized: bool = False

    def __post_init__(self):
        arr = _readonly(self.data)
        if arr.shape != (self.meta.height, self.meta.width):
            raise DimensionError(
                f"data shape {arr.shape} does not match meta {self.meta.height}x{self.meta.width}"
            )
        if self.quantized:
            if not np.all((arr >= 0.0) & (arr <= self.meta.white_level)):
                raise DomainError("quantized frame has values outside [0, white_level]")
            if not np.array_equal(arr, np.rint(arr)):
                raise DomainError("quantized frame has non-integral values")
        object.__setattr__(self, "data", arr)

    def with_data(self, data: np.ndarray, quantized: bool | None = None) -> "RawFrame":
        return RawFrame(self.meta, data, self.quantized if quantized is None else quantized)


@dataclass(frozen=True)
class PackedImage:
    """Four half-resolution planes in (R, G1, G2, B) order."""

    meta: SensorMeta
    channels: np.ndarray = field(repr=False)
    quantized: bool = False

    def __post_init__(self):
        arr = _readonly(self.channels)
        want = (4, self.meta.height // 2, self.meta.width // 2)
        if arr.shape != want:
            raise DimensionError(f"channels shape {arr.shape}, expected {want}")
        if self.quantized:
            if not np.all((arr >= 0.0) & (arr <= self.meta.white_level)):
                raise DomainError("quantized image has values outside [0, white_level]")
            if not np.array_equal(arr, np.rint(arr)):
                raise DomainError("quantized image has non-integral values")
        object.__setattr__(self, "channels", arr)

    def with_channels(self, channels: np.ndarray, quantized: bool | None = None) -> "PackedImage":
        return PackedImage(self.meta, channels, self.quantized if quantized is None else quantized)


def pack_bayer(frame: RawFrame) -> PackedImage:
    """Split a mosaic into (R, G1, G2, B) planes by strided sampling."""
    offsets = frame.meta.cfa_offsets()
    planes = [frame.data[dy::2, dx::2] for dy, dx in (offsets[c] for c in CHANNEL_ORDER)]
    return PackedImage(frame.meta, np.stack(planes), frame.quantized)


def unpack_bayer(image: PackedImage) -> RawFrame:
    """Interleave (R, G1, G2, B) planes back into the original mosaic."""
    meta = image.meta
    out = np.empty((meta.height, meta.width), dtype=np.float64)
    offsets = meta.cfa_offsets()
    for plane, name in zip(image.channels, CHANNEL_ORDER):
        dy, dx = offsets[name]
        out[dy::2, dx::2] = plane
    return RawFrame(meta, out, image.quantized)


def _black_subtracted_meta(meta: SensorMeta) -> SensorMeta:
    return replace(
        meta,
        black_level=(0.0, 0.0, 0.0, 0.0),
        white_level=meta.white_level - max(meta.black_level),
    )


def subtract_black(image: Union[RawFrame, PackedImage]) -> Union[RawFrame, PackedImage]:
    """Subtract the per-channel black level; output metadata has black 0.

    White level shrinks by the largest channel black so that a saturated
    pixel still maps to at most the new white. Output is real-valued:
    read-noise excursions below black legitimately go negative.
    """
    meta = _black_subtracted_meta(image.meta)
    if isinstance(image, RawFrame):
        return RawFrame(meta, image.data - black_map(image.meta), quantized=False)
    shifted = image.channels - image.meta.channel_black()[:, None, None]
    return PackedImage(meta, shifted, quantized=False)
