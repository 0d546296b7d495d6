"""In-process bindings that feed rawnoise operations to training pipelines.

Everything here is a facade: each entry point builds the native argument
objects and delegates, so with the same seed and inputs the outputs are
bit-identical to calling the library directly. No numeric logic lives in
this package.

Arrays cross the boundary as numpy views onto the core's immutable buffers
(the core marks its arrays read-only at construction), so interchange is
zero-copy and handles can never observe or cause mutation. Copy on your
side of the fence if you need a writable array.

Packed arrays are plane stacks of shape (4, h/2, w/2) whose axis 0 follows
the CFA reading order: for an RGGB sensor that is R, G1, G2, B. Mosaics are
plain (h, w) arrays. Both are float64.

Concurrency: the heavy kernels run inside numpy, which releases the GIL in
its C loops, and the bridge takes no locks of its own, so calls are
reentrant and host threads interleave freely. Determinism is per-call: the
generator is built from the seed at entry, never shared.

Errors are the primary package's exceptions, re-raised untouched; catch
``rawnoise.RawNoiseError`` (or a subclass) and read its ``code`` attribute
for a machine-readable tag.
"""

from dataclasses import replace
from typing import Optional, Union

import numpy as np

from rawnoise import (
    CalibrationProfile,
    InputError,
    PackedImage,
    RawFrame,
    SensorMeta,
    SnaConfig,
    __version__ as _core_version,
    augment_pair,
    correct_frame,
    make_rng,
    read_container,
    unpack_bayer,
)
from rawnoise import DomainError, load_profile as _load_profile_native

__version__ = _core_version  # the bridge is version-locked to the core

__all__ = [
    "BoundFrame",
    "BoundProfile",
    "augment",
    "correct",
    "load_frame",
    "load_profile",
    "__version__",
]


def _readonly_view(arr: np.ndarray) -> np.ndarray:
    view = arr.view()
    view.setflags(write=False)
    return view


class BoundFrame:
    """Handle around a loaded frame; ``array`` is a read-only view."""

    __slots__ = ("_image",)

    def __init__(self, image: Union[RawFrame, PackedImage]):
        if not isinstance(image, (RawFrame, PackedImage)):
            raise InputError(f"expected a frame or packed image, got {type(image).__name__}")
        self._image = image

    @property
    def native(self) -> Union[RawFrame, PackedImage]:
        return self._image

    @property
    def packed(self) -> bool:
        return isinstance(self._image, PackedImage)

    @property
    def array(self) -> np.ndarray:
        data = self._image.channels if self.packed else self._image.data
        return _readonly_view(data)

    @property
    def shape(self) -> tuple:
        return self.array.shape

    @property
    def dtype(self) -> np.dtype:
        return self.array.dtype

    @property
    def meta(self) -> SensorMeta:
        return self._image.meta

    def __repr__(self):
        kind = "packed" if self.packed else "mosaic"
        return f"BoundFrame({kind} {self.shape}, iso={self.meta.iso})"


class BoundProfile:
    """Handle around a dark-shading calibration profile."""

    __slots__ = ("_profile",)

    def __init__(self, profile: CalibrationProfile):
        if not isinstance(profile, CalibrationProfile):
            raise InputError(f"expected a calibration profile, got {type(profile).__name__}")
        self._profile = profile

    @property
    def native(self) -> CalibrationProfile:
        return self._profile

    @property
    def slope(self) -> np.ndarray:
        return _readonly_view(self._profile.fpn_slope)

    @property
    def offset(self) -> np.ndarray:
        return _readonly_view(self._profile.fpn_offset)

    @property
    def ble_table(self) -> dict:
        return dict(self._profile.ble_table)

    @property
    def calibration_isos(self) -> tuple:
        return tuple(self._profile.calibration_isos)

    @property
    def sensor_id(self) -> str:
        return self._profile.sensor_id

    @property
    def shape(self) -> tuple:
        return self.slope.shape

    def __repr__(self):
        return f"BoundProfile({self.shape}, isos={self.calibration_isos})"


def load_frame(path) -> BoundFrame:
    """Read a frame container (mosaic or packed) into a handle."""
    return BoundFrame(read_container(path))


def load_profile(path) -> BoundProfile:
    """Read a calibration-profile container into a handle."""
    return BoundProfile(_load_profile_native(path))


# Config keys accepted by augment(). The first group maps onto SnaConfig,
# the second describes the sensor geometry the plane stacks came from.
_SNA_KEYS = ("mu", "sigma", "apply_probability", "saturation_policy")
_META_KEYS = ("white_level", "cfa_pattern", "iso", "exposure_time")
_OTHER_KEYS = ("system_gain_k", "threads")
_ALL_KEYS = frozenset(_SNA_KEYS + _META_KEYS + _OTHER_KEYS)


def _parse_config(config: Optional[dict]):
    cfg = dict(config or {})
    unknown = sorted(set(cfg) - _ALL_KEYS)
    if unknown:
        raise InputError(f"unknown config key(s): {', '.join(unknown)}")
    if "system_gain_k" not in cfg:
        raise DomainError("config needs system_gain_k (DN per electron)")
    sna = SnaConfig(**{k: cfg[k] for k in _SNA_KEYS if k in cfg})
    return sna, float(cfg["system_gain_k"]), int(cfg.get("threads", 1)), cfg


def _packed_pair(clean, noisy, gain: float, cfg: dict) -> tuple[PackedImage, PackedImage]:
    clean = np.asarray(clean, dtype=np.float64)
    noisy = np.asarray(noisy, dtype=np.float64)
    if clean.ndim != 3 or clean.shape[0] != 4:
        raise InputError(f"expected (4, h/2, w/2) plane stacks, got shape {clean.shape}")
    meta = SensorMeta(
        width=2 * clean.shape[2],
        height=2 * clean.shape[1],
        cfa_pattern=str(cfg.get("cfa_pattern", "RGGB")),
        black_level=(0.0, 0.0, 0.0, 0.0),
        white_level=float(cfg.get("white_level", 15871.0)),
        iso=int(cfg.get("iso", 800)),
        exposure_time=float(cfg.get("exposure_time", 1.0 / 30.0)),
        system_gain_k=gain,
    )
    return PackedImage(meta, clean, quantized=False), PackedImage(meta, noisy, quantized=False)


def augment(clean, noisy, config: Optional[dict] = None, seed: int = 0):
    """Shot-noise-consistent brightening of a packed clean/noisy pair.

    ``clean`` and ``noisy`` are black-subtracted (4, h/2, w/2) plane stacks;
    ``config`` takes the same knobs as the CLI augment command (mu, sigma,
    apply_probability, saturation_policy) plus system_gain_k, which is
    required, and optional sensor fields (white_level, cfa_pattern, iso,
    exposure_time). Returns read-only (clean*, noisy*) stacks computed by
    the native augmentation under a generator seeded exactly like the CLI's
    ``--seed``.
    """
    sna, gain, threads, cfg = _parse_config(config)
    clean_img, noisy_img = _packed_pair(clean, noisy, gain, cfg)
    result = augment_pair(clean_img, noisy_img, sna, gain, make_rng(seed), threads=threads)
    return result.clean.channels, result.noisy.channels


def correct(noisy, profile: Union[BoundProfile, CalibrationProfile],
            iso: Optional[int] = None, extrapolate: bool = False) -> np.ndarray:
    """Dark-shading correction; returns the black-subtracted mosaic.

    ``noisy`` is a BoundFrame (its metadata travels along; packed frames are
    unpacked first) or a bare (h, w) mosaic, in which case ``iso`` is
    required and the profile's reference geometry and black level are
    assumed. Output is the native correction result: real-valued, unclipped,
    read-only.
    """
    prof = profile.native if isinstance(profile, BoundProfile) else profile
    if isinstance(noisy, BoundFrame):
        frame = unpack_bayer(noisy.native) if noisy.packed else noisy.native
    elif isinstance(noisy, (RawFrame, PackedImage)):
        frame = unpack_bayer(noisy) if isinstance(noisy, PackedImage) else noisy
    else:
        if iso is None:
            raise InputError("bare-array input needs iso=")
        meta = replace(prof.ref_meta, iso=int(iso))
        frame = RawFrame(meta, np.asarray(noisy, dtype=np.float64), quantized=False)
    return correct_frame(frame, prof, extrapolate=extrapolate).data
