"""Dark-shading calibration and correction.

Dark frames at a fixed exposure are not flat: each pixel has a fixed-pattern
offset that grows with ISO, and the whole frame sits on a small ISO-dependent
black-level error (BLE). The model fit here is per-pixel affine in ISO,

    shading(s)[p] = fpn_slope[p] * s + fpn_offset[p] + ble(s)

where the BLE is the spatial mean of the averaged dark frame at ISO s (after
black subtraction) and the two maps absorb what remains. Calibration:

1. average a stack of dark frames per ISO (temporal mean, read noise
   shrinks by 1/sqrt(n));
2. take the spatial mean of each averaged frame as ble(s) and subtract it;
3. fit slope and offset per pixel by ordinary least squares across ISO.

Step 3 is the whole point: the per-pixel time average over n frames still
carries read noise of sigma/sqrt(n), but the regression pools every ISO's
stack through a two-parameter model, so the reconstructed shading at any
calibrated ISO is less noisy than the averaged frame itself. Correction
subtracts black level and reconstructed shading from a single noisy frame;
the result is intentionally unclipped (zero-mean read noise must stay
zero-mean for downstream averaging, so negative values survive).

BLE at uncalibrated ISOs is linearly interpolated between calibrated
neighbors; extrapolation outside the calibrated range is refused unless
explicitly enabled (the maps themselves are affine in ISO, so they evaluate
anywhere, but the BLE has no model outside its support).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    CoverageError,
    DomainError,
    FrameSetError,
    HeaderError,
    InsufficientDataError,
    ProfileError,
    RankError,
)
from .frames import RawFrame, SensorMeta, black_map, subtract_black
from . import container as _c

logger = logging.getLogger(__name__)

# Below this stack depth the averaged frame is noisy enough that profiles
# tend to be read-noise limited; calibrate with ~400 frames per ISO.
MIN_RECOMMENDED_FRAMES = 100


@dataclass(frozen=True)
class DarkFrameSet:
    """A stack of dark frames at one ISO and exposure."""

    iso: int
    exposure_time: float
    frames: Sequence[RawFrame]

    def __post_init__(self):
        frames = tuple(self.frames)
        if len(frames) < 2:
            raise InsufficientDataError("a dark set needs at least 2 frames")
        ref = frames[0].meta
        for f in frames[1:]:
            if f.meta != ref:
                raise FrameSetError("dark set frames have inconsistent metadata")
        if ref.iso != self.iso or ref.exposure_time != self.exposure_time:
            raise FrameSetError(
                f"set labeled iso={self.iso} exposure={self.exposure_time} "
                f"but frames say iso={ref.iso} exposure={ref.exposure_time}"
            )
        object.__setattr__(self, "frames", frames)

    @property
    def frame_count(self) -> int:
        return len(self.frames)


def average_dark_frames(dark_set: DarkFrameSet) -> tuple[RawFrame, np.ndarray]:
    """Temporal mean frame and per-pixel sample standard deviation (ddof 1)."""
    n = dark_set.frame_count
    if n < MIN_RECOMMENDED_FRAMES:
        logger.warning("averaging only %d dark frames; expect a noisy profile", n)
    acc = np.zeros_like(dark_set.frames[0].data)
    for f in dark_set.frames:
        acc += f.data
    mean = acc / n
    sq = np.zeros_like(mean)
    for f in dark_set.frames:
        sq += (f.data - mean) ** 2
    sigma = np.sqrt(sq / (n - 1))
    return RawFrame(dark_set.frames[0].meta, mean, quantized=False), sigma


def compute_ble(mean_frame: RawFrame) -> float:
    """Black-level error: spatial mean of a black-subtracted averaged dark."""
    if any(b != 0.0 for b in mean_frame.meta.black_level):
        raise DomainError("compute_ble expects a black-subtracted frame")
    return float(mean_frame.data.mean())


@dataclass(frozen=True)
class CalibrationProfile:
    """Fitted dark-shading model: two per-pixel maps plus the BLE table."""

    fpn_slope: np.ndarray = field(repr=False)
    fpn_offset: np.ndarray = field(repr=False)
    ble_table: dict[int, float]
    calibration_isos: tuple[int, ...]
    residual_rms: dict[int, float]
    ref_meta: SensorMeta
    sensor_id: str = ""

    def __post_init__(self):
        shape = (self.ref_meta.height, self.ref_meta.width)
        for name in ("fpn_slope", "fpn_offset"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ProfileError(f"{name} shape {arr.shape} != frame shape {shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        isos = tuple(sorted(int(s) for s in self.calibration_isos))
        if len(isos) < 2:
            raise InsufficientDataError("a profile needs at least 2 calibration ISOs")
        object.__setattr__(self, "calibration_isos", isos)
        object.__setattr__(self, "ble_table", {int(k): float(v) for k, v in self.ble_table.items()})
        object.__setattr__(self, "residual_rms", {int(k): float(v) for k, v in self.residual_rms.items()})
        if set(self.ble_table) != set(isos):
            raise ProfileError("ble_table ISOs do not match calibration_isos")

    def ble_at(self, iso: int, extrapolate: bool = False) -> float:
        lo, hi = self.calibration_isos[0], self.calibration_isos[-1]
        if (iso < lo or iso > hi) and not extrapolate:
            raise CoverageError(f"iso {iso} outside calibrated range [{lo}, {hi}]")
        xs = np.array(self.calibration_isos, dtype=np.float64)
        ys = np.array([self.ble_table[s] for s in self.calibration_isos])
        return float(np.interp(float(iso), xs, ys))


def fit_dark_shading(
    mean_frames: Mapping[int, RawFrame],
    sensor_id: str = "",
) -> CalibrationProfile:
    """Fit the per-pixel affine model from averaged dark frames keyed by ISO.

    Frames must carry their native black level (it is subtracted here). The
    returned maps are exact OLS solutions; residual RMS per ISO measures the
    model misfit against the averaged frames.
    """
    if len(mean_frames) < 2:
        raise InsufficientDataError(f"need >= 2 calibration ISOs, got {len(mean_frames)}")
    isos = sorted(int(s) for s in mean_frames)
    ref = mean_frames[isos[0]].meta
    for s in isos:
        m = mean_frames[s].meta
        if (m.width, m.height, m.cfa_pattern) != (ref.width, ref.height, ref.cfa_pattern):
            raise FrameSetError("mean frames have inconsistent geometry")
        if m.iso != s:
            raise FrameSetError(f"frame keyed {s} carries iso {m.iso}")
    x = np.array(isos, dtype=np.float64)
    sxx = float(((x - x.mean()) ** 2).sum())
    if sxx <= 0.0:
        raise RankError("calibration ISOs are all identical")

    ble_table: dict[int, float] = {}
    targets = []
    for s in isos:
        sub = subtract_black(mean_frames[s])
        ble = compute_ble(sub)
        ble_table[s] = ble
        targets.append(sub.data - ble)
    stack = np.stack(targets)  # (n_iso, H, W)

    # Per-pixel OLS, vectorized over the frame.
    xc = (x - x.mean())[:, None, None]
    slope = (xc * stack).sum(axis=0) / sxx
    offset = stack.mean(axis=0) - slope * x.mean()

    residual_rms = {}
    for i, s in enumerate(isos):
        res = stack[i] - (slope * x[i] + offset)
        residual_rms[s] = float(np.sqrt((res**2).mean()))

    return CalibrationProfile(
        fpn_slope=slope,
        fpn_offset=offset,
        ble_table=ble_table,
        calibration_isos=tuple(isos),
        residual_rms=residual_rms,
        ref_meta=replace(ref, iso=isos[0]),
        sensor_id=sensor_id,
    )


def calibrate_dark_profile(
    dark_sets: Iterable[DarkFrameSet],
    sensor_id: str = "",
) -> tuple[CalibrationProfile, dict[int, dict[str, float]]]:
    """Full calibration from raw dark stacks; also returns per-ISO statistics."""
    means: dict[int, RawFrame] = {}
    stats: dict[int, dict[str, float]] = {}
    for dark_set in dark_sets:
        if dark_set.iso in means:
            raise FrameSetError(f"duplicate dark set for iso {dark_set.iso}")
        mean_frame, sigma = average_dark_frames(dark_set)
        means[dark_set.iso] = mean_frame
        stats[dark_set.iso] = {
            "frame_count": float(dark_set.frame_count),
            "temporal_sigma_median": float(np.median(sigma)),
        }
    profile = fit_dark_shading(means, sensor_id=sensor_id)
    for s, rms in profile.residual_rms.items():
        stats[s]["fit_residual_rms"] = rms
    return profile, stats


def reconstruct_dark_shading(
    profile: CalibrationProfile,
    iso: int,
    extrapolate: bool = False,
) -> RawFrame:
    """Model-predicted dark shading at ``iso``, black-subtracted and real."""
    if iso <= 0:
        raise DomainError("iso must be positive")
    ble = profile.ble_at(iso, extrapolate=extrapolate)
    data = profile.fpn_slope * float(iso) + profile.fpn_offset + ble
    meta = replace(
        profile.ref_meta,
        iso=int(iso),
        black_level=(0.0, 0.0, 0.0, 0.0),
        white_level=profile.ref_meta.white_level - max(profile.ref_meta.black_level),
    )
    return RawFrame(meta, data, quantized=False)


def correct_frame(
    noisy: RawFrame,
    profile: CalibrationProfile,
    extrapolate: bool = False,
) -> RawFrame:
    """Subtract black level and reconstructed dark shading from one frame.

    Output is black-subtracted (metadata black level 0) and unclipped, so
    pixel values may be negative; that is deliberate, see module docstring.
    """
    if (noisy.meta.height, noisy.meta.width) != (profile.ref_meta.height, profile.ref_meta.width):
        raise ProfileError(
            f"profile is {profile.ref_meta.width}x{profile.ref_meta.height}, "
            f"frame is {noisy.meta.width}x{noisy.meta.height}"
        )
    shading = reconstruct_dark_shading(profile, noisy.meta.iso, extrapolate=extrapolate)
    data = noisy.data - black_map(noisy.meta) - shading.data
    meta = replace(
        noisy.meta,
        black_level=(0.0, 0.0, 0.0, 0.0),
        white_level=noisy.meta.white_level - max(noisy.meta.black_level),
    )
    return RawFrame(meta, data, quantized=False)


# ---------------------------------------------------------------------------
# profile container codec


def save_profile(profile: CalibrationProfile, path) -> None:
    ref = profile.ref_meta
    meta = {
        "sensor_id": profile.sensor_id,
        "width": str(ref.width),
        "height": str(ref.height),
        "cfa_pattern": ref.cfa_pattern,
        "black_level": ",".join(repr(b) for b in ref.black_level),
        "white_level": repr(ref.white_level),
        "exposure_time": repr(ref.exposure_time),
        "calibration_isos": ",".join(str(s) for s in profile.calibration_isos),
        "ble_table": ";".join(f"{s}:{profile.ble_table[s]!r}" for s in profile.calibration_isos),
        "residual_rms": ";".join(f"{s}:{profile.residual_rms[s]!r}" for s in profile.calibration_isos),
    }
    if ref.system_gain_k is not None:
        meta["system_gain_k"] = repr(ref.system_gain_k)
    payload = (
        np.ascontiguousarray(profile.fpn_slope, dtype="<f4").tobytes()
        + np.ascontiguousarray(profile.fpn_offset, dtype="<f4").tobytes()
    )
    _c.write_blob(path, _c.PayloadKind.PROFILE, meta, payload)


def load_profile(path) -> CalibrationProfile:
    kind, meta, payload = _c.read_blob(path)
    if kind != _c.PayloadKind.PROFILE:
        raise HeaderError(f"{path}: payload kind {kind.name} is not a profile")

    def parse_table(text: str) -> dict[int, float]:
        out = {}
        for item in text.split(";"):
            k, _, v = item.partition(":")
            out[int(k)] = float(v)
        return out

    try:
        width, height = int(meta["width"]), int(meta["height"])
        isos = tuple(int(s) for s in meta["calibration_isos"].split(","))
        black = tuple(float(v) for v in meta["black_level"].split(","))
        n = width * height
        if len(payload) != 2 * n * 4:
            raise HeaderError(f"{path}: payload is {len(payload)} bytes, expected {2 * n * 4}")
        maps = np.frombuffer(payload, dtype="<f4").astype(np.float64)
        gain = meta.get("system_gain_k")
        ref = SensorMeta(
            width=width,
            height=height,
            cfa_pattern=meta["cfa_pattern"],
            black_level=black,  # type: ignore[arg-type]
            white_level=float(meta["white_level"]),
            iso=isos[0],
            exposure_time=float(meta["exposure_time"]),
            system_gain_k=float(gain) if gain is not None else None,
        )
        return CalibrationProfile(
            fpn_slope=maps[:n].reshape(height, width),
            fpn_offset=maps[n:].reshape(height, width),
            ble_table=parse_table(meta["ble_table"]),
            calibration_isos=isos,
            residual_rms=parse_table(meta["residual_rms"]),
            ref_meta=ref,
            sensor_id=meta.get("sensor_id", ""),
        )
    except KeyError as exc:
        raise HeaderError(f"{path}: missing metadata key {exc}") from None
    except ValueError as exc:
        raise HeaderError(f"{path}: bad metadata value ({exc})") from None
