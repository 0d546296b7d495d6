"""Noise synthesis and the synthetic sensor used as a test oracle.

The imaging model: a pixel that collects ``I`` photoelectrons reads out as

    D = K * Poisson(I) + N_read + black,    N_read ~ N(0, read_sigma)

with ``K`` the system gain in DN per electron. Dark signal nonuniformity is
modeled as a per-pixel affine function of ISO (a slope map times ISO plus an
offset map) together with a scalar black-level error per ISO; the simulator
injects all three so calibration code can be tested against known truth.

``sample_poisson`` is exact below ``approx_threshold`` and switches to a
normal approximation with continuity correction above it (at rate 1e3 the
skewness is ~0.03, far below anything the downstream tests resolve). All
internal callers pin the exact path; the approximation exists for callers
synthesizing very bright scenes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DimensionError, DomainError, HeaderError
from .frames import RawFrame, SensorMeta, black_map
from .rng import chunked_eval
from . import container as _c

DEFAULT_APPROX_THRESHOLD = 1000.0


def sample_poisson(
    rate: np.ndarray,
    rng: np.random.Generator,
    approx_threshold: float | None = DEFAULT_APPROX_THRESHOLD,
    threads: int = 1,
) -> np.ndarray:
    """Draw one Poisson variate per element of ``rate``; returns int64.

    ``approx_threshold=None`` forces exact draws everywhere. Draws are
    chunk-stable: the result depends on the generator state and the rate
    array only, not on ``threads``.
    """
    rate = np.asarray(rate, dtype=np.float64)
    if rate.size and (not np.all(np.isfinite(rate)) or rate.min() < 0.0):
        raise DomainError("rates must be finite and nonnegative")
    shape = rate.shape
    flat = rate.ravel()
    thr = math.inf if approx_threshold is None else float(approx_threshold)

    def draw(g: np.random.Generator, lo: int, hi: int) -> np.ndarray:
        lam = flat[lo:hi]
        out = np.empty(hi - lo, dtype=np.int64)
        exact = lam < thr
        # Fixed consumption order per chunk (exact first) keeps the stream
        # layout independent of how many elements land on each side.
        if exact.any():
            out[exact] = g.poisson(lam[exact])
        approx = ~exact
        if approx.any():
            lam_a = lam[approx]
            gauss = g.normal(lam_a, np.sqrt(lam_a))
            out[approx] = np.maximum(np.floor(gauss + 0.5), 0.0).astype(np.int64)
        return out

    return chunked_eval(rng, flat.size, draw, threads=threads).reshape(shape)


def _gaussian_field(shape, sigma: float, rng: np.random.Generator, threads: int) -> np.ndarray:
    n = int(np.prod(shape))
    return chunked_eval(rng, n, lambda g, lo, hi: g.normal(0.0, sigma, hi - lo), threads=threads).reshape(shape)


def synthesize_pg(
    clean: RawFrame,
    system_gain_k: float,
    read_sigma: float,
    rng: np.random.Generator,
    quantize: bool = True,
    threads: int = 1,
) -> RawFrame:
    """Re-noise a clean frame under the Poisson-Gaussian model.

    The clean frame is interpreted as expected signal in DN above its black
    level; output keeps the same black level. Shot noise uses exact Poisson
    draws, then Gaussian read noise (skipped entirely when ``read_sigma`` is
    0, so that case is bit-identical to pure shot noise), then optional
    quantization (round half to even, clip to [0, white]).
    """
    if not system_gain_k > 0:
        raise DomainError("system_gain_k must be positive")
    if read_sigma < 0:
        raise DomainError("read_sigma must be nonnegative")
    black = black_map(clean.meta)
    signal = clean.data - black
    if signal.min() < -1e-9:
        raise DomainError("clean frame has signal below black level")
    rate = np.maximum(signal, 0.0) / system_gain_k
    out = system_gain_k * sample_poisson(rate, rng, approx_threshold=None, threads=threads).astype(np.float64)
    if read_sigma > 0:
        out += _gaussian_field(out.shape, read_sigma, rng, threads)
    out += black
    if quantize:
        out = np.clip(np.rint(out), 0.0, clean.meta.white_level)
        return RawFrame(clean.meta, out, quantized=True)
    return RawFrame(clean.meta, out, quantized=False)


def gaussian_fpn_maps(
    shape: tuple[int, int],
    slope_std: float,
    offset_std: float,
    rng: np.random.Generator,
    row_fraction: float = 0.0,
    demean: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Random slope/offset maps for building sensor specs.

    ``row_fraction`` moves that share of the variance into a per-row
    component (banding); ``demean=True`` recenters each map to exact zero
    mean, which makes the map orthogonal to the scalar black-level error.
    """
    if not 0.0 <= row_fraction <= 1.0:
        raise DomainError("row_fraction must be in [0, 1]")
    maps = []
    for std in (slope_std, offset_std):
        white = rng.normal(0.0, 1.0, shape)
        if row_fraction > 0.0:
            rows = rng.normal(0.0, 1.0, (shape[0], 1))
            white = math.sqrt(1.0 - row_fraction) * white + math.sqrt(row_fraction) * rows
        field_ = std * white
        if demean:
            field_ = field_ - field_.mean()
        maps.append(field_)
    return maps[0], maps[1]


@dataclass(frozen=True)
class SensorSpec:
    """Ground-truth description of a synthetic sensor."""

    width: int
    height: int
    system_gain_k: float
    read_sigma: float
    fpn_slope: np.ndarray = field(repr=False)
    fpn_offset: np.ndarray = field(repr=False)
    ble_table: dict[int, float]
    black_level: float = 512.0
    white_level: float = 16383.0
    cfa_pattern: str = "RGGB"
    quantize: bool = True

    def __post_init__(self):
        if not self.system_gain_k > 0 or self.read_sigma < 0:
            raise DomainError("need system_gain_k > 0 and read_sigma >= 0")
        if not 0 <= self.black_level < self.white_level:
            raise DomainError("need 0 <= black_level < white_level")
        for name in ("fpn_slope", "fpn_offset"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (self.height, self.width):
                raise DimensionError(f"{name} shape {arr.shape} != {self.height}x{self.width}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        table = {int(k): float(v) for k, v in self.ble_table.items()}
        if not table or any(k <= 0 for k in table):
            raise DomainError("ble_table needs at least one positive ISO")
        object.__setattr__(self, "ble_table", table)

    @property
    def isos(self) -> tuple[int, ...]:
        return tuple(sorted(self.ble_table))

    def dark_shading(self, iso: int) -> np.ndarray:
        """True dark shading at ``iso`` in DN above black."""
        if iso not in self.ble_table:
            raise DomainError(f"iso {iso} not in the spec's BLE table {self.isos}")
        return self.fpn_slope * float(iso) + self.fpn_offset + self.ble_table[iso]

    def meta_for(self, iso: int, exposure_time: float = 1.0 / 30.0) -> SensorMeta:
        b = float(self.black_level)
        return SensorMeta(
            width=self.width,
            height=self.height,
            cfa_pattern=self.cfa_pattern,
            black_level=(b, b, b, b),
            white_level=self.white_level,
            iso=int(iso),
            exposure_time=exposure_time,
            system_gain_k=self.system_gain_k,
        )


def _finish(spec: SensorSpec, expected: np.ndarray, meta: SensorMeta) -> RawFrame:
    if spec.quantize:
        data = np.clip(np.rint(expected), 0.0, spec.white_level)
        return RawFrame(meta, data, quantized=True)
    return RawFrame(meta, expected, quantized=False)


def simulate_dark_frame(
    spec: SensorSpec,
    iso: int,
    rng: np.random.Generator,
    exposure_time: float = 1.0 / 30.0,
    threads: int = 1,
) -> RawFrame:
    """One dark exposure: black + shading + read noise (+ quantization)."""
    out = spec.black_level + spec.dark_shading(iso)
    out = np.broadcast_to(out, (spec.height, spec.width)).astype(np.float64)
    if spec.read_sigma > 0:
        out = out + _gaussian_field(out.shape, spec.read_sigma, rng, threads)
    return _finish(spec, out, spec.meta_for(iso, exposure_time))


def simulate_flat_frame(
    spec: SensorSpec,
    iso: int,
    electron_rate: Union[float, np.ndarray],
    rng: np.random.Generator,
    exposure_time: float = 1.0 / 30.0,
    threads: int = 1,
) -> RawFrame:
    """One flat exposure at a given mean photoelectron count per pixel.

    Draw order is shot noise first, then read noise. A rate of exactly zero
    skips the Poisson stage, so a zero-rate flat is bit-identical to a dark
    frame simulated with the same generator state.
    """
    rate = np.broadcast_to(np.asarray(electron_rate, dtype=np.float64), (spec.height, spec.width))
    if rate.size and (not np.all(np.isfinite(rate)) or rate.min() < 0.0):
        raise DomainError("electron_rate must be finite and nonnegative")
    base = spec.black_level + spec.dark_shading(iso)
    out = np.broadcast_to(base, (spec.height, spec.width)).astype(np.float64)
    if rate.max() > 0.0:
        shot = sample_poisson(rate, rng, approx_threshold=None, threads=threads)
        out = out + spec.system_gain_k * shot.astype(np.float64)
    if spec.read_sigma > 0:
        out = out + _gaussian_field(out.shape, spec.read_sigma, rng, threads)
    return _finish(spec, out, spec.meta_for(iso, exposure_time))


# ---------------------------------------------------------------------------
# sensor-spec container codec


def save_sensor_spec(spec: SensorSpec, path) -> None:
    meta = {
        "width": str(spec.width),
        "height": str(spec.height),
        "system_gain_k": repr(spec.system_gain_k),
        "read_sigma": repr(spec.read_sigma),
        "black_level": repr(spec.black_level),
        "white_level": repr(spec.white_level),
        "cfa_pattern": spec.cfa_pattern,
        "quantize": "1" if spec.quantize else "0",
        "ble_table": ";".join(f"{k}:{v!r}" for k, v in sorted(spec.ble_table.items())),
    }
    payload = (
        np.ascontiguousarray(spec.fpn_slope, dtype="<f4").tobytes()
        + np.ascontiguousarray(spec.fpn_offset, dtype="<f4").tobytes()
    )
    _c.write_blob(path, _c.PayloadKind.SENSOR_SPEC, meta, payload)


def load_sensor_spec(path) -> SensorSpec:
    kind, meta, payload = _c.read_blob(path)
    if kind != _c.PayloadKind.SENSOR_SPEC:
        raise HeaderError(f"{path}: payload kind {kind.name} is not a sensor spec")
    try:
        width, height = int(meta["width"]), int(meta["height"])
        table = {}
        for item in meta["ble_table"].split(";"):
            k, _, v = item.partition(":")
            table[int(k)] = float(v)
        n = width * height
        expect = 2 * n * 4
        if len(payload) != expect:
            raise HeaderError(f"{path}: payload is {len(payload)} bytes, expected {expect}")
        maps = np.frombuffer(payload, dtype="<f4").astype(np.float64)
        return SensorSpec(
            width=width,
            height=height,
            system_gain_k=float(meta["system_gain_k"]),
            read_sigma=float(meta["read_sigma"]),
            fpn_slope=maps[:n].reshape(height, width),
            fpn_offset=maps[n:].reshape(height, width),
            ble_table=table,
            black_level=float(meta["black_level"]),
            white_level=float(meta["white_level"]),
            cfa_pattern=meta["cfa_pattern"],
            quantize=meta["quantize"] == "1",
        )
    except KeyError as exc:
        raise HeaderError(f"{path}: missing metadata key {exc}") from None
    except ValueError as exc:
        raise HeaderError(f"{path}: bad metadata value ({exc})") from None
