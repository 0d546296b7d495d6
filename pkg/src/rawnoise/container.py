"""On-disk container format (``.rawc``).

One container holds one artifact: a mosaic frame, a packed image, a
dark-shading calibration profile, or a synthetic-sensor description. The
format is deliberately dumb: fixed little-endian header, text metadata,
raw payload, trailing checksum. See FORMAT.md for the normative layout.

::

    offset  size  field
    ------  ----  -----
    0       8     magic, b"RAWNOISE"
    8       2     format version (currently 1), uint16 LE
    10      2     payload kind, uint16 LE
    12      4     reserved, zero
    16      8     metadata byte length M, uint64 LE
    24      8     payload byte length P, uint64 LE
    32      32    reserved, zero
    64      M     metadata: UTF-8 "key=value" lines, "\\n"-terminated,
                  keys sorted, one per line
    64+M    P     payload, little-endian scalars
    64+M+P  4     CRC32 (zlib) over bytes [0, 64+M+P), uint32 LE

Quantized pixel data is stored as uint16, real-valued data as IEEE-754
float32; float32 is the format's precision for real payloads, so callers
holding float64 arrays lose the sub-float32 bits at write time. Mosaics are
row-major ``height x width``; packed images concatenate the four planes in
(R, G1, G2, B) order; profiles and sensor specs concatenate their two maps
(slope, then offset). Writes land in a temporary file in the destination
directory followed by an atomic rename, so readers never observe a partial
container.

Read failures are typed: :class:`~rawnoise.errors.HeaderError` (bad magic or
metadata), :class:`~rawnoise.errors.VersionError`,
:class:`~rawnoise.errors.TruncatedError` (file shorter than declared), and
:class:`~rawnoise.errors.ChecksumError`.
"""
from __future__ import annotations

import enum
import os
import struct
import zlib
from pathlib import Path
from typing import Union

import numpy as np

from .errors import ChecksumError, FormatError, HeaderError, TruncatedError, VersionError
from .frames import CHANNEL_ORDER, PackedImage, RawFrame, SensorMeta

MAGIC = b"RAWNOISE"
FORMAT_VERSION = 1
SUFFIX = ".rawc"

_HEADER = struct.Struct("<8sHH4xQQ32x")
_CRC = struct.Struct("<I")
assert _HEADER.size == 64


class PayloadKind(enum.IntEnum):
    FRAME_U16 = 1
    FRAME_F32 = 2
    PACKED_U16 = 3
    PACKED_F32 = 4
    PROFILE = 5
    SENSOR_SPEC = 6


def encode_metadata(meta: dict[str, str]) -> bytes:
    lines = []
    for key in sorted(meta):
        value = str(meta[key])
        if not key or "=" in key or "\n" in key:
            raise FormatError(f"bad metadata key {key!r}")
        if "\n" in value:
            raise FormatError(f"newline in metadata value for {key!r}")
        lines.append(f"{key}={value}\n")
    return "".join(lines).encode("utf-8")


def decode_metadata(blob: bytes) -> dict[str, str]:
    try:
        text = blob.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise HeaderError(f"metadata is not UTF-8: {exc}") from None
    meta: dict[str, str] = {}
    for line in text.splitlines():
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key:
            raise HeaderError(f"malformed metadata line {line!r}")
        if key in meta:
            raise HeaderError(f"duplicate metadata key {key!r}")
        meta[key] = value
    return meta


def write_blob(path: Union[str, Path], kind: PayloadKind, meta: dict[str, str], payload: bytes) -> None:
    """Write one container atomically (temp file + rename)."""
    path = Path(path)
    meta_blob = encode_metadata(meta)
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, int(kind), len(meta_blob), len(payload))
    body = header + meta_blob + payload
    crc = zlib.crc32(body) & 0xFFFFFFFF
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    try:
        with open(tmp, "wb") as fh:
            fh.write(body)
            fh.write(_CRC.pack(crc))
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink(missing_ok=True)


def read_blob(path: Union[str, Path]) -> tuple[PayloadKind, dict[str, str], bytes]:
    """Read and verify one container; returns (kind, metadata, payload)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size + _CRC.size:
        raise TruncatedError(f"{path}: {len(raw)} bytes is shorter than a minimal container")
    magic, version, kind_val, meta_len, payload_len = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise HeaderError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: unsupported format version {version}")
    total = _HEADER.size + meta_len + payload_len + _CRC.size
    if len(raw) < total:
        raise TruncatedError(f"{path}: declared {total} bytes, file has {len(raw)}")
    if len(raw) > total:
        raise HeaderError(f"{path}: {len(raw) - total} trailing bytes after checksum")
    body = raw[: total - _CRC.size]
    (stored_crc,) = _CRC.unpack_from(raw, total - _CRC.size)
    actual_crc = zlib.crc32(body) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise ChecksumError(f"{path}: CRC32 {actual_crc:#010x} != stored {stored_crc:#010x}")
    try:
        kind = PayloadKind(kind_val)
    except ValueError:
        raise HeaderError(f"{path}: unknown payload kind {kind_val}") from None
    meta = decode_metadata(raw[_HEADER.size : _HEADER.size + meta_len])
    return kind, meta, raw[_HEADER.size + meta_len : total - _CRC.size]


# ---------------------------------------------------------------------------
# frame / packed-image codec

_RESERVED_KEYS = {
    "width",
    "height",
    "cfa_pattern",
    "black_level",
    "white_level",
    "iso",
    "exposure_time",
    "system_gain_k",
}


def _meta_to_dict(meta: SensorMeta) -> dict[str, str]:
    out = {
        "width": str(meta.width),
        "height": str(meta.height),
        "cfa_pattern": meta.cfa_pattern,
        "black_level": ",".join(repr(b) for b in meta.black_level),
        "white_level": repr(meta.white_level),
        "iso": str(meta.iso),
        "exposure_time": repr(meta.exposure_time),
    }
    if meta.system_gain_k is not None:
        out["system_gain_k"] = repr(meta.system_gain_k)
    return out


def _meta_from_dict(meta: dict[str, str], path) -> SensorMeta:
    try:
        black = tuple(float(v) for v in meta["black_level"].split(","))
        gain = meta.get("system_gain_k")
        return SensorMeta(
            width=int(meta["width"]),
            height=int(meta["height"]),
            cfa_pattern=meta["cfa_pattern"],
            black_level=black,  # type: ignore[arg-type]
            white_level=float(meta["white_level"]),
            iso=int(meta["iso"]),
            exposure_time=float(meta["exposure_time"]),
            system_gain_k=float(gain) if gain is not None else None,
        )
    except KeyError as exc:
        raise HeaderError(f"{path}: missing metadata key {exc}") from None
    except ValueError as exc:
        raise HeaderError(f"{path}: bad metadata value ({exc})") from None


def _encode_pixels(data: np.ndarray, quantized: bool, white: float) -> tuple[bytes, bool]:
    if quantized:
        if white > np.iinfo(np.uint16).max:
            raise FormatError(f"white_level {white} exceeds uint16 payload range")
        return np.ascontiguousarray(data, dtype="<u2").tobytes(), True
    return np.ascontiguousarray(data, dtype="<f4").tobytes(), False


def _decode_pixels(payload: bytes, count: int, quantized: bool, path) -> np.ndarray:
    dtype = "<u2" if quantized else "<f4"
    expect = count * np.dtype(dtype).itemsize
    if len(payload) != expect:
        raise HeaderError(f"{path}: payload is {len(payload)} bytes, expected {expect}")
    return np.frombuffer(payload, dtype=dtype).astype(np.float64)


def write_container(
    image: Union[RawFrame, PackedImage],
    path: Union[str, Path],
    extra_meta: dict[str, str] | None = None,
) -> None:
    """Persist a frame or packed image; ``extra_meta`` keys ride along as-is."""
    meta = _meta_to_dict(image.meta)
    for key, value in (extra_meta or {}).items():
        if key in _RESERVED_KEYS:
            raise FormatError(f"extra metadata key {key!r} collides with a frame field")
        meta[key] = str(value)
    if isinstance(image, RawFrame):
        payload, q = _encode_pixels(image.data, image.quantized, image.meta.white_level)
        kind = PayloadKind.FRAME_U16 if q else PayloadKind.FRAME_F32
    else:
        payload, q = _encode_pixels(image.channels, image.quantized, image.meta.white_level)
        kind = PayloadKind.PACKED_U16 if q else PayloadKind.PACKED_F32
    write_blob(path, kind, meta, payload)


def read_container(path: Union[str, Path]) -> Union[RawFrame, PackedImage]:
    """Load a frame or packed image; raises HeaderError for other payload kinds."""
    kind, meta_dict, payload = read_blob(path)
    if kind not in (
        PayloadKind.FRAME_U16,
        PayloadKind.FRAME_F32,
        PayloadKind.PACKED_U16,
        PayloadKind.PACKED_F32,
    ):
        raise HeaderError(f"{path}: payload kind {kind.name} is not pixel data")
    meta = _meta_from_dict(meta_dict, path)
    quantized = kind in (PayloadKind.FRAME_U16, PayloadKind.PACKED_U16)
    flat = _decode_pixels(payload, meta.width * meta.height, quantized, path)
    if kind in (PayloadKind.FRAME_U16, PayloadKind.FRAME_F32):
        return RawFrame(meta, flat.reshape(meta.height, meta.width), quantized)
    planes = flat.reshape(len(CHANNEL_ORDER), meta.height // 2, meta.width // 2)
    return PackedImage(meta, planes, quantized)


def read_extra_meta(path: Union[str, Path]) -> dict[str, str]:
    """Return the non-frame metadata keys of a pixel container."""
    _, meta, _ = read_blob(path)
    return {k: v for k, v in meta.items() if k not in _RESERVED_KEYS}
