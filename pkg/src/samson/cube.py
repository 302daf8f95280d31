"""Nine-band image cube model and the SAMSCUBE binary file format.

Layout (all integers little-endian)::

    magic      8 bytes  b"SAMSCUBE"
    version    u16      1
    width      u32
    height     u32
    band_count u16
    bands      band_count x (wavelength u16, modality u8)
    payload    band_count planes, each height x width float32 LE, row-major
    meta       optional: u32 pair count, then (u32 len, utf-8 key, u32 len, utf-8 value)*

The meta section is only written when the cube carries metadata, so an empty-meta
file is exactly header + payload bytes.
"""

from __future__ import annotations

import enum
import os
import struct
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DimensionMismatch, IoFailure, MalformedFile, NonFiniteData, UnknownBand

MAGIC = b"SAMSCUBE"
VERSION = 1
_HEADER = struct.Struct("<8sHIIH")
_BAND = struct.Struct("<HB")
_U32 = struct.Struct("<I")


class Modality(enum.IntEnum):
    FLUORESCENCE = 0
    ABSORPTION = 1


FLUORESCENCE_NM = (385, 405)
ABSORPTION_NM = (465, 500, 520, 595, 620, 635, 660)
CANONICAL_NM = FLUORESCENCE_NM + ABSORPTION_NM


@dataclass(frozen=True, order=True)
class Band:
    wavelength_nm: int
    modality: Modality

    def __post_init__(self):
        expected = modality_for(self.wavelength_nm)
        if self.modality != expected:
            raise UnknownBand(f"{self.wavelength_nm} nm must be {expected.name.lower()}")

    @classmethod
    def of(cls, wavelength_nm: int) -> "Band":
        return cls(int(wavelength_nm), modality_for(wavelength_nm))


def modality_for(wavelength_nm: int) -> Modality:
    if wavelength_nm in FLUORESCENCE_NM:
        return Modality.FLUORESCENCE
    if wavelength_nm in ABSORPTION_NM:
        return Modality.ABSORPTION
    raise UnknownBand(f"{wavelength_nm} nm is not an instrument band")


CANONICAL_BANDS = tuple(Band.of(nm) for nm in CANONICAL_NM)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float32)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ImageCube:
    """Registered stack of single-band float32 images sharing one pixel grid.

    ``data`` has shape (band_count, height, width). Pipeline cubes hold the nine
    canonical bands; calibration frames hold a single band.
    """

    bands: tuple[Band, ...]
    data: np.ndarray
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise DimensionMismatch(f"cube data must be 3-D, got shape {data.shape}")
        if len(self.bands) != data.shape[0]:
            raise DimensionMismatch(f"{len(self.bands)} bands but {data.shape[0]} planes")
        if not 1 <= len(self.bands) <= 255:
            raise DimensionMismatch("band count must be within 1..255")
        if data.shape[1] < 1 or data.shape[2] < 1:
            raise DimensionMismatch("cube planes must be at least 1x1")
        nms = [b.wavelength_nm for b in self.bands]
        if nms != sorted(set(nms)):
            raise DimensionMismatch(f"bands must be unique and ascending, got {nms}")
        data = _frozen(data)
        if not np.isfinite(data).all():
            raise NonFiniteData("cube contains NaN or Inf")
        object.__setattr__(self, "bands", tuple(self.bands))
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "meta", {str(k): str(v) for k, v in dict(self.meta).items()})

    @classmethod
    def from_planes(cls, planes, meta=None, wavelengths=CANONICAL_NM) -> "ImageCube":
        """Build a cube from per-band 2-D arrays listed in ``wavelengths`` order."""
        planes = [np.asarray(p) for p in planes]
        shapes = {p.shape for p in planes}
        if len(shapes) != 1:
            raise DimensionMismatch(f"band images differ in size: {sorted(shapes)}")
        return cls(tuple(Band.of(nm) for nm in wavelengths), np.stack(planes), meta or {})

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def wavelengths(self) -> tuple[int, ...]:
        return tuple(b.wavelength_nm for b in self.bands)

    @property
    def is_complete(self) -> bool:
        return self.bands == CANONICAL_BANDS

    def require_complete(self) -> "ImageCube":
        if not self.is_complete:
            raise DimensionMismatch(f"expected the 9 canonical bands, got {self.wavelengths}")
        return self

    def with_data(self, data: np.ndarray, meta: Mapping[str, str] | None = None) -> "ImageCube":
        return ImageCube(self.bands, data, self.meta if meta is None else meta)

    def equals(self, other: "ImageCube") -> bool:
        """Bitwise equality of bands, pixels and metadata."""
        return (
            self.bands == other.bands
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
            and dict(self.meta) == dict(other.meta)
        )


def band(cube: ImageCube, wavelength_nm: int) -> np.ndarray:
    try:
        i = cube.wavelengths.index(wavelength_nm)
    except ValueError:
        raise UnknownBand(f"{wavelength_nm} nm not present in cube") from None
    return cube.data[i]


def composite_absorption(cube: ImageCube) -> np.ndarray:
    """Pixelwise mean of the seven absorption planes (float32)."""
    cube.require_complete()
    idx = [i for i, b in enumerate(cube.bands) if b.modality is Modality.ABSORPTION]
    acc = np.zeros(cube.data.shape[1:], dtype=np.float64)
    for i in idx:
        acc += cube.data[i]
    return (acc / len(idx)).astype(np.float32)


def header_size(band_count: int) -> int:
    return _HEADER.size + _BAND.size * band_count


def encode_cube(cube: ImageCube) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, cube.width, cube.height, len(cube.bands))]
    parts += [_BAND.pack(b.wavelength_nm, int(b.modality)) for b in cube.bands]
    parts.append(cube.data.astype("<f4", copy=False).tobytes())
    if cube.meta:
        parts.append(_U32.pack(len(cube.meta)))
        for k in sorted(cube.meta):
            for s in (k, cube.meta[k]):
                raw = s.encode("utf-8")
                parts += [_U32.pack(len(raw)), raw]
    return b"".join(parts)


def decode_cube(buf: bytes) -> ImageCube:
    if len(buf) < _HEADER.size:
        raise MalformedFile("truncated header")
    magic, version, width, height, count = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise MalformedFile(f"bad magic {magic!r}")
    if version != VERSION:
        raise MalformedFile(f"unsupported version {version}")
    if count < 1 or width < 1 or height < 1:
        raise DimensionMismatch(f"header declares {count} bands of {width}x{height}")
    off = _HEADER.size
    if len(buf) < header_size(count):
        raise MalformedFile("truncated band table")
    bands = []
    for _ in range(count):
        nm, mod = _BAND.unpack_from(buf, off)
        off += _BAND.size
        try:
            bands.append(Band(nm, Modality(mod)))
        except (ValueError, UnknownBand) as exc:
            raise MalformedFile(f"invalid band record ({nm} nm, modality {mod})") from exc
    n = count * width * height
    end = off + 4 * n
    if len(buf) < end:
        raise DimensionMismatch(
            f"payload holds {(len(buf) - off) // 4} floats, header implies {n}"
        )
    data = np.frombuffer(buf, dtype="<f4", count=n, offset=off).reshape(count, height, width)
    if not np.isfinite(data).all():
        raise NonFiniteData("payload contains NaN or Inf")
    meta = _decode_meta(buf, end)
    try:
        return ImageCube(tuple(bands), data.astype(np.float32), meta)
    except DimensionMismatch as exc:
        raise MalformedFile(str(exc)) from exc


def _decode_meta(buf: bytes, off: int) -> dict[str, str]:
    if off == len(buf):
        return {}

    def take(off, size):
        if off + size > len(buf):
            raise MalformedFile("truncated metadata")
        return buf[off:off + size], off + size

    raw, off = take(off, 4)
    meta = {}
    for _ in range(_U32.unpack(raw)[0]):
        pair = []
        for _ in range(2):
            raw, off = take(off, 4)
            raw, off = take(off, _U32.unpack(raw)[0])
            try:
                pair.append(raw.decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise MalformedFile("metadata is not UTF-8") from exc
        meta[pair[0]] = pair[1]
    if off != len(buf):
        raise MalformedFile(f"{len(buf) - off} trailing bytes after metadata")
    return meta


def write_cube(cube: ImageCube, path) -> None:
    payload = encode_cube(cube)
    tmp = f"{os.fspath(path)}.part"
    try:
        with open(tmp, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_cube(path) -> ImageCube:
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return decode_cube(buf)
