"""Otsu foreground segmentation, blob extraction and fixed-size ROI cropping."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .cube import ImageCube, composite_absorption
from .errors import DimensionMismatch, EmptyHistogram


class Connectivity(enum.Enum):
    FOUR = 4
    EIGHT = 8


_STRUCTURE = {
    Connectivity.FOUR: ndimage.generate_binary_structure(2, 1),
    Connectivity.EIGHT: ndimage.generate_binary_structure(2, 2),
}


@dataclass(frozen=True, eq=False)
class Histogram:
    counts: np.ndarray
    lo: float
    hi: float
    degenerate: bool = False

    @property
    def bin_count(self) -> int:
        return len(self.counts)

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.bin_count

    def upper_edge(self, b: int) -> float:
        if b == self.bin_count - 1:
            return self.hi
        return self.lo + (b + 1) * self.width


def compute_histogram(img, bin_count: int = 256) -> Histogram:
    """Histogram over [min, max] of ``img``; bin b covers [lo + b*w, lo + (b+1)*w), last bin closed.

    A constant image puts every pixel into bin 0 and sets ``degenerate``.
    """
    if bin_count < 2:
        raise ValueError("bin_count must be >= 2")
    v = np.asarray(img, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyHistogram("image has no pixels")
    lo, hi = float(v.min()), float(v.max())
    counts = np.zeros(bin_count, dtype=np.int64)
    if hi == lo:
        counts[0] = v.size
        return Histogram(counts, lo, hi, degenerate=True)
    w = (hi - lo) / bin_count
    idx = np.clip(np.floor((v - lo) / w).astype(np.int64), 0, bin_count - 1)
    counts += np.bincount(idx, minlength=bin_count)
    return Histogram(counts, lo, hi)


def otsu_bin(counts) -> int | None:
    """Index t of the last background bin maximizing between-class variance.

    Classes are bins [0, t] and [t+1, B). Scores are compared as exact rationals
    ``(s0*n1 - s1*n0)**2 / (n0*n1)``, which is proportional to
    w0*w1*(mu0 - mu1)**2, so ties resolve to the smallest t deterministically.
    Returns None when every split has zero between-class variance.
    """
    counts = [int(c) for c in counts]
    n_total = sum(counts)
    if n_total <= 0:
        raise EmptyHistogram("histogram has no samples")
    s_total = sum(b * c for b, c in enumerate(counts))
    best_t, best_num, best_den = None, 0, 1
    n0 = s0 = 0
    for t in range(len(counts) - 1):
        n0 += counts[t]
        s0 += t * counts[t]
        n1, s1 = n_total - n0, s_total - s0
        if n0 == 0 or n1 == 0:
            continue
        num = (s0 * n1 - s1 * n0) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def otsu_threshold(hist: Histogram) -> float:
    if hist.degenerate:
        if hist.counts.sum() <= 0:
            raise EmptyHistogram("histogram has no samples")
        return hist.lo
    t = otsu_bin(hist.counts)
    if t is None:
        return hist.lo
    return hist.upper_edge(t)


def binarize(img, theta: float) -> np.ndarray:
    return np.asarray(img) > theta


@dataclass(frozen=True, eq=False)
class Blob:
    """One connected foreground region; ``pixels`` holds (row, col) pairs in raster order.

    ``bbox`` is (x0, y0, x1, y1) with exclusive upper bounds, ``centroid`` is (x, y).
    """

    pixels: np.ndarray
    bbox: tuple[int, int, int, int]
    area: int
    centroid: tuple[float, float]

    @classmethod
    def from_pixels(cls, pixels) -> "Blob":
        px = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
        px = px[np.lexsort((px[:, 1], px[:, 0]))]
        ys, xs = px[:, 0], px[:, 1]
        bbox = (int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)
        return cls(px, bbox, len(px), (float(xs.mean()), float(ys.mean())))

    @property
    def width(self) -> int:
        return self.bbox[2] - self.bbox[0]

    @property
    def height(self) -> int:
        return self.bbox[3] - self.bbox[1]

    def mask(self, shape) -> np.ndarray:
        m = np.zeros(shape, dtype=bool)
        m[self.pixels[:, 0], self.pixels[:, 1]] = True
        return m


def connected_components(mask, connectivity: Connectivity = Connectivity.EIGHT) -> list[Blob]:
    """Blobs of a boolean mask, ordered by bounding-box (y0, x0), then first raster pixel."""
    mask = np.asarray(mask, dtype=bool)
    labels, n = ndimage.label(mask, structure=_STRUCTURE[Connectivity(connectivity)])
    blobs = []
    for k, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        ys, xs = np.nonzero(labels[sl] == k)
        px = np.column_stack((ys + sl[0].start, xs + sl[1].start))
        blobs.append(Blob.from_pixels(px))
    blobs.sort(key=lambda b: (b.bbox[1], b.bbox[0], tuple(b.pixels[0])))
    return blobs


def filter_blobs(blobs, min_area: int) -> list[Blob]:
    if min_area < 1:
        raise ValueError("min_area must be >= 1")
    return [b for b in blobs if b.area >= min_area]


def square_window(blob: Blob) -> tuple[int, int, int]:
    """(x, y, side) of the blob box grown to a square about its centre."""
    side = max(blob.width, blob.height)
    x = blob.bbox[0] - (side - blob.width) // 2
    y = blob.bbox[1] - (side - blob.height) // 2
    return x, y, side


def crop_padded(data: np.ndarray, x: int, y: int, side: int) -> np.ndarray:
    """Crop a (B, H, W) stack at [y:y+side, x:x+side], zero outside the image."""
    out = np.zeros(data.shape[:-2] + (side, side), dtype=data.dtype)
    h, w = data.shape[-2:]
    sy0, sy1 = max(y, 0), min(y + side, h)
    sx0, sx1 = max(x, 0), min(x + side, w)
    if sy0 < sy1 and sx0 < sx1:
        out[..., sy0 - y:sy1 - y, sx0 - x:sx1 - x] = data[..., sy0:sy1, sx0:sx1]
    return out


def _bilinear_taps(n_in: int, n_out: int):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(data: np.ndarray, out_h: int, out_w: int | None = None) -> np.ndarray:
    """Bilinear resize over the last two axes with half-pixel centres.

    Same-size resize is the identity and constants are preserved.
    """
    out_w = out_h if out_w is None else out_w
    h, w = data.shape[-2:]
    if (h, w) == (out_h, out_w):
        return data.copy()
    a = data.astype(np.float64)
    y0, y1, fy = _bilinear_taps(h, out_h)
    x0, x1, fx = _bilinear_taps(w, out_w)
    rows = a[..., y0, :] * (1 - fy)[:, None] + a[..., y1, :] * fy[:, None]
    out = rows[..., x0] * (1 - fx) + rows[..., x1] * fx
    return out.astype(data.dtype)


@dataclass(frozen=True, eq=False)
class ROI:
    crop: ImageCube
    blob_id: int
    blob: Blob | None = None
    label: int | None = None


def roi_meta(blob: Blob, source: str = "", label: int | None = None) -> dict[str, str]:
    meta = {
        "bbox": ",".join(str(v) for v in blob.bbox),
        "centroid": f"{blob.centroid[0]:.6f},{blob.centroid[1]:.6f}",
        "area": str(blob.area),
    }
    if source:
        meta["source"] = source
    if label is not None:
        meta["label"] = str(label)
    return meta


def extract_roi(cube: ImageCube, blob: Blob, out_size: int = 64, blob_id: int = 0,
                source: str = "", label: int | None = None) -> ROI:
    """Crop every band over the same square window and resize to out_size x out_size."""
    x0, y0, x1, y1 = blob.bbox
    if x0 < 0 or y0 < 0 or x1 > cube.width or y1 > cube.height:
        raise DimensionMismatch(f"blob box {blob.bbox} outside {cube.width}x{cube.height} cube")
    x, y, side = square_window(blob)
    window = crop_padded(cube.data, x, y, side)
    crop = resize_bilinear(window, out_size)
    return ROI(ImageCube(cube.bands, crop, roi_meta(blob, source, label)), blob_id, blob, label)


@dataclass(frozen=True)
class SegmentParams:
    bins: int = 256
    min_area: int = 20
    out_size: int = 64
    connectivity: Connectivity = Connectivity.EIGHT


@dataclass(frozen=True, eq=False)
class SegmentationResult:
    theta: float
    mask: np.ndarray
    histogram: Histogram
    blobs: list[Blob] = field(default_factory=list)

    @property
    def source_stats(self) -> tuple[float, float, Histogram]:
        return self.histogram.lo, self.histogram.hi, self.histogram


def segment_cube(cube: ImageCube, params: SegmentParams = SegmentParams(),
                 source: str = "") -> tuple[SegmentationResult, list[ROI]]:
    composite = composite_absorption(cube)
    hist = compute_histogram(composite, params.bins)
    theta = otsu_threshold(hist)
    mask = binarize(composite, theta)
    blobs = filter_blobs(connected_components(mask, params.connectivity), params.min_area)
    rois = [extract_roi(cube, b, params.out_size, i, source) for i, b in enumerate(blobs)]
    return SegmentationResult(theta, mask, hist, blobs), rois
