"""Synthetic labelled multispectral fields standing in for cultured algae samples.

Each class pairs a coarse geometric morphology with a nine-band signature
(fluorescence emission at 385/405 nm, absorptance at the seven absorption
bands). Fields are rendered over a zero background, organism pixels carry Gaussian
noise, and labelled ROIs are recovered by running the real segmentation path.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cube import ABSORPTION_NM, CANONICAL_NM, FLUORESCENCE_NM, ImageCube, read_cube, write_cube
from .errors import DataError, MalformedFile, PlacementFailure
from .segment import ROI, Blob, SegmentParams, roi_meta, segment_cube

FL_IDX = [CANONICAL_NM.index(nm) for nm in FLUORESCENCE_NM]
ABS_IDX = [CANONICAL_NM.index(nm) for nm in ABSORPTION_NM]

# Minimum radius for thin strokes; anything >= sqrt(2)/2 keeps a stroke 8-connected.
_STROKE_MIN = 0.75


class Morphology(enum.Enum):
    COLONY_OF_SMALL_SPHERES = "colony"
    THICK_FILAMENT = "thick_filament"
    THIN_FILAMENT = "thin_filament"
    ELLIPSOID_CLUSTER4 = "ellipsoid_cluster4"
    SPINY_ELLIPSOID_CLUSTER = "spiny_ellipsoid_cluster"
    NEEDLE_CRESCENT = "needle_crescent"


@dataclass(frozen=True)
class ClassSpec:
    class_id: int
    name: str
    morphology: Morphology
    signature: tuple[float, ...]
    jitter: float = 0.03
    size_range: tuple[float, float] = (20.0, 40.0)

    def __post_init__(self):
        if len(self.signature) != len(CANONICAL_NM):
            raise ValueError("signature needs one value per canonical band")
        if not all(0.0 <= s <= 1.0 for s in self.signature):
            raise ValueError(f"class {self.class_id}: signature values must lie in [0, 1]")
        lo, hi = self.size_range
        if not 0 < lo <= hi:
            raise ValueError("size_range must satisfy 0 < lo <= hi")


#                 385   405   465   500   520   595   620   635   660
DEFAULT_SPECS = (
    ClassSpec(0, "CPCC 300", Morphology.COLONY_OF_SMALL_SPHERES,
              (0.14, 0.17, 0.55, 0.45, 0.38, 0.52, 0.76, 0.66, 0.70), size_range=(22, 42)),
    ClassSpec(1, "CPCC 067", Morphology.THICK_FILAMENT,
              (0.11, 0.13, 0.48, 0.40, 0.42, 0.62, 0.82, 0.72, 0.60), size_range=(30, 50)),
    ClassSpec(2, "CPCC 471", Morphology.THIN_FILAMENT,
              (0.18, 0.21, 0.45, 0.52, 0.47, 0.57, 0.66, 0.77, 0.64), size_range=(30, 50)),
    ClassSpec(3, "CPCC 005", Morphology.ELLIPSOID_CLUSTER4,
              (0.76, 0.81, 0.76, 0.55, 0.40, 0.34, 0.35, 0.41, 0.72), size_range=(12, 20)),
    ClassSpec(4, "CPCC 158", Morphology.SPINY_ELLIPSOID_CLUSTER,
              (0.70, 0.86, 0.70, 0.61, 0.46, 0.41, 0.40, 0.46, 0.66), size_range=(12, 20)),
    ClassSpec(5, "CPCC 366", Morphology.NEEDLE_CRESCENT,
              (0.82, 0.71, 0.81, 0.50, 0.35, 0.30, 0.31, 0.36, 0.77), size_range=(28, 46)),
)

CLASS_NAMES = tuple(s.name for s in DEFAULT_SPECS)
CYANO_CLASSES = (0, 1, 2)
GREEN_CLASSES = (3, 4, 5)


def check_specs(specs) -> None:
    """Class ids must be 0..n-1 in order and every green class must out-fluoresce every cyano class."""
    ids = [s.class_id for s in specs]
    if ids != list(range(len(specs))):
        raise ValueError(f"class ids must be 0..{len(specs) - 1} in order, got {ids}")
    by_id = {s.class_id: s for s in specs}
    cyan = [by_id[c] for c in CYANO_CLASSES if c in by_id]
    green = [by_id[c] for c in GREEN_CLASSES if c in by_id]
    for i in FL_IDX:
        if cyan and green and max(s.signature[i] for s in cyan) >= min(s.signature[i] for s in green):
            raise ValueError(f"fluorescence at {CANONICAL_NM[i]} nm must be lower for cyanophyta")


# --- rasterization -----------------------------------------------------------

def _stamp_discs(centres: np.ndarray, radii: np.ndarray, pad: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Union of discs on the integer pixel grid. Returns (mask, origin_yx)."""
    cy, cx = centres[:, 0], centres[:, 1]
    y0 = int(math.floor((cy - radii).min())) - pad
    x0 = int(math.floor((cx - radii).min())) - pad
    h = int(math.ceil((cy + radii).max())) + pad - y0 + 1
    w = int(math.ceil((cx + radii).max())) + pad - x0 + 1
    mask = np.zeros((h, w), dtype=bool)
    for (py, px), r in zip(centres, radii):
        ya, yb = int(math.floor(py - r)) - y0, int(math.ceil(py + r)) - y0 + 1
        xa, xb = int(math.floor(px - r)) - x0, int(math.ceil(px + r)) - x0 + 1
        yy = np.arange(ya, yb)[:, None] + y0 - py
        xx = np.arange(xa, xb)[None, :] + x0 - px
        mask[ya:yb, xa:xb] |= yy * yy + xx * xx <= r * r
    return mask, np.array([y0, x0])


def _ellipses(centres: np.ndarray, a: float, b: float, angle: float, pad: int = 2):
    """Union of congruent ellipses (semi-axes a along ``angle``, b across)."""
    reach = a + 1
    y0 = int(math.floor(centres[:, 0].min() - reach)) - pad
    x0 = int(math.floor(centres[:, 1].min() - reach)) - pad
    h = int(math.ceil(centres[:, 0].max() + reach)) + pad - y0 + 1
    w = int(math.ceil(centres[:, 1].max() + reach)) + pad - x0 + 1
    yy, xx = np.mgrid[0:h, 0:w]
    yy = yy + y0
    xx = xx + x0
    ca, sa = math.cos(angle), math.sin(angle)
    mask = np.zeros((h, w), dtype=bool)
    for cy, cx in centres:
        dx, dy = xx - cx, yy - cy
        u = dx * ca + dy * sa
        v = -dx * sa + dy * ca
        mask |= (u / a) ** 2 + (v / b) ** 2 <= 1.0
    return mask, np.array([y0, x0])


def _merge(parts):
    """Union of (mask, origin) pieces on a common grid."""
    y0 = min(o[0] for _, o in parts)
    x0 = min(o[1] for _, o in parts)
    y1 = max(o[0] + m.shape[0] for m, o in parts)
    x1 = max(o[1] + m.shape[1] for m, o in parts)
    out = np.zeros((y1 - y0, x1 - x0), dtype=bool)
    for m, o in parts:
        oy, ox = o[0] - y0, o[1] - x0
        out[oy:oy + m.shape[0], ox:ox + m.shape[1]] |= m
    return out


def _walk(rng, length: float, step: float, turn_sigma: float) -> np.ndarray:
    n = max(2, int(math.ceil(length / step)) + 1)
    heading = rng.uniform(0, 2 * math.pi) + np.cumsum(rng.normal(0.0, turn_sigma, n - 1))
    pts = np.zeros((n, 2))
    pts[1:, 0] = np.cumsum(step * np.sin(heading))
    pts[1:, 1] = np.cumsum(step * np.cos(heading))
    return pts


def _densify(pts: np.ndarray, spacing: float = 0.25) -> np.ndarray:
    out = [pts[:1]]
    for p, q in zip(pts[:-1], pts[1:]):
        k = max(1, int(math.ceil(np.hypot(*(q - p)) / spacing)))
        t = np.arange(1, k + 1)[:, None] / k
        out.append(p + t * (q - p))
    return np.concatenate(out)


# Cell centre spacing of four-celled coenobia, in units of the cell minor semi-axis.
CLUSTER_SPACING = 1.8
CLUSTER_ASPECT = (0.35, 0.5)


def _cluster_centres(a: float, b: float, angle: float) -> np.ndarray:
    d = CLUSTER_SPACING * b
    offs = (np.arange(4) - 1.5) * d
    # cells sit side by side along the minor-axis direction
    return np.column_stack((offs * math.cos(angle), -offs * math.sin(angle)))


def lens_area(r: float, d: float) -> float:
    """Overlap area of two circles of radius r whose centres are d apart."""
    if d >= 2 * r:
        return 0.0
    return 2 * r * r * math.acos(d / (2 * r)) - 0.5 * d * math.sqrt(4 * r * r - d * d)


def expected_cluster_area(size_range: tuple[float, float]) -> float:
    """Mean area of the four-ellipse coenobium under the generator's sampling law.

    Cell length s ~ U(size_range) gives a = s/2, b = a*q with q ~ U(CLUSTER_ASPECT).
    Shrinking the long axis by b/a turns each ellipse into a disc of radius b, so
    the union area is a*b*(4*pi - 3*lens(1, CLUSTER_SPACING)).
    """
    lo, hi = size_range
    mean_a2 = (lo * lo + lo * hi + hi * hi) / 3 / 4
    mean_q = sum(CLUSTER_ASPECT) / 2
    return mean_a2 * mean_q * (4 * math.pi - 3 * lens_area(1.0, CLUSTER_SPACING))


def _shape_mask(spec: ClassSpec, rng: np.random.Generator) -> np.ndarray:
    s = rng.uniform(*spec.size_range)
    m = spec.morphology
    if m is Morphology.COLONY_OF_SMALL_SPHERES:
        radius = s / 2
        r = rng.uniform(1.8, 2.6)
        n_cells = max(3, int(0.6 * (radius / r) ** 2))
        cells = [np.zeros(2)]
        for _ in range(50 * n_cells):
            if len(cells) >= n_cells:
                break
            base = cells[rng.integers(len(cells))]
            ang = rng.uniform(0, 2 * math.pi)
            c = base + 1.6 * r * np.array([math.sin(ang), math.cos(ang)])
            if np.hypot(*c) <= radius - r:
                cells.append(c)
        centres = np.array(cells) + rng.uniform(0.0, 1.0, 2)
        return _stamp_discs(centres, np.full(len(centres), r))[0]
    if m is Morphology.THICK_FILAMENT:
        rb = rng.uniform(2.4, 3.2)
        pts = _walk(rng, s, 1.7 * rb, 0.3) + rng.uniform(0.0, 1.0, 2)
        return _stamp_discs(pts, np.full(len(pts), rb))[0]
    if m is Morphology.THIN_FILAMENT:
        pts = _densify(_walk(rng, s, 2.0, 0.25)) + rng.uniform(0.0, 1.0, 2)
        return _stamp_discs(pts, np.full(len(pts), rng.uniform(_STROKE_MIN, 1.1)))[0]
    if m in (Morphology.ELLIPSOID_CLUSTER4, Morphology.SPINY_ELLIPSOID_CLUSTER):
        a = s / 2
        b = a * rng.uniform(*CLUSTER_ASPECT)
        angle = rng.uniform(0, math.pi)
        centres = _cluster_centres(a, b, angle) + rng.uniform(0.0, 1.0, 2)
        body = _ellipses(centres, a, b, angle)
        if m is Morphology.ELLIPSOID_CLUSTER4:
            return body[0]
        spines = []
        axis = np.array([math.sin(angle), math.cos(angle)])
        across = np.array([-math.cos(angle), math.sin(angle)])
        for end_cell, side in ((centres[0], 1.0), (centres[3], -1.0)):
            for tip in (1.0, -1.0):
                start = end_cell + tip * a * 0.92 * axis
                direction = tip * axis + side * 0.55 * across
                direction /= np.hypot(*direction)
                length = a * rng.uniform(0.7, 1.0)
                pts = _densify(np.array([start, start + length * direction]))
                spines.append(_stamp_discs(pts, np.full(len(pts), _STROKE_MIN)))
        return _merge([body] + spines)
    if m is Morphology.NEEDLE_CRESCENT:
        bend = rng.uniform(1.2, 2.5) * s
        half_angle = s / (2 * bend)
        t = np.linspace(-1.0, 1.0, max(16, int(4 * s)))
        phi = rng.uniform(0, 2 * math.pi) + t * half_angle
        pts = np.column_stack((bend * np.sin(phi), bend * np.cos(phi))) + rng.uniform(0.0, 1.0, 2)
        widths = np.maximum(rng.uniform(1.8, 2.4) * (1 - t * t), _STROKE_MIN)
        return _stamp_discs(pts, widths)[0]
    raise ValueError(f"unknown morphology {m}")


def _tight(mask: np.ndarray) -> np.ndarray:
    ys, xs = np.nonzero(mask)
    return mask[ys.min():ys.max() + 1, xs.min():xs.max() + 1]


def organism_values(spec: ClassSpec, rng: np.random.Generator) -> np.ndarray:
    sig = np.asarray(spec.signature, dtype=np.float64)
    if spec.jitter > 0:
        sig = sig + rng.normal(0.0, spec.jitter, sig.shape)
    return np.clip(sig, 0.0, 1.0)


def render_organism(spec: ClassSpec, rng: np.random.Generator,
                    noise_sigma: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Render one organism as a (9, h, w) float32 patch plus its boolean mask.

    Organism pixels carry the jittered signature, background is zero, then
    Gaussian noise is added and the result clamped at zero.
    """
    mask = _tight(_shape_mask(spec, rng))
    values = organism_values(spec, rng)
    patch = mask[None, :, :] * values[:, None, None]
    if noise_sigma > 0:
        patch = np.maximum(patch + rng.normal(0.0, noise_sigma, patch.shape), 0.0)
    return patch.astype(np.float32), mask


# --- fields ------------------------------------------------------------------

@dataclass(frozen=True)
class FieldParams:
    field_size: int = 256
    organisms_per_field: int = 8
    noise_sigma: float = 0.02
    background_sigma: float = 0.0
    gap: int = 3
    max_retries: int = 500


@dataclass(frozen=True, eq=False)
class Placement:
    class_id: int
    blob: Blob


def generate_field(specs, organism_count: int, field_size: int, rng: np.random.Generator,
                   noise_sigma: float = 0.02, classes=None, gap: int = 3,
                   max_retries: int = 500, background_sigma: float = 0.0
                   ) -> tuple[ImageCube, list[Placement]]:
    """Scatter organisms over an empty field without bounding-box overlap.

    ``classes`` fixes the class of each organism; otherwise classes are drawn
    uniformly from ``specs``. ``noise_sigma`` perturbs organism pixels; the
    background stays exactly zero unless ``background_sigma`` is set, in which
    case an organism-free field is no longer constant and Otsu will split its noise.
    """
    if organism_count < 0:
        raise ValueError("organism_count must be >= 0")
    if classes is None:
        classes = rng.integers(len(specs), size=organism_count).tolist()
    elif len(classes) != organism_count:
        raise ValueError("classes must list one class per organism")
    data = np.zeros((len(CANONICAL_NM), field_size, field_size), dtype=np.float64)
    boxes: list[tuple[int, int, int, int]] = []
    truth = []
    for cid in classes:
        spec = specs[cid]
        patch, mask = render_organism(spec, rng)
        h, w = mask.shape
        if h + 2 > field_size or w + 2 > field_size:
            raise PlacementFailure(f"organism {w}x{h} does not fit a {field_size} field")
        for _ in range(max_retries):
            y = int(rng.integers(1, field_size - h))
            x = int(rng.integers(1, field_size - w))
            if all(x + w + gap <= bx0 or bx1 + gap <= x or y + h + gap <= by0 or by1 + gap <= y
                   for bx0, by0, bx1, by1 in boxes):
                break
        else:
            raise PlacementFailure(
                f"could not place organism {len(truth) + 1}/{organism_count} after {max_retries} tries"
            )
        boxes.append((x, y, x + w, y + h))
        region = data[:, y:y + h, x:x + w]
        region[:, mask] = patch[:, mask]
        ys, xs = np.nonzero(mask)
        truth.append(Placement(int(cid), Blob.from_pixels(np.column_stack((ys + y, xs + x)))))
    if noise_sigma > 0 and truth:
        fg = np.zeros((field_size, field_size), dtype=bool)
        for t in truth:
            fg[t.blob.pixels[:, 0], t.blob.pixels[:, 1]] = True
        data[:, fg] += rng.normal(0.0, noise_sigma, (data.shape[0], int(fg.sum())))
    if background_sigma > 0:
        data += rng.normal(0.0, background_sigma, data.shape)
    data = np.maximum(data, 0.0)
    return ImageCube.from_planes(list(data.astype(np.float32))), truth


def blob_iou(a: Blob, b: Blob) -> float:
    ax0, ay0, ax1, ay1 = a.bbox
    bx0, by0, bx1, by1 = b.bbox
    if ax1 <= bx0 or bx1 <= ax0 or ay1 <= by0 or by1 <= ay0:
        return 0.0
    key = lambda px: px[:, 0] * 1_000_003 + px[:, 1]
    inter = np.intersect1d(key(a.pixels), key(b.pixels), assume_unique=True).size
    return inter / (a.area + b.area - inter)


def match_blobs(found, truth, min_iou: float = 0.5) -> list[int | None]:
    """For each found blob, the index of the ground-truth placement with IoU > min_iou."""
    out = []
    for blob in found:
        best, best_iou = None, min_iou
        for j, t in enumerate(truth):
            iou = blob_iou(blob, t.blob)
            if iou > best_iou:
                best, best_iou = j, iou
        out.append(best)
    return out


# --- datasets ----------------------------------------------------------------

@dataclass(eq=False)
class PhantomDataset:
    rois: list[ROI]
    class_counts: tuple[int, ...]
    seed: int
    fields: list[int] = field(default_factory=list)

    def __len__(self):
        return len(self.rois)

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.rois], dtype=np.int64)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Stacked crops (N, 9, S, S) float32 and labels (N,)."""
        if not self.rois:
            return np.zeros((0, len(CANONICAL_NM), 0, 0), np.float32), np.zeros(0, np.int64)
        return np.stack([r.crop.data for r in self.rois]), self.labels

    def subset(self, idx) -> "PhantomDataset":
        rois = [self.rois[i] for i in idx]
        fields = [self.fields[i] for i in idx] if self.fields else []
        n = len(self.class_counts)
        counts = tuple(sum(1 for r in rois if r.label == c) for c in range(n))
        return PhantomDataset(rois, counts, self.seed, fields)


@dataclass(frozen=True)
class DatasetParams:
    counts: tuple[int, ...] = (200,) * 6
    fieldp: FieldParams = FieldParams()
    segment: SegmentParams = SegmentParams()
    min_iou: float = 0.5
    max_extra_fields: int = 200


def field_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def _run_field(args):
    specs, classes, seed, index, fieldp, segp, min_iou = args
    rng = field_rng(seed, index)
    cube, truth = generate_field(specs, len(classes), fieldp.field_size, rng, fieldp.noise_sigma,
                                 classes, fieldp.gap, fieldp.max_retries, fieldp.background_sigma)
    result, rois = segment_cube(cube, segp)
    matched = match_blobs(result.blobs, truth, min_iou)
    labelled = []
    for roi, j in zip(rois, matched):
        if j is None:
            continue
        label = truth[j].class_id
        meta = roi_meta(roi.blob, f"field:{index}", label)
        meta["field"] = str(index)
        labelled.append(replace(roi, label=label, crop=roi.crop.with_data(roi.crop.data, meta)))
    return index, labelled


def generate_dataset(specs=DEFAULT_SPECS, params: DatasetParams = DatasetParams(), seed: int = 0,
                     jobs: int = 1) -> PhantomDataset:
    """Render fields, segment them and keep ROIs labelled by ground-truth IoU matching.

    Class order across fields comes from one seeded shuffle; each field draws
    from its own generator seeded by (seed, field index), so any ``jobs`` value
    gives the same dataset.
    """
    check_specs(specs)
    counts = tuple(int(c) for c in params.counts)
    if len(counts) != len(specs) or min(counts) < 1:
        raise ValueError("need a count >= 1 for every class")
    per_field = params.fieldp.organisms_per_field
    schedule = np.repeat(np.arange(len(specs)), counts)
    np.random.default_rng([int(seed), 2**31]).shuffle(schedule)
    chunks = [schedule[i:i + per_field].tolist() for i in range(0, len(schedule), per_field)]

    kept: list[list[ROI]] = [[] for _ in specs]
    kept_fields: list[list[int]] = [[] for _ in specs]

    def absorb(results):
        for index, rois in results:
            for roi in rois:
                if len(kept[roi.label]) < counts[roi.label]:
                    kept[roi.label].append(roi)
                    kept_fields[roi.label].append(index)

    def tasks(start, chunk_list):
        return [(tuple(specs), c, seed, start + i, params.fieldp, params.segment, params.min_iou)
                for i, c in enumerate(chunk_list)]

    absorb(_map(_run_field, tasks(0, chunks), jobs))
    next_index = len(chunks)
    for _ in range(params.max_extra_fields):
        deficit = [counts[c] - len(kept[c]) for c in range(len(specs))]
        if max(deficit) <= 0:
            break
        need = np.repeat(np.arange(len(specs)), np.maximum(deficit, 0))[:per_field].tolist()
        absorb(_map(_run_field, tasks(next_index, [need]), 1))
        next_index += 1
    else:
        if any(len(kept[c]) < counts[c] for c in range(len(specs))):
            raise PlacementFailure("could not recover the requested ROI counts")

    # interleave by field index so the ROI order does not depend on class
    order = sorted(
        ((f, i, c) for c in range(len(specs)) for i, f in enumerate(kept_fields[c])),
        key=lambda t: (t[0], kept[t[2]][t[1]].blob_id),
    )
    rois = [kept[c][i] for _, i, c in order]
    fields = [f for f, _, _ in order]
    return PhantomDataset(rois, counts, int(seed), fields)


def _map(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


# --- persistence -------------------------------------------------------------

MANIFEST = "manifest.txt"
MANIFEST_HEADER = "# path\tclass_id\tfield\tbbox"


def roi_filename(field_index: int, blob_id: int) -> str:
    return f"field{field_index:05d}_blob{blob_id:03d}.cube"


def save_dataset(ds: PhantomDataset, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [MANIFEST_HEADER, f"# seed={ds.seed}"]
    for roi, f in zip(ds.rois, ds.fields):
        name = roi_filename(f, roi.blob_id)
        write_cube(roi.crop, out / name)
        lines.append(f"{name}\t{roi.label}\t{f}\t{','.join(map(str, roi.blob.bbox))}")
    path = out / MANIFEST
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_dataset(root, n_classes: int = len(DEFAULT_SPECS)) -> PhantomDataset:
    root = Path(root)
    manifest = root / MANIFEST if root.is_dir() else root
    base = manifest.parent
    rois, fields, seed = [], [], 0
    for ln, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), 1):
        if line.startswith("# seed="):
            seed = int(line.split("=", 1)[1])
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise MalformedFile(f"{manifest}:{ln}: expected 4 tab-separated fields")
        name, label, fidx, bbox = parts
        crop = read_cube(base / name)
        box = tuple(int(v) for v in bbox.split(","))
        blob_id = int(name.rsplit("blob", 1)[1].split(".")[0]) if "blob" in name else len(rois)
        label = int(label)
        if not 0 <= label < n_classes:
            raise DataError(f"{manifest}:{ln}: label {label} out of range")
        blob = _blob_from_meta(crop.meta, box)
        rois.append(ROI(crop, blob_id, blob, label))
        fields.append(int(fidx))
    counts = tuple(sum(1 for r in rois if r.label == c) for c in range(n_classes))
    return PhantomDataset(rois, counts, seed, fields)


def _blob_from_meta(meta, box) -> Blob:
    cx, cy = (float(v) for v in meta.get("centroid", "nan,nan").split(","))
    area = int(meta.get("area", (box[2] - box[0]) * (box[3] - box[1])))
    return Blob(np.zeros((0, 2), dtype=np.int64), box, area, (cx, cy))


def default_jobs() -> int:
    return max(1, min(4, os.cpu_count() or 1))
