"""Flat-field correction of raw cubes against dark and flat reference frames."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cube import ABSORPTION_NM, CANONICAL_NM, ImageCube, Modality
from .errors import DimensionMismatch, MissingCalibration

DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True)
class CalibrationSet:
    """Dark frame per band and flat frame per absorption band, keyed by wavelength."""

    dark: dict[int, np.ndarray]
    flat: dict[int, np.ndarray]
    epsilon: float = DEFAULT_EPSILON
    shape: tuple[int, int] | None = field(default=None, init=False)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        missing = [nm for nm in CANONICAL_NM if nm not in self.dark]
        missing += [nm for nm in ABSORPTION_NM if nm not in self.flat]
        if missing:
            raise MissingCalibration(f"no calibration frame for {sorted(set(missing))} nm")
        extra = sorted(set(self.flat) - set(ABSORPTION_NM))
        if extra:
            raise MissingCalibration(f"flat frames given for non-absorption bands {extra}")
        shapes = {np.shape(f) for f in list(self.dark.values()) + list(self.flat.values())}
        if len(shapes) != 1:
            raise DimensionMismatch(f"calibration frames differ in size: {sorted(shapes)}")
        object.__setattr__(self, "shape", shapes.pop())


def flat_field_correct(raw, dark, flat, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """(raw - dark) / max(flat - dark, epsilon), negative numerators clamped to 0."""
    raw, dark, flat = (np.asarray(a, dtype=np.float64) for a in (raw, dark, flat))
    if not raw.shape == dark.shape == flat.shape:
        raise DimensionMismatch(f"raw {raw.shape}, dark {dark.shape}, flat {flat.shape}")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    num = np.maximum(raw - dark, 0.0)
    den = np.maximum(flat - dark, epsilon)
    return (num / den).astype(np.float32)


def dark_subtract(raw, dark) -> np.ndarray:
    raw, dark = np.asarray(raw, dtype=np.float64), np.asarray(dark, dtype=np.float64)
    if raw.shape != dark.shape:
        raise DimensionMismatch(f"raw {raw.shape}, dark {dark.shape}")
    return np.maximum(raw - dark, 0.0).astype(np.float32)


def correct_cube(raw: ImageCube, cal: CalibrationSet) -> ImageCube:
    """Full correction on absorption bands, dark subtraction on fluorescence bands."""
    raw.require_complete()
    if cal.shape != raw.data.shape[1:]:
        raise DimensionMismatch(f"calibration {cal.shape} vs cube {raw.data.shape[1:]}")
    out = np.empty_like(raw.data)
    for i, b in enumerate(raw.bands):
        nm = b.wavelength_nm
        if b.modality is Modality.ABSORPTION:
            out[i] = flat_field_correct(raw.data[i], cal.dark[nm], cal.flat[nm], cal.epsilon)
        else:
            out[i] = dark_subtract(raw.data[i], cal.dark[nm])
    return raw.with_data(out)
