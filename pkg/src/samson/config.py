"""INI-style pipeline configuration with documented defaults.

Every key below may appear in the config file; ``--set section.key=value`` and
the common CLI flags override file values. Relative paths resolve against the
config file's directory (or the working directory without a file).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .cube import CANONICAL_NM
from .errors import ConfigError
from .evaluate import SplitSpec
from .nn.train import TrainConfig
from .phantom import DEFAULT_SPECS, ClassSpec, DatasetParams, FieldParams
from .segment import Connectivity, SegmentParams

DEFAULTS: dict[str, dict[str, str]] = {
    "global": {"seed": "0", "jobs": "1"},
    "paths": {
        "raw": "raw",
        "calibration": "calibration",
        "corrected": "corrected",
        "cubes": "",  # segment/extract input; defaults to paths.corrected
        "masks": "masks",
        "rois": "rois",
        "dataset": "dataset",
        "model": "model.samsmodl",
        "history": "history.txt",
        "eval": "eval",
    },
    "calibration": {"epsilon": "1e-6"},
    "segment": {"bins": "256", "min_area": "20", "out_size": "64", "connectivity": "8"},
    "phantom": {
        "counts": "200,200,200,200,200,200",
        "field_size": "256",
        "organisms_per_field": "8",
        "noise_sigma": "0.02",
        "background_sigma": "0.0",
        "jitter": "0.03",
        "gap": "3",
    },
    "split": {"train_fraction": "0.7", "stratified": "true"},
    "train": {
        "epochs": "12",
        "batch_size": "32",
        "lr": "0.05",
        "schedule": "cosine",
        "momentum": "0.9",
        "weight_decay": "5e-4",
        "augment_flips": "false",
        "augment_rot90": "false",
    },
}


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass
class PipelineConfig:
    raw: configparser.ConfigParser
    base: Path
    overrides: dict[str, str] = field(default_factory=dict)

    def get(self, section: str, key: str) -> str:
        try:
            return self.raw.get(section, key)
        except (configparser.NoSectionError, configparser.NoOptionError):
            raise ConfigError(f"missing config value {section}.{key}") from None

    def typed(self, section: str, key: str, conv):
        s = self.get(section, key)
        try:
            return conv(s)
        except ValueError as exc:
            raise ConfigError(f"{section}.{key} = {s!r}: {exc}") from None

    def path(self, key: str) -> Path:
        s = self.get("paths", key)
        if not s and key == "cubes":
            return self.path("corrected")
        p = Path(s)
        return p if p.is_absolute() else self.base / p

    @property
    def seed(self) -> int:
        return self.typed("global", "seed", int)

    @property
    def jobs(self) -> int:
        return max(1, self.typed("global", "jobs", int))

    def segment_params(self) -> SegmentParams:
        conn = self.typed("segment", "connectivity", int)
        if conn not in (4, 8):
            raise ConfigError("segment.connectivity must be 4 or 8")
        try:
            return SegmentParams(
                bins=self.typed("segment", "bins", int),
                min_area=self.typed("segment", "min_area", int),
                out_size=self.typed("segment", "out_size", int),
                connectivity=Connectivity(conn),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def class_specs(self) -> tuple[ClassSpec, ...]:
        jitter = self.typed("phantom", "jitter", float)
        specs = []
        for s in DEFAULT_SPECS:
            key = f"signature_{s.class_id}"
            sig = s.signature
            if self.raw.has_option("phantom", key):
                sig = self.typed("phantom", key, lambda v: tuple(float(t) for t in v.split(",")))
                if len(sig) != len(CANONICAL_NM):
                    raise ConfigError(f"phantom.{key} needs {len(CANONICAL_NM)} values")
            try:
                specs.append(ClassSpec(s.class_id, s.name, s.morphology, sig, jitter, s.size_range))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        return tuple(specs)

    def dataset_params(self) -> DatasetParams:
        counts = self.typed("phantom", "counts", lambda v: tuple(int(t) for t in v.split(",")))
        fieldp = FieldParams(
            field_size=self.typed("phantom", "field_size", int),
            organisms_per_field=self.typed("phantom", "organisms_per_field", int),
            noise_sigma=self.typed("phantom", "noise_sigma", float),
            background_sigma=self.typed("phantom", "background_sigma", float),
            gap=self.typed("phantom", "gap", int),
        )
        return DatasetParams(counts=counts, fieldp=fieldp, segment=self.segment_params())

    def split_spec(self) -> SplitSpec:
        try:
            return SplitSpec(self.typed("split", "train_fraction", float), self.seed,
                             self.typed("split", "stratified", _bool))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def train_config(self) -> TrainConfig:
        t = "train"
        try:
            return TrainConfig(
                epochs=self.typed(t, "epochs", int),
                batch_size=self.typed(t, "batch_size", int),
                lr=self.typed(t, "lr", float),
                schedule=self.get(t, "schedule"),
                momentum=self.typed(t, "momentum", float),
                weight_decay=self.typed(t, "weight_decay", float),
                seed=self.seed,
                augment_flips=self.typed(t, "augment_flips", _bool),
                augment_rot90=self.typed(t, "augment_rot90", _bool),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def dump(self) -> str:
        """Effective configuration as INI text, sections and keys sorted."""
        lines = []
        for section in sorted(self.raw.sections()):
            lines.append(f"[{section}]")
            for key in sorted(self.raw.options(section)):
                lines.append(f"{key} = {self.raw.get(section, key)}")
            lines.append("")
        return "\n".join(lines)


def load_config(path=None, overrides: dict[str, str] | None = None) -> PipelineConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_dict(DEFAULTS)
    base = Path.cwd()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} not found")
        try:
            with open(p, encoding="utf-8") as fh:
                cp.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{p}: {exc}") from None
        base = p.resolve().parent
    overrides = dict(overrides or {})
    for dotted, value in overrides.items():
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        section, key = dotted.split(".", 1)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, value)
    return PipelineConfig(cp, base, overrides)
