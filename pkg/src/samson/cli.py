"""Command-line entry point: ``samson <command> [--config FILE] [--seed N] [--out DIR] [--jobs N]``.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 data error,
5 training divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import PipelineConfig, load_config
from .cube import ABSORPTION_NM, CANONICAL_NM, read_cube, write_cube
from .errors import (ConfigError, DataError, DivergenceDetected, IoFailure, MissingCalibration,
                     SamsonError)
from .evaluate import build_confusion, format_confusion, format_records, metrics, split_dataset
from .nn import Network, TrainConfig, format_history, load_model, predict, save_model, train
from .phantom import CLASS_NAMES, generate_dataset, load_dataset, save_dataset
from .preprocess import CalibrationSet, correct_cube
from .segment import segment_cube

log = logging.getLogger("samson")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DATA = 4
EXIT_DIVERGENCE = 5

CUBE_SUFFIX = ".cube"
SIDECAR = "effective_config.ini"
ROI_MANIFEST = "manifest.txt"


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (IoFailure, OSError)):
        return EXIT_IO
    if isinstance(exc, DivergenceDetected):
        return EXIT_DIVERGENCE
    return EXIT_DATA


def _inputs(path: Path) -> list[Path]:
    """Cube files under ``path`` (or the file itself) in lexicographic order."""
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise ConfigError(f"input path {path} does not exist")
    return sorted(p for p in path.iterdir() if p.suffix == CUBE_SUFFIX and p.is_file())


def _echo_config(cfg: PipelineConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / SIDECAR).write_text(cfg.dump(), encoding="utf-8")


def _pmap(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def load_calibration(cfg: PipelineConfig) -> CalibrationSet:
    """Dark frames for all bands and flat frames for absorption bands.

    A frame path comes from ``calibration.dark_<nm>`` / ``calibration.flat_<nm>``
    or defaults to ``<paths.calibration>/dark_<nm>.cube`` / ``flat_<nm>.cube``.
    """
    root = cfg.path("calibration")

    def frame(kind, nm):
        key = f"{kind}_{nm}"
        if cfg.raw.has_option("calibration", key):
            p = Path(cfg.get("calibration", key))
            p = p if p.is_absolute() else cfg.base / p
        else:
            p = root / f"{key}{CUBE_SUFFIX}"
        if not p.is_file():
            raise MissingCalibration(f"{kind} frame for {nm} nm not found at {p}")
        cube = read_cube(p)
        if len(cube.bands) != 1:
            raise DataError(f"{p}: calibration frames must hold exactly one band")
        return cube.data[0]

    dark = {nm: frame("dark", nm) for nm in CANONICAL_NM}
    flat = {nm: frame("flat", nm) for nm in ABSORPTION_NM}
    return CalibrationSet(dark, flat, cfg.typed("calibration", "epsilon", float))


# --- commands ------------------------------------------------------------------

def _correct_one(args):
    src, dst, cal = args
    write_cube(correct_cube(read_cube(src), cal), dst)
    return dst


def cmd_correct(cfg: PipelineConfig, out: Path | None) -> int:
    files = _inputs(cfg.path("raw"))
    cal = load_calibration(cfg)
    out_dir = out or cfg.path("corrected")
    _echo_config(cfg, out_dir)
    tasks = [(f, out_dir / f.name, cal) for f in files]
    for f, dst in zip(files, _pmap(_correct_one, tasks, cfg.jobs)):
        log.info("corrected %s -> %s", f, dst)
    return EXIT_OK


def _segment_one(args):
    src, params = args
    try:
        cube = read_cube(src).require_complete()
        return src, segment_cube(cube, params, source=str(src)), None
    except SamsonError as exc:
        return src, None, exc


def _run_segmentation(cfg: PipelineConfig, out_dir: Path):
    params = cfg.segment_params()
    files = _inputs(cfg.path("cubes"))
    _echo_config(cfg, out_dir)
    return _pmap(_segment_one, [(f, params) for f in files], cfg.jobs)


def cmd_segment(cfg: PipelineConfig, out: Path | None) -> int:
    out_dir = out or cfg.path("masks")
    failures = 0
    lines = ["# cube\ttheta\tblobs"]
    for src, res, err in _run_segmentation(cfg, out_dir):
        if err is not None:
            failures += 1
            log.error("%s: %s: %s", src, type(err).__name__, err)
            continue
        result, _ = res
        np.save(out_dir / f"{src.stem}.mask.npy", result.mask)
        lines.append(f"{src.name}\t{result.theta!r}\t{len(result.blobs)}")
        log.info("segmented %s: theta %.6g, %d blobs", src, result.theta, len(result.blobs))
    (out_dir / "segmentation.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_DATA if failures else EXIT_OK


def cmd_extract(cfg: PipelineConfig, out: Path | None) -> int:
    out_dir = out or cfg.path("rois")
    failures = 0
    lines = ["# path\tclass_id\tsource\tbbox"]
    for src, res, err in _run_segmentation(cfg, out_dir):
        if err is not None:
            failures += 1
            log.error("%s: %s: %s", src, type(err).__name__, err)
            continue
        _, rois = res
        for roi in rois:
            name = f"{src.stem}_blob{roi.blob_id:03d}{CUBE_SUFFIX}"
            write_cube(roi.crop, out_dir / name)
            lines.append(f"{name}\t-1\t{src.name}\t{','.join(map(str, roi.blob.bbox))}")
        log.info("extracted %d ROIs from %s", len(rois), src)
    (out_dir / ROI_MANIFEST).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_DATA if failures else EXIT_OK


def cmd_synth(cfg: PipelineConfig, out: Path | None) -> int:
    out_dir = out or cfg.path("dataset")
    ds = generate_dataset(cfg.class_specs(), cfg.dataset_params(), cfg.seed, cfg.jobs)
    _echo_config(cfg, out_dir)
    save_dataset(ds, out_dir)
    log.info("wrote %d ROIs (%s per class) to %s", len(ds), ds.class_counts, out_dir)
    return EXIT_OK


def _split(cfg: PipelineConfig):
    root = cfg.path("dataset")
    if not (root / "manifest.txt").is_file():
        raise ConfigError(f"no dataset manifest under {root}")
    return split_dataset(load_dataset(root), cfg.split_spec())


def cmd_train(cfg: PipelineConfig, out: Path | None) -> int:
    train_ds, _ = _split(cfg)
    tc: TrainConfig = cfg.train_config()
    x, y = train_ds.arrays()
    net = Network(seed=tc.seed)
    history = train(net, x, y, tc)
    model_path = (out / cfg.path("model").name) if out else cfg.path("model")
    history_path = (out / cfg.path("history").name) if out else cfg.path("history")
    model_path.parent.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, model_path.parent)
    save_model(net, model_path)
    history_path.write_text(format_history(history), encoding="utf-8")
    log.info("saved model to %s (final train accuracy %.4f)", model_path,
             history[-1].accuracy if history else float("nan"))
    return EXIT_OK


def evaluate_model(cfg: PipelineConfig):
    """Confusion matrix and metrics of the configured model on the held-out split."""
    _, test_ds = _split(cfg)
    model_path = cfg.path("model")
    if not model_path.is_file():
        raise ConfigError(f"model {model_path} not found")
    net = load_model(model_path)
    x, y = test_ds.arrays()
    preds, _ = predict(net, x)
    cm = build_confusion(preds, y, net.arch.num_classes, CLASS_NAMES[:net.arch.num_classes])
    return cm, metrics(cm)


def cmd_eval(cfg: PipelineConfig, out: Path | None) -> int:
    cm, m = evaluate_model(cfg)
    out_dir = out or cfg.path("eval")
    _echo_config(cfg, out_dir)
    records = format_records(cm, m)
    (out_dir / "metrics.txt").write_text(records, encoding="utf-8")
    print(format_confusion(cm))
    print(f"overall accuracy {m.overall:.4f} ({cm.trace}/{cm.total})")
    sys.stdout.write(records)
    return EXIT_OK


def cmd_predict(cfg: PipelineConfig, rois: list[str]) -> int:
    model_path = cfg.path("model")
    if not model_path.is_file():
        raise ConfigError(f"model {model_path} not found")
    net = load_model(model_path)
    crops = [read_cube(p).require_complete().data for p in rois]
    if not crops:
        return EXIT_OK
    classes, proba = predict(net, np.stack(crops))
    for path, c, row in zip(rois, classes, proba):
        probs = "\t".join(f"{v:.6f}" for v in row)
        print(f"{path}\t{int(c)}\t{probs}")
    return EXIT_OK


# --- argument parsing ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--seed", type=int, help="override global.seed")
    common.add_argument("--out", help="override the command's output location")
    common.add_argument("--jobs", type=int, help="worker processes for batch stages")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override any config value (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="samson", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("correct", parents=[common], help="flat-field correct raw cubes")
    sub.add_parser("segment", parents=[common], help="write Otsu foreground masks")
    sub.add_parser("extract", parents=[common], help="write fixed-size ROI cubes and a manifest")
    sub.add_parser("synth", parents=[common], help="generate a labelled phantom dataset")
    sub.add_parser("train", parents=[common], help="train the residual classifier")
    sub.add_parser("eval", parents=[common], help="confusion matrix on the held-out split")
    p = sub.add_parser("predict", parents=[common], help="classify ROI cube files")
    p.add_argument("rois", nargs="*")
    return parser


COMMANDS = {
    "correct": cmd_correct,
    "segment": cmd_segment,
    "extract": cmd_extract,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            overrides[k.strip()] = v.strip()
        if args.seed is not None:
            overrides["global.seed"] = str(args.seed)
        if args.jobs is not None:
            overrides["global.jobs"] = str(args.jobs)
        cfg = load_config(args.config, overrides)
        if args.command == "predict":
            return cmd_predict(cfg, args.rois)
        out = Path(args.out) if args.out else None
        return COMMANDS[args.command](cfg, out)
    except SamsonError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return exit_code_for(exc)
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
