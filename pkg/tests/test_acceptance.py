"""Acceptance criteria, one test each; every test emits a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -s`` to see the lines as they happen;
they are also repeated in the terminal summary.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from samson.cli import EXIT_OK, main
from samson.evaluate import build_confusion, format_records, metrics, parse_records, split_dataset
from samson.nn import Network, TrainConfig, conv2d_forward, predict, train
from samson.phantom import CLASS_NAMES, DEFAULT_SPECS, FieldParams, field_rng, generate_dataset, generate_field, match_blobs
from samson.preprocess import flat_field_correct
from samson.segment import (Connectivity, Histogram, SegmentParams, connected_components,
                            otsu_threshold, segment_cube)

from gradcheck import run_gradcheck
from oracles import flood_fill_components, naive_conv2d, otsu_within_class

pytestmark = pytest.mark.acceptance


def test_flat_field_inversion(report):
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        s = rng.uniform(0.0, 1.0, (64, 64))
        light = rng.uniform(100.0, 1000.0, (64, 64))  # illumination above the dark level
        dark = rng.uniform(0.0, 50.0, (64, 64))
        flat = light + dark
        raw = light * s + dark
        worst = max(worst, float(np.abs(flat_field_correct(raw, dark, flat) - s).max()))
    dt = time.perf_counter() - t0
    ok = worst < 1e-5 and dt < 5
    report("flat-field inversion", ok, f"max error {worst:.2e} (< 1e-5) over 100 fields", dt)
    assert ok


def _otsu_cases(rng):
    for _ in range(1000):
        counts = rng.integers(0, 1000, 256)
        counts[rng.random(256) < rng.uniform(0, 0.9)] = 0
        if counts.sum() == 0:
            counts[rng.integers(256)] = 1
        lo = float(rng.uniform(-1, 1))
        yield counts, lo, lo + float(rng.uniform(0.01, 5))
    constant = np.zeros(256, np.int64)
    constant[0] = 500
    yield constant, 0.0, 1.0
    for a, b in ((0, 255), (3, 4), (100, 200)):
        two = np.zeros(256, np.int64)
        two[a], two[b] = 40, 9
        yield two, 0.0, 1.0
    flat = np.full(256, 7, np.int64)
    yield flat, 0.0, 1.0


def test_otsu_oracle_equivalence(report):
    rng = np.random.default_rng(12)
    t0 = time.perf_counter()
    mismatches = n = 0
    for counts, lo, hi in _otsu_cases(rng):
        _, expected = otsu_within_class(counts, lo, hi)
        mismatches += otsu_threshold(Histogram(counts, lo, hi)) != expected
        n += 1
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and dt < 10
    report("Otsu oracle equivalence", ok, f"{mismatches} mismatches in {n} histograms (exact)", dt)
    assert ok


def test_connected_components_oracle(report):
    rng = np.random.default_rng(13)
    t0 = time.perf_counter()
    mismatches = 0
    for i in range(500):
        mask = rng.random((32, 32)) < rng.uniform(0.05, 0.7)
        for conn in (Connectivity.FOUR, Connectivity.EIGHT):
            got = {frozenset(map(tuple, b.pixels.tolist())) for b in connected_components(mask, conn)}
            mismatches += got != flood_fill_components(mask, conn.value)
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and dt < 10
    report("connected-components oracle", ok, f"{mismatches} differing partitions of 1000", dt)
    assert ok


def test_convolution_oracle(report):
    rng = np.random.default_rng(14)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        n, c, o = rng.integers(1, 4), rng.integers(1, 5), rng.integers(1, 5)
        h, w = rng.integers(3, 11, 2)
        stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, 2))
        x = rng.standard_normal((n, c, h, w))
        k = rng.standard_normal((o, c, 3, 3))
        got, want = conv2d_forward(x, k, stride, pad), naive_conv2d(x, k, stride, pad)
        rel = np.abs(got - want) / np.maximum(np.abs(want), 1e-6)
        worst = max(worst, float(rel.max()))
    dt = time.perf_counter() - t0
    ok = worst < 1e-5 and dt < 30
    report("convolution oracle", ok, f"max relative error {worst:.2e} (< 1e-5) over 50 cases", dt)
    assert ok


def test_gradient_check(report):
    t0 = time.perf_counter()
    worst, _, _ = run_gradcheck(seed=0)
    dt = time.perf_counter() - t0
    name, err = max(worst.items(), key=lambda kv: kv[1])
    ok = err < 1e-4 and dt < 300
    report("gradient check", ok, f"{len(worst)} tensors, worst {err:.2e} at {name} (< 1e-4)", dt)
    assert ok


def test_segmentation_recall(report):
    fp = FieldParams()
    t0 = time.perf_counter()
    total = recovered = spurious = 0
    for i in range(50):
        cube, truth = generate_field(DEFAULT_SPECS, fp.organisms_per_field, fp.field_size,
                                     field_rng(101, i), fp.noise_sigma, gap=fp.gap)
        result, _ = segment_cube(cube, SegmentParams())
        matched = match_blobs(result.blobs, truth)
        total += len(truth)
        recovered += len({j for j in matched if j is not None})
        spurious += sum(j is None for j in matched)
    dt = time.perf_counter() - t0
    recall = recovered / total
    ok = recall >= 0.99 and spurious == 0 and dt < 60
    report("segmentation recall", ok,
           f"recall {recovered}/{total} = {recall:.4f} (>= 0.99), {spurious} spurious", dt)
    assert ok


@pytest.fixture(scope="module")
def end_to_end():
    t0 = time.perf_counter()
    ds = generate_dataset(seed=0)
    train_ds, test_ds = split_dataset(ds)
    x, y = train_ds.arrays()
    cfg = TrainConfig()
    net = Network(seed=cfg.seed)
    train(net, x, y, cfg)
    xt, yt = test_ds.arrays()
    preds, _ = predict(net, xt)
    cm = build_confusion(preds, yt, 6, CLASS_NAMES)
    return ds, cm, metrics(cm), time.perf_counter() - t0


@pytest.mark.slow
def test_end_to_end_accuracy(report, end_to_end):
    ds, cm, m, dt = end_to_end
    ok = len(ds) == 1200 and m.overall >= 0.95 and dt <= 900
    report("end-to-end accuracy", ok,
           f"held-out {cm.trace}/{cm.total} = {m.overall:.4f} (>= 0.95) on {len(ds)} ROIs, 1 core", dt)
    assert ok


@pytest.mark.slow
def test_confusion_consistency(report, end_to_end):
    _, cm, m, _ = end_to_end
    t0 = time.perf_counter()
    rows = cm.counts.sum(axis=1)
    recomposed = sum(Fraction(int(r), cm.total) * f for r, f in zip(rows, m.per_class_exact) if f is not None)
    counts, overall, _ = parse_records(format_records(cm, m))
    ok = (Fraction(cm.trace, cm.total) == m.overall_exact == recomposed
          and m.overall == cm.trace / cm.total and overall == m.overall
          and np.array_equal(counts, cm.counts))
    report("confusion-matrix consistency", ok,
           f"trace/total {m.overall_exact}, row-weighted recomposition {recomposed}", time.perf_counter() - t0)
    assert ok


DETERMINISM = [
    "--set", "phantom.counts=12,12,12,12,12,12",
    "--set", "phantom.field_size=160",
    "--set", "train.epochs=2",
    "--set", "train.batch_size=16",
]


def _pipeline(root):
    args = DETERMINISM + ["--set", f"paths.dataset={root / 'ds'}", "--set", f"paths.model={root / 'm.samsmodl'}",
                          "--set", f"paths.history={root / 'h.txt'}", "--set", f"paths.eval={root / 'eval'}"]
    codes = [main([cmd] + args) for cmd in ("synth", "train", "eval")]
    return codes, (root / "m.samsmodl").read_bytes(), (root / "eval" / "metrics.txt").read_bytes()


def test_determinism(report, tmp_path, capsys):
    t0 = time.perf_counter()
    codes_a, model_a, rec_a = _pipeline(tmp_path / "a")
    codes_b, model_b, rec_b = _pipeline(tmp_path / "b")
    capsys.readouterr()
    ok = codes_a == codes_b == [EXIT_OK] * 3 and model_a == model_b and rec_a == rec_b
    report("determinism", ok,
           f"model {len(model_a)} bytes identical: {model_a == model_b}, records identical: {rec_a == rec_b}",
           time.perf_counter() - t0)
    assert ok
