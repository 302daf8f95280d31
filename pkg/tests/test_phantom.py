from dataclasses import replace

import numpy as np
import pytest

from samson.cube import CANONICAL_NM
from samson.errors import PlacementFailure
from samson.phantom import (DEFAULT_SPECS, FL_IDX, GREEN_CLASSES, CYANO_CLASSES, DatasetParams,
                            FieldParams, Morphology, check_specs, expected_cluster_area,
                            field_rng, generate_dataset, generate_field, load_dataset,
                            match_blobs, render_organism, save_dataset)
from samson.segment import connected_components, segment_cube

SMALL = DatasetParams(counts=(6,) * 6, fieldp=FieldParams(field_size=160, organisms_per_field=6))


@pytest.fixture(scope="module")
def small_ds():
    return generate_dataset(DEFAULT_SPECS, SMALL, seed=5)


def test_default_specs_obey_fluorescence_ordering():
    check_specs(DEFAULT_SPECS)
    for i in FL_IDX:
        assert max(DEFAULT_SPECS[c].signature[i] for c in CYANO_CLASSES) < \
            min(DEFAULT_SPECS[c].signature[i] for c in GREEN_CLASSES)


def test_check_specs_rejects_inverted_fluorescence():
    specs = list(DEFAULT_SPECS)
    sig = list(specs[0].signature)
    sig[0] = 0.99
    specs[0] = replace(specs[0], signature=tuple(sig))
    with pytest.raises(ValueError):
        check_specs(specs)


def test_noiseless_render_is_exact(rng):
    spec = replace(DEFAULT_SPECS[2], jitter=0.0)
    assert spec.morphology is Morphology.THIN_FILAMENT
    patch, mask = render_organism(spec, rng)
    for b in range(len(CANONICAL_NM)):
        assert np.all(patch[b][mask] == np.float32(spec.signature[b]))
        assert not patch[b][~mask].any()


@pytest.mark.parametrize("spec", DEFAULT_SPECS, ids=lambda s: s.morphology.value)
def test_every_morphology_is_one_blob(spec, rng):
    for _ in range(20):
        _, mask = render_organism(spec, rng)
        assert len(connected_components(mask)) == 1


def test_green_outshines_cyano_at_385(rng):
    i385 = CANONICAL_NM.index(385)
    means = {}
    for c in (0, 3):
        vals = []
        for _ in range(50):
            patch, mask = render_organism(DEFAULT_SPECS[c], rng, noise_sigma=0.02)
            vals.append(patch[i385][mask].mean())
        means[c] = np.mean(vals)
    assert means[3] > means[0]


def test_cluster_area_matches_closed_form(rng):
    spec = DEFAULT_SPECS[3]
    assert spec.morphology is Morphology.ELLIPSOID_CLUSTER4
    areas = [render_organism(spec, rng)[1].sum() for _ in range(1000)]
    expect = expected_cluster_area(spec.size_range)
    assert abs(np.mean(areas) - expect) / expect < 0.10


def test_empty_field():
    cube, truth = generate_field(DEFAULT_SPECS, 0, 96, np.random.default_rng(0))
    assert truth == []
    _, rois = segment_cube(cube)
    assert rois == []


def test_sparse_field_recovers_every_organism():
    cube, truth = generate_field(DEFAULT_SPECS, 5, 256, np.random.default_rng(3))
    result, rois = segment_cube(cube)
    assert len(rois) == 5
    assert sorted(match_blobs(result.blobs, truth)) == list(range(5))


def test_field_is_deterministic():
    a, ta = generate_field(DEFAULT_SPECS, 6, 200, field_rng(9, 0))
    b, tb = generate_field(DEFAULT_SPECS, 6, 200, field_rng(9, 0))
    assert a.equals(b)
    assert [t.blob.bbox for t in ta] == [t.blob.bbox for t in tb]


def test_background_below_every_class_signal():
    from samson.cube import composite_absorption
    from samson.phantom import ABS_IDX
    cube, truth = generate_field(DEFAULT_SPECS, 6, 200, np.random.default_rng(1))
    comp = composite_absorption(cube)
    fg = np.zeros(comp.shape, bool)
    for t in truth:
        fg |= t.blob.mask(comp.shape)
    floor = min(np.mean([s.signature[i] for i in ABS_IDX]) for s in DEFAULT_SPECS)
    assert comp[~fg].max() < floor


def test_crowded_field_fails():
    with pytest.raises(PlacementFailure):
        generate_field(DEFAULT_SPECS, 200, 80, np.random.default_rng(0), max_retries=20)


def test_dataset_counts_and_invariants(small_ds):
    assert len(small_ds) == 36
    assert small_ds.class_counts == (6,) * 6
    assert np.bincount(small_ds.labels, minlength=6).tolist() == [6] * 6
    for roi in small_ds.rois:
        assert roi.crop.is_complete and roi.crop.data.shape == (9, 64, 64)
        assert np.isfinite(roi.crop.data).all()
        assert roi.crop.meta["label"] == str(roi.label)


def test_dataset_is_deterministic_and_job_independent(small_ds):
    again = generate_dataset(DEFAULT_SPECS, SMALL, seed=5, jobs=2)
    xa, ya = small_ds.arrays()
    xb, yb = again.arrays()
    assert xa.tobytes() == xb.tobytes() and np.array_equal(ya, yb)


def test_dataset_fluorescence_ordering(small_ds):
    x, y = small_ds.arrays()
    i385 = CANONICAL_NM.index(385)
    per_roi = x[:, i385].reshape(len(x), -1).max(axis=1)
    green = per_roi[np.isin(y, GREEN_CLASSES)].mean()
    cyano = per_roi[np.isin(y, CYANO_CLASSES)].mean()
    assert green > cyano + 0.3


def _nearest_centroid_labels(blobs, truth):
    out = []
    for b in blobs:
        d = [np.hypot(b.centroid[0] - t.blob.centroid[0], b.centroid[1] - t.blob.centroid[1])
             for t in truth]
        out.append(truth[int(np.argmin(d))].class_id)
    return out


def test_label_assignment_matches_nearest_centroid():
    for i in range(50):
        cube, truth = generate_field(DEFAULT_SPECS, 6, 200, field_rng(77, i))
        result, _ = segment_cube(cube)
        matched = match_blobs(result.blobs, truth)
        assert None not in matched
        assert [truth[j].class_id for j in matched] == _nearest_centroid_labels(result.blobs, truth)


def test_dataset_persistence(tmp_path, small_ds):
    manifest = save_dataset(small_ds, tmp_path / "ds")
    lines = manifest.read_text(encoding="utf-8").splitlines()
    records = [l for l in lines if not l.startswith("#")]
    assert len(records) == len(small_ds)
    back = load_dataset(tmp_path / "ds")
    assert back.class_counts == small_ds.class_counts and back.seed == 5
    xa, ya = small_ds.arrays()
    xb, yb = back.arrays()
    assert xa.tobytes() == xb.tobytes() and np.array_equal(ya, yb)
    assert [r.blob.bbox for r in back.rois] == [r.blob.bbox for r in small_ds.rois]


def test_noisy_background_still_segments_cleanly():
    for i in range(10):
        cube, truth = generate_field(DEFAULT_SPECS, 6, 200, field_rng(3, i), background_sigma=0.02)
        result, rois = segment_cube(cube)
        assert len(rois) == 6
        assert sorted(match_blobs(result.blobs, truth)) == list(range(6))
