import json

import numpy as np
import pytest

from camstats.bundle import write_bundle
from camstats.errors import ManifestError
from camstats.manifest import load_manifest
from camstats.synthetic import write_synthetic_dataset


def write_sample(dir_path, sample_id, shape=(8, 8), mask_shape=None, masks=("disk",)):
    entries = {"image": np.random.default_rng(0).random(shape).astype(np.float32)}
    for m in masks:
        entries[f"mask.{m}"] = np.zeros(mask_shape or shape, dtype=np.float32)
    bundle = dir_path / f"{sample_id}.camb"
    write_bundle(bundle, entries)
    return {"id": sample_id, "label": 0, "bundle": bundle.name, "masks": list(masks)}


def write_manifest(dir_path, samples):
    path = dir_path / "manifest.json"
    path.write_text(json.dumps({"samples": samples}))
    return path


def test_load_valid_manifest(tmp_path):
    samples = [write_sample(tmp_path, f"s{i}") for i in range(3)]
    samples[1]["label"] = 1
    records = load_manifest(write_manifest(tmp_path, samples))
    assert [r.id for r in records] == ["s0", "s1", "s2"]
    assert [r.label for r in records] == [0, 1, 0]
    assert records[0].mask_names == ("disk",)
    entries = records[0].load()
    assert entries["image"].shape == (8, 8)


def test_class_counts_echoed(tmp_path, caplog):
    samples = [write_sample(tmp_path, f"s{i}") for i in range(5)]
    for s in samples[:2]:
        s["label"] = 1
    with caplog.at_level("INFO"):
        load_manifest(write_manifest(tmp_path, samples))
    assert any("2 case / 3 control" in r.message for r in caplog.records)


def test_empty_manifest_warns_but_loads(tmp_path, caplog):
    path = write_manifest(tmp_path, [])
    with caplog.at_level("WARNING"):
        records = load_manifest(path)
    assert records == []
    assert any("no samples" in r.message for r in caplog.records)


def test_mask_dimension_mismatch_reports_both_shapes(tmp_path):
    sample = write_sample(tmp_path, "bad", shape=(8, 8), mask_shape=(4, 4))
    with pytest.raises(ManifestError) as exc:
        load_manifest(write_manifest(tmp_path, [sample]))
    assert "(4, 4)" in str(exc.value)
    assert "(8, 8)" in str(exc.value)


def test_duplicate_id_rejected(tmp_path):
    samples = [write_sample(tmp_path, "dup"), write_sample(tmp_path, "dup")]
    with pytest.raises(ManifestError, match="duplicate"):
        load_manifest(write_manifest(tmp_path, samples))


def test_dangling_bundle_rejected(tmp_path):
    sample = write_sample(tmp_path, "s0")
    sample["bundle"] = "missing.camb"
    with pytest.raises(ManifestError, match="does not exist"):
        load_manifest(write_manifest(tmp_path, [sample]))


def test_missing_mask_entry_rejected(tmp_path):
    sample = write_sample(tmp_path, "s0", masks=())
    sample["masks"] = ["vessels"]
    with pytest.raises(ManifestError, match="vessels"):
        load_manifest(write_manifest(tmp_path, [sample]))


def test_bad_label_rejected(tmp_path):
    sample = write_sample(tmp_path, "s0")
    sample["label"] = 2
    with pytest.raises(ManifestError, match="label"):
        load_manifest(write_manifest(tmp_path, [sample]))


def test_unparseable_json(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text("{nope")
    with pytest.raises(ManifestError, match="cannot parse"):
        load_manifest(path)


def test_synthetic_dataset_roundtrip(tmp_path):
    manifest = write_synthetic_dataset(tmp_path, n=10, size=24, seed=1)
    records = load_manifest(manifest)
    assert len(records) == 10
    labels = [r.label for r in records]
    assert 0 < sum(labels) < 10
    entries = records[0].load()
    assert entries["image"].shape == (24, 24)
    assert set(np.unique(entries["mask.disk"])) <= {0.0, 1.0}
    # class-1 disks are bright: mean inside the mask far above background
    for r in records:
        e = r.load()
        mask = e["mask.disk"].astype(bool)
        if r.label == 1:
            assert e["image"][mask].mean() > e["image"][~mask].mean() + 0.3
