import json

import numpy as np
import pytest
import torch
from PIL import Image

from camexport.cli import main
from camexport.export import DataError, Exporter, ExportSpec, export_dataset, export_sample
from camexport.models import ConfigurationError, ToyNet, load_model, resolve_layer

# interop: the analysis core must read what we write
from camstats.bundle import read_bundle
from camstats.manifest import load_manifest


def toy_spec(tmp_path, **kw):
    defaults = dict(model="toy", layer="relu2", input_size=16, out_dir=tmp_path)
    defaults.update(kw)
    return ExportSpec(**defaults)


def random_image(seed=0, size=16):
    rng = np.random.default_rng(seed)
    return rng.random((3, size, size)).astype(np.float32)


def write_png(path, seed=0, size=16):
    rng = np.random.default_rng(seed)
    arr = (rng.random((size, size, 3)) * 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def test_roundtrip_through_core(tmp_path):
    spec = toy_spec(tmp_path, scorecam=True)
    exporter = Exporter(spec)
    image = exporter.prepare_image(random_image(1))
    entries = exporter.capture(image, label=1)
    path = export_sample(spec, random_image(1), 1, "s1", exporter)
    back = read_bundle(path)
    assert set(back) == set(entries)
    for name in entries:
        want = np.asarray(entries[name], dtype=np.float32)
        if want.ndim == 0:
            want = want.reshape(1)
        assert back[name].shape == want.shape, name
        assert back[name].tobytes() == want.tobytes(), name
    assert back["acts"].shape == back["grads"].shape
    assert back["acts"].shape[0] == 6  # ToyNet conv2 channels


def test_toy_gradients_match_finite_differences(tmp_path):
    spec = toy_spec(tmp_path)
    exporter = Exporter(spec)
    image = exporter.prepare_image(random_image(2))
    entries = exporter.capture(image, label=0)
    # float64 head for the FD side: float32 rounding noise at eps=1e-3 is
    # larger than the 1e-3 relative tolerance on small gradients
    acts = torch.from_numpy(entries["acts"].astype(np.float64))
    grads = entries["grads"]
    target = int(entries["target_class"][0])
    model = ToyNet()
    model.load_state_dict(exporter.model.state_dict())
    model.double().eval()

    def logit_from_acts(a):
        with torch.no_grad():
            return float(model.head(a.mean(dim=(1, 2))[None])[0, target])

    rng = np.random.default_rng(3)
    eps = 1e-3
    for _ in range(100):
        k = int(rng.integers(acts.numel()))
        up = acts.clone().reshape(-1)
        up[k] += eps
        down = acts.clone().reshape(-1)
        down[k] -= eps
        fd = (
            logit_from_acts(up.reshape(acts.shape))
            - logit_from_acts(down.reshape(acts.shape))
        ) / (2 * eps)
        bp = float(grads.ravel()[k])
        assert abs(fd - bp) / max(abs(fd), abs(bp), 1e-4) <= 1e-3
    print("[PASS] exporter round-trip + toy-model finite-difference check (secondary)")


def test_scorecam_scores_length_matches_channels(tmp_path):
    spec = toy_spec(tmp_path, scorecam=True)
    exporter = Exporter(spec)
    image = exporter.prepare_image(random_image(4))
    entries = exporter.capture(image, label=0)
    assert entries["scorecam_scores"].shape == (entries["acts"].shape[0],)


def test_predicted_policy_matches_argmax(tmp_path):
    spec = toy_spec(tmp_path, class_policy="predicted")
    exporter = Exporter(spec)
    for seed in range(5):
        image = exporter.prepare_image(random_image(seed))
        entries = exporter.capture(image, label=0)
        with torch.no_grad():
            logits = exporter.model(image[None])
        assert int(entries["target_class"][0]) == int(logits[0].argmax())


def test_label_policy_uses_label(tmp_path):
    spec = toy_spec(tmp_path, class_policy="label")
    exporter = Exporter(spec)
    image = exporter.prepare_image(random_image(6))
    entries = exporter.capture(image, label=1)
    assert int(entries["target_class"][0]) == 1


def test_unknown_layer_is_configuration_error(tmp_path):
    with pytest.raises(ConfigurationError, match="not found"):
        Exporter(toy_spec(tmp_path, layer="relu9"))


def test_export_dataset_end_to_end(tmp_path):
    images = tmp_path / "imgs"
    images.mkdir()
    rows = ["id,label"]
    for i in range(10):
        write_png(images / f"img{i}.png", seed=i)
        rows.append(f"img{i},{i % 2}")
    labels = tmp_path / "labels.csv"
    labels.write_text("\n".join(rows) + "\n")
    spec = toy_spec(tmp_path / "out", scorecam=True)
    manifest, skipped = export_dataset(spec, images, labels)
    assert skipped == 0
    records = load_manifest(manifest)
    assert len(records) == 10
    entries = records[0].load()
    assert entries["image"].shape == (16, 16)
    assert entries["acts"].shape == entries["grads"].shape


def test_corrupted_image_skipped_with_exit_3(tmp_path, caplog):
    images = tmp_path / "imgs"
    images.mkdir()
    write_png(images / "good.png", seed=1)
    (images / "bad.png").write_bytes(b"this is not an image")
    labels = tmp_path / "labels.csv"
    labels.write_text("id,label\ngood,1\nbad,0\n")
    code = main([
        "dataset", "--model", "toy", "--layer", "relu2", "--size", "16",
        "--images", str(images), "--labels", str(labels),
        "--out", str(tmp_path / "out"),
    ])
    assert code == 3
    assert "bad" in caplog.text
    records = load_manifest(tmp_path / "out" / "manifest.json")
    assert [r.id for r in records] == ["good"]


def test_empty_label_csv_no_partial_manifest(tmp_path):
    images = tmp_path / "imgs"
    images.mkdir()
    write_png(images / "a.png")
    labels = tmp_path / "labels.csv"
    labels.write_text("id,label\n")
    spec = toy_spec(tmp_path / "out")
    with pytest.raises(DataError, match="empty"):
        export_dataset(spec, images, labels)
    assert not (tmp_path / "out" / "manifest.json").exists()


def test_unmatched_ids_listed_and_skipped(tmp_path, caplog):
    images = tmp_path / "imgs"
    images.mkdir()
    write_png(images / "present.png")
    labels = tmp_path / "labels.csv"
    labels.write_text("id,label\npresent,1\nghost,0\n")
    code = main([
        "dataset", "--model", "toy", "--layer", "relu2", "--size", "16",
        "--images", str(images), "--labels", str(labels),
        "--out", str(tmp_path / "out"),
    ])
    assert code == 3
    assert "ghost" in caplog.text


def test_core_bundle_mode_consumes_export(tmp_path):
    """The analysis core runs a full bundle-mode report on exported data."""
    from camstats.cli import main as camstats_main

    images = tmp_path / "imgs"
    images.mkdir()
    rows = ["id,label"]
    for i in range(12):
        write_png(images / f"s{i}.png", seed=100 + i)
        rows.append(f"s{i},{i % 2}")
    labels = tmp_path / "labels.csv"
    labels.write_text("\n".join(rows) + "\n")
    spec = toy_spec(tmp_path / "out", scorecam=True)
    manifest, skipped = export_dataset(spec, images, labels)
    assert skipped == 0
    out = tmp_path / "report"
    code = camstats_main([
        "report", "--manifest", str(manifest), "--mode", "bundle",
        "--bootstrap", "20", "--seed", "3", "--out", str(out),
    ])
    assert code == 0
    assert (out / "classification.csv").exists()


def test_torchvision_identifier_validation():
    with pytest.raises(ConfigurationError):
        load_model("mystery-model")
