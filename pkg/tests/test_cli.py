import json

from camstats.cli import main


def run(*argv):
    return main([str(a) for a in argv])


def test_full_cli_walkthrough(tmp_path, capsys):
    data = tmp_path / "data"
    assert run("synth", "--out", data, "--n", 24, "--size", 16, "--seed", 1) == 0

    assert run("splits", "--manifest", data / "manifest.json", "--seed", 2) == 0
    printed = json.loads(capsys.readouterr().out.split("manifest.json\n")[-1])
    assert len(printed) == 6

    splits_file = tmp_path / "splits.json"
    assert run(
        "splits", "--manifest", data / "manifest.json", "--seed", 2,
        "--out", splits_file,
    ) == 0
    scenarios = json.loads(splits_file.read_text())
    assert len(scenarios) == 6

    ckpt_dir = tmp_path / "ckpt"
    assert run(
        "train", "--manifest", data / "manifest.json", "--seed", 2,
        "--scenario", 1, "--epochs", 2, "--out", ckpt_dir,
    ) == 0
    ckpt = ckpt_dir / "model_s1.camb"
    assert ckpt.exists()

    explain_dir = tmp_path / "explain"
    assert run(
        "explain", "--manifest", data / "manifest.json", "--seed", 2,
        "--checkpoint", ckpt, "--out", explain_dir, "--ids", "s0000,s0001",
    ) == 0
    assert (explain_dir / "per_sample_ratios.csv").exists()
    assert len(list((explain_dir / "overlays").glob("*.ppm"))) == 10  # 2 ids x 5 cams

    report_dir = tmp_path / "report"
    assert run(
        "report", "--manifest", data / "manifest.json", "--seed", 2,
        "--epochs", 2, "--bootstrap", 20, "--out", report_dir,
    ) == 0
    assert (report_dir / "classification.csv").exists()

    stats_dir = tmp_path / "stats"
    assert run(
        "stats", "--ratios", report_dir / "per_sample_ratios.csv",
        "--classification", report_dir / "classification.csv",
        "--out", stats_dir,
    ) == 0
    # recomputed tables must equal the report's tables byte for byte
    assert (stats_dir / "explanation.csv").read_bytes() == (
        report_dir / "explanation.csv"
    ).read_bytes()
    assert (stats_dir / "correlation.csv").read_bytes() == (
        report_dir / "correlation.csv"
    ).read_bytes()


def test_missing_manifest_is_data_error(tmp_path):
    assert run(
        "report", "--manifest", tmp_path / "nope.json", "--out", tmp_path / "o"
    ) == 3


def test_explain_mini_without_checkpoint_is_config_error(tmp_path):
    data = tmp_path / "d"
    run("synth", "--out", data, "--n", 12, "--size", 16)
    assert run(
        "explain", "--manifest", data / "manifest.json", "--out", tmp_path / "o"
    ) == 2


def test_unknown_sample_ids_is_data_error(tmp_path):
    data = tmp_path / "d"
    run("synth", "--out", data, "--n", 12, "--size", 16)
    ckpt_dir = tmp_path / "ckpt"
    run("train", "--manifest", data / "manifest.json", "--epochs", 1,
        "--out", ckpt_dir)
    assert run(
        "explain", "--manifest", data / "manifest.json",
        "--checkpoint", ckpt_dir / "model_s1.camb",
        "--out", tmp_path / "o", "--ids", "ghost",
    ) == 3
