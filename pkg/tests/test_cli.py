import json

import pytest

from chatbci.cli import main
from chatbci.datastore import save_recording

from conftest import noise_recording, separable_recording


@pytest.fixture
def dataset(tmp_path):
    data_dir = tmp_path / "data"
    for session, seed in (("train", 10), ("eval", 20)):
        rec = separable_recording(n_trials_per_class=6, trial_s=1.0, gap_s=0.2,
                                  seed=seed, subject_id="S01", session=session)
        save_recording(rec, data_dir / f"S01_{session}")
    return data_dir


def test_validate_clean_dataset_exit_zero(dataset, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["validate", str(dataset), "--out", str(out)]) == 0
    report = json.loads((out / "validation.json").read_text())
    assert report["pass"] is True
    assert "pass" in capsys.readouterr().out


def test_validate_bad_dataset_exit_nonzero(tmp_path):
    rec = noise_recording(seed=1)
    signal = rec.signal.copy()
    signal[0, :] = 0.0
    save_recording(rec.replace_signal(signal), tmp_path / "data" / "S01_train")
    assert main(["validate", str(tmp_path / "data")]) == 1


def test_missing_dataset_prints_one_line_error(tmp_path, capsys):
    code = main(["validate", str(tmp_path / "nothing")])
    assert code == 2
    err = capsys.readouterr().err.strip()
    assert err.startswith("error: ")
    assert len(err.splitlines()) == 1


def test_erp_writes_output_files(dataset, tmp_path):
    out = tmp_path / "out"
    code = main([
        "erp", "--data", str(dataset), "--subjects", "S01",
        "--window", "0:1", "--no-car", "--out", str(out), "--figure",
    ])
    assert code == 0
    payload = json.loads((out / "erp.json").read_text())
    assert set(payload["classes"]) == {"left_hand", "right_hand", "feet", "tongue"}
    assert list(out.glob("erp-*.png"))
    assert list(out.glob("erp-*.data.json"))


def test_psd_and_stats_commands(dataset, tmp_path):
    out = tmp_path / "out"
    assert main(["psd", "--data", str(dataset), "--window", "0:1", "--no-car",
                 "--segment", "0.5", "--out", str(out)]) == 0
    assert main(["stats", "--data", str(dataset), "--window", "0:1", "--no-car",
                 "--out", str(out)]) == 0
    assert (out / "psd.json").is_file()
    assert (out / "stats.json").is_file()


def test_filters_argument_parsing(dataset, tmp_path):
    code = main([
        "erp", "--data", str(dataset), "--filters", "lowpass:40", "highpass:1",
        "--window", "0:1", "--out", str(tmp_path / "o"),
    ])
    assert code == 0


def test_train_run_directory_has_four_artifacts(dataset, tmp_path, capsys):
    out = tmp_path / "runs"
    code = main([
        "train", "--subject", "S01", "--data", str(dataset),
        "--epochs", "3", "--patience", "3", "--batch-size", "16",
        "--val-fraction", "0.25", "--no-augment", "--window", "0:1",
        "--filters", "lowpass:40", "--out", str(out),
    ])
    assert code == 0
    run_id = json.loads(capsys.readouterr().out)["run_id"]
    files = sorted(p.name for p in (out / run_id).iterdir())
    assert files == ["best.ckpt", "config.json", "confusion.json", "metrics.jsonl"]


def test_ideate_offline(tmp_path, capsys):
    code = main(["ideate", "--n", "2", "--offline", "--out", str(tmp_path / "ideas")])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert len(payload["ideas"]) == 2
    lines = (tmp_path / "ideas" / "ideas.jsonl").read_text().splitlines()
    assert len(lines) == 2


def test_summarize_golden_consistency(tmp_path, capsys):
    from test_knowledge import GOLDEN, build_fixture_dir

    fix = build_fixture_dir(tmp_path)
    assert main(["summarize", str(fix), "--level", "0"]) == 0
    out = capsys.readouterr().out
    assert out == (GOLDEN / "summary_level0.txt").read_text()


def test_chat_command_reads_stdin(tmp_path, capsys, monkeypatch):
    import io
    import sys

    config = tmp_path / "chatbci.json"
    config.write_text(json.dumps({
        "data_dir": str(tmp_path / "data"),
        "artifacts_dir": str(tmp_path / "artifacts"),
        "provider": {"name": "mock"},
    }))
    monkeypatch.setattr(sys, "stdin", io.StringIO("hello assistant\nquit\n"))
    assert main(["chat", "--config", str(config)]) == 0
    out = capsys.readouterr().out
    assert "[mock:" in out
    assert "transcript:" in out
