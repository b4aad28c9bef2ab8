import json

import numpy as np
import pytest

from chatbci.analysis import erp
from chatbci.errors import SpecError
from chatbci.figures import CurvesFigureSpec, ErpFigureSpec, curves_figure, erp_figure
from chatbci.training import TrainRun

from conftest import make_channels, make_epochs


def seven_channel_erp(seed=0):
    rng = np.random.default_rng(seed)
    channels = make_channels(5, 2)  # Fz C3 Cz C4 Pz EOG1 EOG2
    data = rng.normal(size=(8, 7, 100))
    ep = make_epochs(data, np.tile(np.arange(4), 2))
    ep.channels = channels
    # rename EOG2 -> EOG3 to mirror the default layout
    ep.channels[-1] = type(channels[-1])("EOG3", "EOG")
    return erp(ep)


def fake_run(run_id="run-S01-abc", n_epochs=5, seed=0):
    rng = np.random.default_rng(seed)
    run = TrainRun(run_id=run_id, subject_id="S01", status="finished")
    acc = np.linspace(0.3, 0.9, n_epochs)
    for i in range(n_epochs):
        run.epochs.append(
            {
                "epoch": i,
                "train_loss": float(1.5 - acc[i]),
                "train_acc": float(acc[i]),
                "val_loss": float(1.6 - acc[i]),
                "val_acc": float(min(1.0, acc[i] + rng.uniform(0, 0.05))),
            }
        )
    run.eval_accuracy = 0.5
    return run


def test_erp_figure_seven_channels_28_traces():
    result = seven_channel_erp()
    fig = erp_figure(result, ErpFigureSpec())
    assert len(fig.sidecar["classes"]) == 4
    traces = sum(len(chans) for chans in fig.sidecar["classes"].values())
    assert traces == 28
    assert fig.png_bytes[:8] == b"\x89PNG\r\n\x1a\n"


def test_erp_sidecar_matches_result_exactly():
    result = seven_channel_erp(seed=1)
    fig = erp_figure(result, ErpFigureSpec(channels=("C3", "Cz")))
    idx = {name: j for j, name in enumerate(result.channel_names)}
    for ci, cname in enumerate(result.class_names):
        for ch in ("C3", "Cz"):
            assert fig.sidecar["classes"][cname][ch] == result.waveforms[ci, idx[ch]].tolist()
    assert fig.sidecar["time_ms"] == result.time_ms.tolist()


def test_erp_zoom_window_recorded():
    result = seven_channel_erp(seed=2)
    fig = erp_figure(result, ErpFigureSpec(channels=("C3",), xlim_ms=(1500.0, 3500.0)))
    assert fig.sidecar["spec"]["xlim_ms"] == [1500.0, 3500.0]


def test_erp_unknown_channel_is_spec_error():
    result = seven_channel_erp(seed=3)
    with pytest.raises(SpecError):
        erp_figure(result, ErpFigureSpec(channels=("C3", "F7")))


def test_erp_figure_id_is_content_hash():
    result = seven_channel_erp(seed=4)
    a = erp_figure(result, ErpFigureSpec(channels=("C3",)))
    b = erp_figure(result, ErpFigureSpec(channels=("C3",)))
    assert a.figure_id == b.figure_id
    assert a.sidecar == b.sidecar
    c = erp_figure(result, ErpFigureSpec(channels=("Cz",)))
    assert c.figure_id != a.figure_id


def test_curves_nine_runs_nine_panels():
    runs = [fake_run(run_id=f"run-{i}", seed=i) for i in range(9)]
    fig = curves_figure(runs, CurvesFigureSpec())
    assert len(fig.sidecar["runs"]) == 9


def test_curves_sidecar_mirrors_metrics_verbatim():
    run = fake_run(seed=5)
    fig = curves_figure([run])
    assert fig.sidecar["runs"][run.run_id]["epochs"] == run.epochs


def test_curves_empty_metrics_is_spec_error():
    run = TrainRun(run_id="r", subject_id="S01")
    with pytest.raises(SpecError):
        curves_figure([run])
    with pytest.raises(SpecError):
        curves_figure([])


def test_figure_save_writes_png_and_sidecar(tmp_path):
    fig = erp_figure(seven_channel_erp(seed=6), ErpFigureSpec(channels=("Pz",)))
    png, data = fig.save(tmp_path)
    assert png.read_bytes() == fig.png_bytes
    assert json.loads(data.read_text()) == fig.sidecar
