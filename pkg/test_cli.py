"""
CLI tests: every subcommand end to end on a tiny configuration, config
echo reproducibility and exit codes.
"""

import pytest

from bench import count_params
from bench.report import parse_report
from cli.main import main
from cli.run_config import load_run_config, parse_config_text
from model import ModelConfig
from utils.errors import ConfigError, NumericalAbort, exit_code_for

TINY = """\
# tiny model used by the CLI tests
model.n_rx = 2
model.s_per_chirp = 8
model.chirps_per_frame = 2
model.d_conv = 2
model.d_state = 4
model.h0 = 4
model.w0 = 4
model.c_dec = 2
model.precision = float64
train.epochs = 2
train.batch_size = 2
train.lr = 0.001
sim.seed = 3
bench.frames = 3
bench.warmup = 1
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY)
    return str(path)


@pytest.fixture
def dataset(tmp_path, config_file):
    path = tmp_path / "data.adcc"
    assert main(["simulate", "--config", config_file, "--frames", "4", "--out", str(path)]) == 0
    return str(path)


@pytest.fixture
def trained(tmp_path, config_file, dataset):
    run_dir = tmp_path / "run"
    assert main(["train", "--config", config_file, "--data", dataset, "--run-dir", str(run_dir)]) == 0
    return run_dir


def test_simulate_is_reproducible(tmp_path, config_file, capsys):
    first, second = tmp_path / "a.adcc", tmp_path / "b.adcc"
    assert main(["simulate", "--config", config_file, "--frames", "3", "--out", str(first)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("frame 0: ") and "targets" in out
    assert main(["simulate", "--config", config_file, "--frames", "3", "--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_simulate_without_targets(tmp_path, config_file, capsys):
    path = tmp_path / "noise.adcc"
    assert main(["simulate", "--config", config_file, "--frames", "2", "--out", str(path), "--no-targets"]) == 0
    assert capsys.readouterr().out.splitlines() == ["frame 0: 0 targets", "frame 1: 0 targets"]


def test_train_writes_run_directory(trained, config_file):
    assert (trained / "config.echo").exists()
    assert (trained / "checkpoint.ssmc").exists()
    assert (trained / "log.csv").read_text().splitlines()[0] == "epoch,train_loss,val_miou,val_dice,val_chamfer,val_f1"
    assert load_run_config(trained / "config.echo") == load_run_config(config_file)


def test_eval_prints_report(trained, config_file, dataset, capsys):
    code = main(["eval", "--config", config_file, "--data", dataset,
                 "--checkpoint", str(trained / "checkpoint.ssmc"), "--workers", "2"])
    assert code == 0
    assert "miou=" in capsys.readouterr().out


def test_eval_uses_checkpoint_config_without_run_config(trained, dataset):
    assert main(["eval", "--data", dataset, "--checkpoint", str(trained / "checkpoint.ssmc"), "--workers", "1"]) == 0


def test_stream_and_batch_masks_are_identical(tmp_path, trained, config_file, dataset):
    checkpoint = str(trained / "checkpoint.ssmc")
    outputs = {}
    for mode in ("--stream", "--batch"):
        run_dir = tmp_path / mode.strip("-")
        assert main(["infer", "--config", config_file, "--data", dataset, "--checkpoint", checkpoint,
                     "--run-dir", str(run_dir), mode, "--probs"]) == 0
        masks = sorted((run_dir / "masks").glob("frame_*.pgm"))
        assert [m.name for m in masks] == [f"frame_{i:04d}.pgm" for i in range(4)]
        outputs[mode] = [m.read_bytes() for m in masks]
        assert len(list((run_dir / "masks").glob("*.bevf"))) == 4
    assert outputs["--stream"] == outputs["--batch"]


def test_bench_writes_report(tmp_path, config_file, capsys):
    out = tmp_path / "bench.txt"
    assert main(["bench", "--config", config_file, "--out", str(out)]) == 0
    values = parse_report(out.read_text())
    tiny = load_run_config(config_file).model
    assert int(values["params"]) == count_params(tiny)
    assert values["latency_mode"] == "batch"
    assert "Params" in capsys.readouterr().out


def test_inspect_both_formats(trained, dataset, capsys):
    assert main(["inspect", str(trained / "checkpoint.ssmc")]) == 0
    out = capsys.readouterr().out
    assert out.startswith("SSMC version 1") and "model.n_rx = 2" in out
    assert main(["inspect", dataset]) == 0
    assert "ADCC version 1, 4 frames" in capsys.readouterr().out


def test_inspect_unknown_file_is_format_error(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"JUNKJUNK")
    assert main(["inspect", str(path)]) == 3


def test_truncated_dataset_is_format_error(tmp_path, config_file, dataset, trained):
    broken = tmp_path / "broken.adcc"
    data = open(dataset, "rb").read()
    broken.write_bytes(data[:len(data) // 2])
    code = main(["eval", "--config", config_file, "--data", str(broken),
                 "--checkpoint", str(trained / "checkpoint.ssmc")])
    assert code == 3


def test_unknown_key_is_config_error(tmp_path, config_file):
    code = main(["simulate", "--config", config_file, "--set", "model.bogus=1", "--out", str(tmp_path / "x.adcc")])
    assert code == 2


@pytest.mark.parametrize("snr", ["nan", "-inf"])
def test_undefined_snr_is_config_error(tmp_path, config_file, snr):
    code = main(["simulate", "--config", config_file, "--set", f"sim.snr_db={snr}", "--out", str(tmp_path / "x.adcc")])
    assert code == 2


def test_missing_config_file_is_config_error(tmp_path):
    assert main(["bench", "--config", str(tmp_path / "absent.cfg")]) == 2


def test_structural_mismatch_is_config_error(trained, config_file, dataset, capsys):
    code = main(["eval", "--config", config_file, "--set", "model.d_state=8", "--data", dataset,
                 "--checkpoint", str(trained / "checkpoint.ssmc")])
    assert code == 2
    assert "d_state" in capsys.readouterr().err


def test_dataset_dims_mismatch_is_config_error(tmp_path, config_file, dataset):
    code = main(["train", "--config", config_file, "--set", "model.s_per_chirp=16",
                 "--data", dataset, "--run-dir", str(tmp_path / "run")])
    assert code == 2


def test_exit_code_mapping():
    assert exit_code_for(None) == 0
    assert exit_code_for(ConfigError("x")) == 2
    assert exit_code_for(NumericalAbort("nan")) == 4
    assert exit_code_for(RuntimeError("boom")) == 1


def test_config_text_rules():
    values = parse_config_text("model.n_rx = 4  # receivers\n\ntrain.lr=0.01\n")
    assert values["model"] == {"n_rx": "4"} and values["train"] == {"lr": "0.01"}
    with pytest.raises(ConfigError):
        parse_config_text("model.n_rx = 4\nmodel.n_rx = 8\n")
    with pytest.raises(ConfigError):
        parse_config_text("decoder.width = 4\n")
    with pytest.raises(ConfigError):
        parse_config_text("n_rx = 4\n")


def test_set_overrides_file_values(config_file):
    run = load_run_config(config_file, ["model.d_state=8", "train.epochs=5"])
    assert run.model.d_state == 8 and run.train.epochs == 5
    assert run.model.n_rx == 2
    assert isinstance(run.model, ModelConfig)
