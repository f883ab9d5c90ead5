"""
Bench tests: analytic counters against closed forms and an instrumented
forward, compute reports and the latency harness.
"""

import numpy as np
import pytest
from pydantic import ValidationError

from bench import (
    ComputeReport, build_report, count_macs, count_params, decoder_macs, measure_latency,
    measure_throughput, param_groups, parse_report,
)
from engine import mac_counter, no_grad
from model import Checkpoint, ModelConfig, Parameters, SSMRadNet


@pytest.fixture
def counter_config():
    """C=2, S=4, n_rx=2, d_state=2."""
    return ModelConfig(n_rx=2, s_per_chirp=4, chirps_per_frame=2, d_conv=2, d_state=2,
                       h0=4, w0=4, c_dec=2, precision="float64")


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

def test_param_count_matches_registry(counter_config):
    params = Parameters.initialize(counter_config)
    assert count_params(counter_config) == params.count()
    assert Checkpoint.from_parameters(counter_config, params).element_count() == count_params(counter_config)


def test_param_count_ignores_cube_length(counter_config):
    base = count_params(counter_config)
    assert count_params(counter_config.replace(s_per_chirp=64)) == base
    assert count_params(counter_config.replace(chirps_per_frame=16)) == base


def test_ssm_group_formula_under_state_doubling(counter_config):
    n, k = counter_config.n_rx, counter_config.d_conv
    for d in (2, 4):
        groups = param_groups(counter_config.replace(d_state=d))
        assert groups["sample_ssm"] == n * k + n + 3 * d * n + 2 * d + d * n
        assert groups["embed"] == param_groups(counter_config)["embed"]


def test_radial_is_under_a_million_parameters():
    assert count_params(ModelConfig.radial()) < 1_000_000


# ---------------------------------------------------------------------------
# MACs
# ---------------------------------------------------------------------------

def test_doubling_samples_doubles_sample_path(counter_config):
    one = count_macs(counter_config)
    two = count_macs(counter_config.replace(s_per_chirp=2 * counter_config.s_per_chirp))
    assert two.sample_path == 2 * one.sample_path
    assert two.chirp_ssm == one.chirp_ssm
    assert two.decoder == one.decoder


def test_doubling_chirps(counter_config):
    config = counter_config
    one = count_macs(config)
    two = count_macs(config.replace(chirps_per_frame=2 * config.chirps_per_frame))
    assert two.sample_path == 2 * one.sample_path
    assert two.chirp_ssm == 2 * one.chirp_ssm
    conv1d = config.chirps_per_frame * 3 * config.token_width * config.h0 * config.w0
    assert two.decoder - one.decoder == conv1d


def test_stage_sums(counter_config):
    macs = count_macs(counter_config)
    assert sum(macs.as_dict().values()) == macs.total


def test_radial_macs_order_of_magnitude():
    gmacs = count_macs(ModelConfig.radial()).total / 1e9
    assert 1.67 / 3 <= gmacs <= 1.67 * 3


@pytest.mark.parametrize("overrides", [
    {},
    {"chirp_aggregation": "conv1d", "upsample": "bilinear"},
    {"chirp_aggregation": "final_state", "heads": ["segmentation"], "slow_time_expand": False},
    {"chirps_per_frame": 4, "decode_chirps": 3},
])
def test_instrumented_forward_matches_closed_form(counter_config, make_frame, overrides):
    config = counter_config.replace(**overrides)
    model = SSMRadNet(config)
    frame = make_frame(config.dims)
    with no_grad(), mac_counter() as counter:
        model.forward_frame(frame)
    assert counter.total == count_macs(config).total


def test_decoder_macs_ignore_samples(counter_config):
    assert decoder_macs(counter_config) == decoder_macs(counter_config.replace(s_per_chirp=512))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def test_report_key_values(counter_config):
    report = build_report(counter_config)
    values = parse_report(report.to_kv())
    assert int(values["params"]) == count_params(counter_config)
    assert int(values["macs_total"]) == count_macs(counter_config).total
    assert sum(int(values[f"macs_{s}"]) for s in ("embed", "sample_ssm", "chirp_ssm", "decoder")) == report.macs_total
    assert "latency_p50_ms" not in values
    assert "MACs total" in report.to_table()


def test_report_rejects_inconsistent_stages():
    with pytest.raises(ValidationError):
        ComputeReport(params_total=1, macs={"embed": 1, "sample_ssm": 1, "chirp_ssm": 1, "decoder": 1},
                      macs_total=5, resident_state_floats=0, peak_state_floats=0)


def test_report_writes_file(counter_config, tmp_path):
    path = tmp_path / "bench.txt"
    build_report(counter_config).write(path)
    assert path.read_text().startswith("params=")


# ---------------------------------------------------------------------------
# latency
# ---------------------------------------------------------------------------

@pytest.fixture
def trivial_config():
    return ModelConfig(n_rx=1, s_per_chirp=1, chirps_per_frame=1, d_conv=1, d_state=2,
                       h0=4, w0=4, c_dec=2, precision="float64")


@pytest.mark.parametrize("mode", ["batch", "streaming"])
def test_latency_on_trivial_config(trivial_config, make_frame, mode):
    model = SSMRadNet(trivial_config)
    frames = [make_frame(trivial_config.dims) for _ in range(5)]
    stats = measure_latency(model, frames, mode=mode, warmup=2)
    assert stats.frames == 5
    assert stats.p50_ms > 0 and stats.p95_ms >= stats.p50_ms
    assert (stats.tick_p99_us is not None) == (mode == "streaming")
    report = build_report(trivial_config, latency=stats, model=model)
    assert parse_report(report.to_kv())["latency_mode"] == mode


def test_latency_needs_frames(trivial_config):
    with pytest.raises(ValueError):
        measure_latency(SSMRadNet(trivial_config), [])


def test_throughput_is_positive(trivial_config, make_frame):
    frames = [make_frame(trivial_config.dims) for _ in range(4)]
    assert measure_throughput(SSMRadNet(trivial_config), frames, workers=2) > 0


@pytest.mark.slow
def test_latency_scales_linearly_with_samples(make_frame):
    base = ModelConfig(n_rx=4, s_per_chirp=256, chirps_per_frame=32, d_state=8, h0=4, w0=4, c_dec=4)
    p50 = []
    for config in (base, base.replace(s_per_chirp=512)):
        frames = [make_frame(config.dims) for _ in range(100)]
        p50.append(measure_latency(SSMRadNet(config), frames, warmup=10).p50_ms)
    assert 1.5 <= p50[1] / p50[0] <= 2.5
