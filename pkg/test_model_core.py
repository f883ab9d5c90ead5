"""
Model core tests: SSM layers against closed forms and numpy oracles, the
decoder, the full forward pass, gradients and checkpoints.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from engine import Tensor, check_gradients, softplus, tsum
from model import (
    Checkpoint, ConvFifo, ModelConfig, Parameters, SSMRadNet, causal_conv_sequence,
    causal_conv_step, compute_decay, decode_bev, embed_sample, emit_output, forward_frame,
    load_checkpoint, project_modulations, read_checkpoint_header, save_checkpoint,
    split_complex, update_state,
)
from model.layers import average_pool, final_state
from radar import Scene, Target, rasterize_labels
from training.losses import frame_loss
from utils.errors import ConfigError, ContractError, FormatError


def _silu(x):
    return x / (1.0 + np.exp(-x))


def _softplus(x):
    return np.log1p(np.exp(x))


# ---------------------------------------------------------------------------
# embedding
# ---------------------------------------------------------------------------

def test_embed_zero_input_zero_bias_is_zero(rng):
    n = 4
    w1, w2 = Tensor(rng.standard_normal((2 * n, 2 * n))), Tensor(rng.standard_normal((n, 2 * n)))
    out = embed_sample(Tensor(np.zeros((1, 2 * n))), w1, Tensor(np.zeros(2 * n)), w2, Tensor(np.zeros(n)))
    np.testing.assert_array_equal(out.data, np.zeros((1, n)))


def test_embed_matches_dense_oracle(rng):
    n = 16
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    w1, b1 = rng.standard_normal((2 * n, 2 * n)), rng.standard_normal(2 * n)
    w2, b2 = rng.standard_normal((n, 2 * n)), rng.standard_normal(n)
    stacked = np.concatenate([x.real, x.imag])
    expected = w2 @ _silu(w1 @ stacked + b1) + b2
    out = embed_sample(split_complex(x[None]), Tensor(w1), Tensor(b1), Tensor(w2), Tensor(b2))
    assert out.shape == (1, n)
    np.testing.assert_allclose(out.data[0], expected, rtol=0, atol=1e-12)


# ---------------------------------------------------------------------------
# causal convolution
# ---------------------------------------------------------------------------

def test_causal_conv_hand_example():
    z = Tensor(np.array([[1.0], [2.0], [3.0]]))
    out, tail = causal_conv_sequence(z, Tensor([[1.0, 1.0]]), Tensor([0.0]))
    np.testing.assert_array_equal(out.data[:, 0], [1.0, 3.0, 5.0])
    np.testing.assert_array_equal(tail.data, [[3.0]])


def test_causal_conv_step_matches_sequence(rng):
    weight = Tensor(rng.standard_normal((3, 4)))
    bias = Tensor(rng.standard_normal(3))
    z = rng.standard_normal((10, 3))
    batch, _ = causal_conv_sequence(Tensor(z), weight, bias)
    fifo = ConvFifo(3, 3)
    for s in range(10):
        out = causal_conv_step(Tensor(z[s:s + 1]), fifo, weight, bias)
        np.testing.assert_allclose(out.data[0], batch.data[s], atol=1e-12)


def test_width_one_conv_is_pointwise():
    z = Tensor(np.array([[2.0, -1.0]]))
    out = causal_conv_step(z, ConvFifo(0, 2), Tensor([[3.0], [0.5]]), Tensor([1.0, 1.0]))
    np.testing.assert_array_equal(out.data, [[7.0, 0.5]])


def test_first_sample_sees_only_current_tap():
    weight = Tensor([[2.0, 100.0, 100.0, 100.0]])
    out = causal_conv_step(Tensor([[1.5]]), ConvFifo(3, 1), weight, Tensor([0.25]))
    assert out.item() == 3.25


# ---------------------------------------------------------------------------
# selective SSM update
# ---------------------------------------------------------------------------

def test_zero_input_gives_softplus_of_zero():
    dt, b_mod, c_mod = project_modulations(Tensor(np.zeros((1, 4))), Tensor(np.ones((96, 4))), Tensor(np.zeros(32)))
    np.testing.assert_allclose(dt.data, np.full((1, 32), np.log(2.0)))
    assert b_mod.shape == c_mod.shape == (1, 32)


def test_modulation_streams_match_matmul_oracle(rng):
    d = 5
    x = rng.standard_normal((2, 3))
    w_p = rng.standard_normal((3 * d, 3))
    dt_bias = rng.standard_normal(d)
    dt, b_mod, c_mod = project_modulations(Tensor(x), Tensor(w_p), Tensor(dt_bias))
    raw = x @ w_p.T
    np.testing.assert_allclose(dt.data, _softplus(raw[:, :d] + dt_bias), atol=1e-12)
    np.testing.assert_allclose(b_mod.data, raw[:, d:2 * d], atol=1e-12)
    np.testing.assert_allclose(c_mod.data, raw[:, 2 * d:], atol=1e-12)


def test_decay_closed_forms(rng):
    decay = compute_decay(Tensor([np.log(2.0)]), Tensor([0.0]))
    assert decay.item() == pytest.approx(0.5, abs=1e-15)
    assert compute_decay(Tensor([1e-12]), Tensor([0.0])).item() == pytest.approx(1.0)

    dt = rng.uniform(0.01, 1.0, size=6)
    j = np.arange(1, 7, dtype=np.float64)
    out = compute_decay(Tensor(dt), Tensor(np.log(j)))
    for k in range(6):
        assert out.data[k] == pytest.approx(np.exp(-j[k] * dt[k]), rel=1e-12)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@settings(max_examples=200, deadline=None)
@given(
    raw_dt=st.lists(st.floats(-40.0, 40.0), min_size=1, max_size=8),
    a_log=st.floats(-10.0, 5.0),
)
def test_decay_stays_strictly_inside_unit_interval(dtype, raw_dt, a_log):
    dt = softplus(Tensor(np.asarray(raw_dt, dtype=dtype)))
    decay = compute_decay(dt, Tensor(np.full(len(raw_dt), a_log, dtype=dtype)))
    assert decay.data.dtype == dtype
    assert np.all(decay.data > 0.0) and np.all(decay.data < 1.0)


def test_float32_tiny_step_still_decays():
    dt = softplus(Tensor(np.array([-20.0, 0.0], dtype=np.float32)))
    decay = compute_decay(dt, Tensor(np.zeros(2, dtype=np.float32)))
    assert decay.data[0] == np.nextafter(np.float32(1), np.float32(0))
    assert decay.data[1] < decay.data[0]


def test_update_state_from_zero(rng):
    dt, b_mod = rng.uniform(0.1, 1.0, (1, 4)), rng.standard_normal((1, 4))
    x = rng.standard_normal((1, 3))
    h = update_state(Tensor(np.zeros((1, 3, 4))), Tensor(np.full((1, 4), 0.7)), Tensor(dt), Tensor(b_mod), Tensor(x))
    np.testing.assert_allclose(h.data, x[..., None] * (dt * b_mod)[:, None, :], atol=1e-15)


def test_update_state_pure_decay(rng):
    h_prev = rng.standard_normal((1, 3, 4))
    decay = rng.uniform(0.1, 0.9, (1, 4))
    h = update_state(Tensor(h_prev), Tensor(decay), Tensor(np.ones((1, 4))), Tensor(np.ones((1, 4))),
                     Tensor(np.zeros((1, 3))))
    np.testing.assert_allclose(h.data, h_prev * decay[:, None, :])


def test_update_state_converges_to_fixed_point(rng):
    decay = rng.uniform(0.1, 0.6, (1, 4))
    dt, b_mod = rng.uniform(0.1, 1.0, (1, 4)), rng.standard_normal((1, 4))
    x = rng.standard_normal((1, 2))
    h = Tensor(np.zeros((1, 2, 4)))
    for _ in range(100):
        h = update_state(h, Tensor(decay), Tensor(dt), Tensor(b_mod), Tensor(x))
    fixed = x[..., None] * (dt * b_mod / (1.0 - decay))[:, None, :]
    np.testing.assert_allclose(h.data, fixed, rtol=0, atol=1e-9)


def test_emit_output_basis_and_zero_cases(rng):
    d_skip = Tensor(np.zeros((4, 1)))
    h = Tensor(np.eye(4)[2][None, None, :])
    assert emit_output(h, Tensor(np.eye(4)[2][None]), Tensor(np.ones((1, 1))), d_skip).item() == 1.0
    zero = emit_output(Tensor(rng.standard_normal((1, 1, 4))), Tensor(np.zeros((1, 4))), Tensor(np.ones((1, 1))), d_skip)
    assert zero.item() == 0.0


def test_emit_output_matches_dot_product_oracle(rng):
    h = rng.standard_normal((1, 3, 5))
    c_mod = rng.standard_normal((1, 5))
    x = rng.standard_normal((1, 3))
    d_skip = rng.standard_normal((5, 3))
    out = emit_output(Tensor(h), Tensor(c_mod), Tensor(x), Tensor(d_skip))
    for g in range(3):
        expected = h[0, g] @ c_mod[0] + d_skip[:, g].sum() * x[0, g]
        assert out.data[0, g] == pytest.approx(expected, abs=1e-12)


def test_ssm_step_matches_sequence(small_config, rng):
    model = SSMRadNet(small_config)
    x = rng.standard_normal((12, small_config.n_rx))
    batch = model.sample_ssm.sequence(Tensor(x))
    state = model.sample_ssm.new_state()
    for s in range(12):
        y = model.sample_ssm.step(Tensor(x[s:s + 1]), state)
        np.testing.assert_allclose(y.data[0], batch.y.data[s], atol=1e-12)
    np.testing.assert_allclose(state.h[0], batch.last_h.data, atol=1e-12)


# ---------------------------------------------------------------------------
# chirp summary and chirp SSM
# ---------------------------------------------------------------------------

def test_avg_pool_of_constant_vectors(tiny_config):
    model = SSMRadNet(tiny_config)
    v = np.array([[0.3, -1.2]])
    pool = model.new_pool()
    for _ in range(tiny_config.s_per_chirp):
        model.accumulate(pool, Tensor(v))
    np.testing.assert_allclose(model.summarize_chirp(pool).data, model.expand(Tensor(v)).data, atol=1e-12)


def test_final_state_takes_last_step(tiny_config, rng):
    model = SSMRadNet(tiny_config.replace(chirp_aggregation="final_state"))
    pool = model.new_pool()
    steps = rng.standard_normal((tiny_config.s_per_chirp, 1, tiny_config.n_rx))
    for y in steps:
        model.accumulate(pool, Tensor(y))
    np.testing.assert_array_equal(model.pool_vector(pool).data, steps[-1])


def test_conv1d_aggregation_streams_like_batch(tiny_config, rng):
    model = SSMRadNet(tiny_config.replace(chirp_aggregation="conv1d"))
    y = rng.standard_normal((tiny_config.s_per_chirp, tiny_config.n_rx))
    pool = model.new_pool()
    for s in range(tiny_config.s_per_chirp):
        model.accumulate(pool, Tensor(y[s:s + 1]))
    np.testing.assert_allclose(model.pool_vector(pool).data[0], model.aggregate(Tensor(y)).data, atol=1e-12)


def test_summarize_mid_chirp_is_rejected(tiny_config):
    model = SSMRadNet(tiny_config)
    pool = model.new_pool()
    model.accumulate(pool, Tensor(np.ones((1, tiny_config.n_rx))))
    with pytest.raises(ContractError):
        model.summarize_chirp(pool)


def test_token_widths():
    assert ModelConfig.radial().token_width == 32
    assert ModelConfig.radial(slow_time_expand=False).token_width == 16
    assert ModelConfig.radical().dims == (64, 192, 8)


def test_zero_token_first_chirp_is_bias_only(tiny_config):
    model = SSMRadNet(tiny_config)
    state = model.new_chirp_state()
    width = tiny_config.token_width
    u = model.chirp_ssm_step(Tensor(np.zeros((1, width))), state)

    p = {name.split(".", 1)[1]: t.data for name, t in model.params.items() if name.startswith("chirp_ssm.")}
    d = p["a_log"].shape[0]
    x = p["conv_b"]
    raw = p["w_p"] @ x
    dt = _softplus(raw[:d] + p["dt_bias"])
    h = x[:, None] * (dt * raw[d:2 * d])[None, :]
    expected = h @ raw[2 * d:] + x * p["d_skip"].sum(axis=0)
    np.testing.assert_allclose(u.data[0], expected, atol=1e-12)
    np.testing.assert_array_equal(state.u_rows[0], u.data[0])
    assert state.rows == 1


def test_chirp_ssm_step_past_frame_end(tiny_config):
    model = SSMRadNet(tiny_config)
    state = model.new_chirp_state()
    token = Tensor(np.zeros((1, tiny_config.token_width)))
    for _ in range(tiny_config.chirps_per_frame):
        model.chirp_ssm_step(token, state)
    with pytest.raises(ContractError):
        model.chirp_ssm_step(token, state)


def test_final_state_and_avg_pool_converge_with_length():
    config = ModelConfig(n_rx=2, s_per_chirp=8, chirps_per_frame=1, d_conv=4, d_state=4, h0=4, w0=4,
                         c_dec=2, precision="float64")
    model = SSMRadNet(config)
    model.params["sample_ssm.dt_bias"].data[...] = 20.0
    gaps = []
    for length in (512, 2048):
        x = split_complex(np.full((length, 2), 1.0 + 1.0j))
        y = model.sample_ssm.sequence(model.embed(x)).y
        gaps.append(np.abs(average_pool(y).data - final_state(y).data).max())
    assert gaps[1] < gaps[0]
    assert gaps[0] / gaps[1] == pytest.approx(4.0, rel=1e-6)


# ---------------------------------------------------------------------------
# decoder
# ---------------------------------------------------------------------------

def test_decoder_output_grid(tiny_config, rng):
    for config, grid in ((tiny_config, (16, 16)), (tiny_config.replace(h0=8, w0=8), (32, 32))):
        params = Parameters.initialize(config)
        u = Tensor(rng.standard_normal((config.chirps_per_frame, config.token_width)))
        maps = decode_bev(u, params, config, expected_rows=config.chirps_per_frame)
        assert maps.segmentation.shape == grid
        assert maps.detection.shape == grid + (3,)


def test_zero_u_zero_biases_gives_half(tiny_config):
    params = Parameters.initialize(tiny_config)
    for name, tensor in params.items():
        if name.startswith(("decoder.", "heads.")) and name.endswith("_b"):
            tensor.data[...] = 0.0
    u = Tensor(np.zeros((tiny_config.chirps_per_frame, tiny_config.token_width)))
    maps = decode_bev(u, params, tiny_config)
    np.testing.assert_array_equal(maps.seg_array(), np.full((16, 16), 0.5))
    np.testing.assert_array_equal(maps.det_array()[..., 0], np.full((16, 16), 0.5))
    np.testing.assert_array_equal(maps.det_array()[..., 1:], np.zeros((16, 16, 2)))


def test_decoder_rejects_wrong_row_count(tiny_config):
    params = Parameters.initialize(tiny_config)
    with pytest.raises(ContractError):
        decode_bev(Tensor(np.zeros((3, tiny_config.token_width))), params, tiny_config, expected_rows=2)


def test_single_head_config(tiny_config, make_frame):
    config = tiny_config.replace(heads=["segmentation"])
    maps = SSMRadNet(config).forward_frame(make_frame(config.dims))
    assert maps.detection is None
    assert "heads.det_w" not in Parameters.initialize(config)


# ---------------------------------------------------------------------------
# full forward pass
# ---------------------------------------------------------------------------

def test_probabilities_stay_in_open_interval(small_config, make_frame):
    maps = SSMRadNet(small_config).forward_frame(make_frame(small_config.dims))
    seg, det = maps.seg_array(), maps.det_array()
    assert np.all((seg > 0) & (seg < 1))
    assert np.all((det[..., 0] > 0) & (det[..., 0] < 1))


def test_radical_dims_run_end_to_end(make_frame):
    config = ModelConfig.radical(d_state=8, h0=4, w0=4, c_dec=4)
    maps = SSMRadNet(config).forward_frame(make_frame(config.dims))
    assert maps.grid == (16, 16)


def test_dimension_mismatch_is_config_error(tiny_config, make_frame):
    model = SSMRadNet(tiny_config)
    with pytest.raises(ConfigError):
        model.forward_frame(make_frame((2, 9, 2)))
    with pytest.raises(ConfigError):
        model.forward_batch(make_frame(tiny_config.dims).samples)


def test_identical_frames_identical_outputs(small_config, make_frame):
    model = SSMRadNet(small_config)
    frame = make_frame(small_config.dims)
    first, second = model.forward_frame(frame), model.forward_frame(frame)
    np.testing.assert_array_equal(first.seg_array(), second.seg_array())
    np.testing.assert_array_equal(first.det_array(), second.det_array())


def test_functional_forward_matches_method(tiny_config, make_frame):
    model = SSMRadNet(tiny_config)
    frame = make_frame(tiny_config.dims)
    np.testing.assert_array_equal(
        forward_frame(frame, model.params, tiny_config).seg_array(), model.forward_frame(frame).seg_array()
    )


def test_batch_matches_single_frames(small_config, make_frame):
    model = SSMRadNet(small_config)
    frames = [make_frame(small_config.dims) for _ in range(3)]
    maps, _ = model.forward_batch(np.stack([f.samples for f in frames]))
    for i, frame in enumerate(frames):
        np.testing.assert_allclose(maps.seg_array()[i], model.forward_frame(frame).seg_array(), atol=1e-12)


def test_chirp_rows_do_not_see_later_chirps(small_config, make_frame):
    model = SSMRadNet(small_config)
    frame = make_frame(small_config.dims)
    altered = frame.samples.copy()
    altered[2:] = 0.0
    before = model.forward_frame(frame, return_features=True).features["u"]
    after = model.forward_frame(altered, return_features=True).features["u"]
    np.testing.assert_allclose(before[:2], after[:2], rtol=0, atol=1e-12)
    assert not np.allclose(before[2:], after[2:])


def test_same_seed_same_parameters(tiny_config):
    a, b = Parameters.initialize(tiny_config), Parameters.initialize(tiny_config)
    for name in a.names():
        np.testing.assert_array_equal(a[name].data, b[name].data)
    other = Parameters.initialize(tiny_config.replace(seed=1))
    assert not np.array_equal(a["embed.w1"].data, other["embed.w1"].data)


def test_radial_stays_under_a_million_parameters():
    assert Parameters.initialize(ModelConfig.radial()).count() < 1_000_000


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

def _labelled(config):
    scene = Scene(targets=[Target(range_norm=0.5, azimuth=10.0)], dims=config.dims)
    return rasterize_labels(scene, config.output_grid)


VARIANTS = [
    {},
    {"chirp_aggregation": "conv1d"},
    {"chirp_aggregation": "final_state", "slow_time_expand": False},
    {"upsample": "bilinear"},
]


@pytest.mark.parametrize("overrides", VARIANTS)
def test_every_parameter_receives_gradient(tiny_config, make_frame, overrides):
    config = tiny_config.replace(**overrides)
    model = SSMRadNet(config)
    labels = _labelled(config)
    maps = model.forward_frame(make_frame(config.dims))
    frame_loss(maps, labels.seg_mask, labels.det_targets)["total"].backward()
    for name, tensor in model.params.items():
        assert tensor.grad is not None and np.any(tensor.grad != 0), name


def test_conv1d_aggregation_registers_its_parameters(tiny_config):
    names = set(SSMRadNet(tiny_config.replace(chirp_aggregation="conv1d")).params.names())
    assert {"aggregate.conv_w", "aggregate.conv_b"} <= names


@pytest.mark.parametrize("overrides", VARIANTS)
def test_full_model_gradients_match_finite_differences(tiny_config, make_frame, overrides):
    config = tiny_config.replace(**overrides)
    model = SSMRadNet(config)
    frame = make_frame(config.dims)
    weights = np.random.default_rng(5).standard_normal(config.output_grid)

    def loss():
        maps = model.forward_frame(frame)
        return tsum(maps.segmentation * weights) + tsum(maps.detection * maps.detection)

    errors = check_gradients(loss, dict(model.params.items()))
    worst = max(errors, key=errors.get)
    assert errors[worst] < 1e-4, (worst, errors[worst])


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def test_checkpoint_round_trip(tiny_config, tmp_path):
    params = Parameters.initialize(tiny_config)
    path = tmp_path / "model.ssmc"
    save_checkpoint(Checkpoint.from_parameters(tiny_config, params), path)
    loaded = load_checkpoint(path, expected=tiny_config)
    assert loaded.config == tiny_config
    assert loaded.element_count() == params.count()
    for name, array in loaded.tensors.items():
        np.testing.assert_array_equal(array, params[name].data.astype(np.float32))
    header = read_checkpoint_header(path)
    assert header["magic"] == "SSMC" and header["elements"] == params.count()
    assert header["entries"][0] == ("embed.w1", (4, 4))


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.ssmc"
    path.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(FormatError) as excinfo:
        load_checkpoint(path)
    assert excinfo.value.offset == 0


def test_checkpoint_trailing_bytes(tiny_config, tmp_path):
    path = tmp_path / "model.ssmc"
    save_checkpoint(Checkpoint.from_parameters(tiny_config, Parameters.initialize(tiny_config)), path)
    path.write_bytes(path.read_bytes() + b"\0")
    with pytest.raises(FormatError):
        load_checkpoint(path)


def test_checkpoint_config_mismatch_lists_keys(tiny_config, tmp_path):
    path = tmp_path / "model.ssmc"
    save_checkpoint(Checkpoint.from_parameters(tiny_config, Parameters.initialize(tiny_config)), path)
    with pytest.raises(ConfigError) as excinfo:
        load_checkpoint(path, expected=tiny_config.replace(d_state=8, c_dec=4))
    assert "d_state" in str(excinfo.value) and "c_dec" in str(excinfo.value)
    # runtime-only keys are not structural
    load_checkpoint(path, expected=tiny_config.replace(s_per_chirp=16, upsample="bilinear"))


def test_unknown_model_key_is_config_error():
    with pytest.raises(ConfigError):
        ModelConfig.from_kv({"n_rx": "4", "bogus": "1"})
