import math

import numpy as np
import pytest

from msclstm import layers as L
from msclstm.errors import DimensionError, UsageError, ValidationError

import gradcheck
from oracles import conv1d_oracle, lstm_oracle, max_rel_err


# ---------------------------------------------------------------------------
# conv1d
# ---------------------------------------------------------------------------

def test_conv1d_identity_kernel():
    x = np.random.default_rng(0).normal(size=(6, 1))
    y, _ = L.conv1d_forward(x, np.array([[[1.0]]]), np.array([0.0]))
    assert np.array_equal(y, x)


def test_conv1d_bias_only():
    x = np.random.default_rng(1).normal(size=(5, 2))
    kernel = np.zeros((3, 2, 4))
    y, _ = L.conv1d_forward(x, kernel, np.full(4, 5.0))
    assert np.array_equal(y, np.full((5, 4), 5.0))


def test_conv1d_matches_quadruple_loop_oracle():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(8, 2))
    kernel = rng.normal(size=(3, 2, 3))
    bias = rng.normal(size=3)
    y, _ = L.conv1d_forward(x, kernel, bias)
    assert max_rel_err(y, conv1d_oracle(x, kernel, bias)) < 1e-6


def test_conv1d_same_padding_preserves_length():
    rng = np.random.default_rng(3)
    for T in (1, 2, 5, 9):
        for K in (1, 3, 5):
            x = rng.normal(size=(T, 2))
            y, _ = L.conv1d_forward(x, rng.normal(size=(K, 2, 3)), rng.normal(size=3))
            assert y.shape == (T, 3)


def test_conv1d_channel_mismatch():
    with pytest.raises(DimensionError):
        L.conv1d_forward(np.zeros((4, 2)), np.zeros((3, 3, 5)), np.zeros(5))


def test_conv1d_even_kernel_rejected():
    with pytest.raises(DimensionError):
        L.conv1d_forward(np.zeros((4, 1)), np.zeros((2, 1, 5)), np.zeros(5))


def test_conv1d_backward_zero_dy():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(5, 2))
    _, cache = L.conv1d_forward(x, rng.normal(size=(3, 2, 4)), rng.normal(size=4))
    dx, dk, db = L.conv1d_backward(cache, np.zeros((5, 4)))
    assert not dx.any() and not dk.any() and not db.any()


def test_conv1d_backward_identity_kernel_passes_dy_through():
    x = np.random.default_rng(5).normal(size=(6, 1))
    _, cache = L.conv1d_forward(x, np.array([[[1.0]]]), np.array([0.0]))
    dy = np.random.default_rng(6).normal(size=(6, 1))
    dx, _, _ = L.conv1d_backward(cache, dy)
    assert np.array_equal(dx, dy)


def test_conv1d_gradients_match_finite_differences():
    for seed in range(3):
        assert gradcheck.conv1d_case(seed) < gradcheck.TOL


# ---------------------------------------------------------------------------
# relu
# ---------------------------------------------------------------------------

def test_relu_definition():
    y, _ = L.relu(np.array([-1.0, 0.0, 2.0]))
    assert y.tolist() == [0.0, 0.0, 2.0]


def test_relu_backward_mask():
    _, cache = L.relu(np.array([-1.0, 2.0]))
    assert L.relu_backward(cache, np.array([5.0, 7.0])).tolist() == [0.0, 7.0]


def test_relu_subgradient_zero_at_zero():
    _, cache = L.relu(np.array([0.0]))
    assert L.relu_backward(cache, np.array([3.0])).tolist() == [0.0]


def test_relu_gradients_match_finite_differences():
    for seed in range(3):
        assert gradcheck.relu_case(seed) < gradcheck.TOL


# ---------------------------------------------------------------------------
# maxpool1d
# ---------------------------------------------------------------------------

def test_maxpool_definition():
    y, _ = L.maxpool1d(np.array([[1.0], [3.0], [2.0], [0.0]]))
    assert y[:, 0].tolist() == [3.0, 2.0]


def test_maxpool_backward_routes_to_argmax():
    x = np.array([[1.0], [3.0], [2.0], [0.0]])
    _, cache = L.maxpool1d(x)
    dx = L.maxpool1d_backward(cache, np.array([[5.0], [7.0]]))
    assert dx[:, 0].tolist() == [0.0, 5.0, 7.0, 0.0]


def test_maxpool_tie_goes_to_earlier_index():
    _, cache = L.maxpool1d(np.array([[4.0], [4.0]]))
    dx = L.maxpool1d_backward(cache, np.array([[9.0]]))
    assert dx[:, 0].tolist() == [9.0, 0.0]


def test_maxpool_drops_trailing_odd_element():
    y, _ = L.maxpool1d(np.array([[1.0], [2.0], [99.0]]))
    assert y.shape == (1, 1) and y[0, 0] == 2.0


def test_maxpool_rejects_short_input():
    with pytest.raises(DimensionError):
        L.maxpool1d(np.array([[1.0]]))


def test_maxpool_conserves_gradient_mass():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(8, 3))
    _, cache = L.maxpool1d(x)
    dy = rng.normal(size=(4, 3))
    dx = L.maxpool1d_backward(cache, dy)
    assert np.array_equal(dx.sum(axis=0), dy.sum(axis=0))


def test_maxpool_gradients_match_finite_differences():
    for seed in range(3):
        assert gradcheck.maxpool_case(seed) < gradcheck.TOL


# ---------------------------------------------------------------------------
# fusion
# ---------------------------------------------------------------------------

def test_fuse_single_row_concatenation():
    a = np.arange(1.0, 33.0)[None, :]
    b = np.arange(33.0, 97.0)[None, :]
    fused = L.fuse_branches(a, b)
    assert fused.shape == (1, 96)
    assert fused[0].tolist() == list(np.arange(1.0, 97.0))


def test_fuse_flatten_layout_interleaves_per_timestep():
    rng = np.random.default_rng(8)
    a = rng.normal(size=(3, 2))
    b = rng.normal(size=(3, 4))
    flat = L.fuse_branches(a, b).reshape(-1)
    want = np.concatenate([np.concatenate([a[t], b[t]]) for t in range(3)])
    assert np.array_equal(flat, want)


def test_fuse_shape_arithmetic():
    fused = L.fuse_branches(np.zeros((4, 32)), np.zeros((4, 64)))
    assert fused.shape == (4, 96)


def test_fuse_length_mismatch():
    with pytest.raises(DimensionError):
        L.fuse_branches(np.zeros((4, 32)), np.zeros((3, 64)))


def test_split_fused_is_adjoint_of_fuse():
    rng = np.random.default_rng(9)
    dy = rng.normal(size=(4, 96))
    da, db = L.split_fused(dy, 32)
    assert np.array_equal(da, dy[:, :32])
    assert np.array_equal(db, dy[:, 32:])


# ---------------------------------------------------------------------------
# lstm
# ---------------------------------------------------------------------------

def test_lstm_zero_weights_fixed_point():
    rng = np.random.default_rng(10)
    x = rng.normal(size=(4, 3))
    H = 5
    y, _ = L.lstm_forward(x, np.zeros((3, 4 * H)), np.zeros((H, 4 * H)), np.zeros(4 * H), True)
    assert np.array_equal(y, np.zeros((4, H)))


def test_lstm_single_step_hand_calculation():
    # scalar weights, h0 = c0 = 0, so U never contributes at t=1
    x = np.array([[0.5]])
    W = np.array([[0.1, 0.2, 0.3, 0.4]])
    U = np.array([[9.0, 9.0, 9.0, 9.0]])
    b = np.zeros(4)
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    i, f, g, o = sig(0.05), sig(0.1), math.tanh(0.15), sig(0.2)
    want = o * math.tanh(i * g)
    y, _ = L.lstm_forward(x, W, U, b, False)
    assert abs(y[0] - want) < 1e-12


def test_lstm_matches_scalar_loop_oracle():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(5, 3))
    W = rng.normal(size=(3, 16))
    U = rng.normal(size=(4, 16))
    b = rng.normal(size=16)
    y, _ = L.lstm_forward(x, W, U, b, True)
    assert max_rel_err(y, lstm_oracle(x, W, U, b)) < 1e-5


def test_lstm_last_row_equals_no_sequences_output():
    rng = np.random.default_rng(12)
    x = rng.normal(size=(6, 3))
    W = rng.normal(size=(3, 20))
    U = rng.normal(size=(5, 20))
    b = rng.normal(size=20)
    seq, _ = L.lstm_forward(x, W, U, b, True)
    last, _ = L.lstm_forward(x, W, U, b, False)
    assert np.array_equal(seq[-1], last)


def test_lstm_shape_validation():
    with pytest.raises(DimensionError):
        L.lstm_forward(np.zeros((3, 2)), np.zeros((3, 16)), np.zeros((4, 16)), np.zeros(16), True)
    with pytest.raises(DimensionError):
        L.lstm_forward(np.zeros((3, 2)), np.zeros((2, 16)), np.zeros((4, 16)), np.zeros(12), True)


def test_lstm_backward_zero_dy():
    rng = np.random.default_rng(13)
    x = rng.normal(size=(4, 2))
    W, U, b = rng.normal(size=(2, 12)), rng.normal(size=(3, 12)), rng.normal(size=12)
    _, cache = L.lstm_forward(x, W, U, b, True)
    dx, dW, dU, db = L.lstm_backward(cache, np.zeros((4, 3)))
    assert not dx.any() and not dW.any() and not dU.any() and not db.any()


def test_lstm_gradients_match_finite_differences():
    assert gradcheck.lstm_case(0, T=1) < gradcheck.TOL
    assert gradcheck.lstm_case(1, T=5) < gradcheck.TOL
    assert gradcheck.lstm_case(2) < gradcheck.TOL


# ---------------------------------------------------------------------------
# dense
# ---------------------------------------------------------------------------

def test_dense_identity():
    x = np.random.default_rng(14).normal(size=4)
    y, _ = L.dense_forward(x, np.eye(4), np.zeros(4), "none")
    assert np.array_equal(y, x)


def test_dense_sigmoid_at_zero():
    y, _ = L.dense_forward(np.zeros(3), np.zeros((3, 2)), np.zeros(2), "sigmoid")
    assert y.tolist() == [0.5, 0.5]


def test_dense_unknown_activation():
    with pytest.raises(ValidationError):
        L.dense_forward(np.zeros(3), np.zeros((3, 2)), np.zeros(2), "tanh")


def test_dense_shape_mismatch():
    with pytest.raises(DimensionError):
        L.dense_forward(np.zeros(3), np.zeros((4, 2)), np.zeros(2), "none")


def test_dense_gradients_match_finite_differences():
    for seed in range(3):
        assert gradcheck.dense_case(seed, "relu") < gradcheck.TOL
        assert gradcheck.dense_case(seed, "sigmoid") < gradcheck.TOL
        assert gradcheck.dense_case(seed, "none") < gradcheck.TOL


# ---------------------------------------------------------------------------
# activations stay in range
# ---------------------------------------------------------------------------

def test_sigmoid_and_tanh_ranges():
    # float64 rounding lands on exactly 0/1 beyond |z| ~ 36 for sigmoid and
    # on +-1 beyond |z| ~ 19 for tanh, so the open interval is asserted on
    # the representable domain and saturation (no overflow, NaN) beyond it
    z = np.array([-30.0, -5.0, -1.0, 0.0, 1.0, 5.0, 30.0])
    s = L.sigmoid(z)
    assert ((s > 0) & (s < 1)).all()
    t = np.tanh(np.array([-15.0, -2.0, 0.0, 2.0, 15.0]))
    assert ((t > -1) & (t < 1)).all()
    extreme = L.sigmoid(np.array([-1e4, 1e4]))
    assert np.isfinite(extreme).all()
    assert ((extreme >= 0) & (extreme <= 1)).all()


# ---------------------------------------------------------------------------
# cache discipline and init
# ---------------------------------------------------------------------------

def test_stale_cache_raises_usage_error():
    x = np.random.default_rng(15).normal(size=(4, 2))
    _, cache = L.conv1d_forward(x, np.random.default_rng(16).normal(size=(3, 2, 2)), np.zeros(2))
    L.conv1d_backward(cache, np.zeros((4, 2)))
    with pytest.raises(UsageError):
        L.conv1d_backward(cache, np.zeros((4, 2)))


def test_init_same_seed_bitwise_identical():
    spec = {"kind": "lstm", "name": "lstm_1", "input_dim": 6, "hidden": 4}
    a = L.init_params(spec, seed=42)
    b = L.init_params(spec, seed=42)
    for wname in a.weights:
        assert np.array_equal(a.weights[wname], b.weights[wname])
    c = L.init_params(spec, seed=43)
    assert not np.array_equal(a.weights["W"], c.weights["W"])


def test_init_glorot_bound():
    spec = {"kind": "dense", "name": "d", "input_dim": 3, "units": 3}
    p = L.init_params(spec, seed=0)
    assert np.abs(p.weights["W"]).max() <= 1.0  # sqrt(6 / (3 + 3)) = 1


def test_init_lstm_forget_gate_bias():
    spec = {"kind": "lstm", "name": "l", "input_dim": 5, "hidden": 4}
    b = L.init_params(spec, seed=1).weights["b"]
    assert np.array_equal(b[4:8], np.ones(4))
    assert not b[:4].any() and not b[8:].any()


def test_init_conv_bias_zero_and_dtype():
    spec = {"kind": "conv1d", "name": "c", "kernel_size": 3, "in_channels": 1, "filters": 8}
    p = L.init_params(spec, seed=2)
    assert p.weights["kernel"].dtype == np.float32
    assert not p.weights["bias"].any()


def test_init_unknown_kind():
    with pytest.raises(ValidationError):
        L.init_params({"kind": "pool", "name": "p"}, seed=0)


# ---------------------------------------------------------------------------
# invariant sweep: every layer, 20 random configurations
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("case", ["conv1d", "relu", "maxpool", "dense_relu",
                                  "dense_sigmoid", "lstm"])
def test_gradient_sweep_20_configs(case):
    runners = {
        "conv1d": gradcheck.conv1d_case,
        "relu": gradcheck.relu_case,
        "maxpool": gradcheck.maxpool_case,
        "dense_relu": lambda s: gradcheck.dense_case(s, "relu"),
        "dense_sigmoid": lambda s: gradcheck.dense_case(s, "sigmoid"),
        "lstm": gradcheck.lstm_case,
    }
    worst = max(runners[case](seed) for seed in range(100, 120))
    assert worst < gradcheck.TOL, f"{case}: max relative error {worst}"
