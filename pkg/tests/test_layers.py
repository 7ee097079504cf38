import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from axinspect import layers as L
from axinspect.tensor import GradTape, ShapeError, Tensor
from gradcheck import finite_diff_check

# ---------------------------------------------------------------------------
# independent loop oracles (written before the vectorized implementations)


def conv3d_loops(x, k, b):
    h, w, d, ci = x.shape
    kh, kw, kd, _, co = k.shape
    out = np.zeros((h - kh + 1, w - kw + 1, d - kd + 1, co))
    for p in range(out.shape[0]):
        for q in range(out.shape[1]):
            for r in range(out.shape[2]):
                for o in range(co):
                    acc = b[o]
                    for i in range(kh):
                        for j in range(kw):
                            for m in range(kd):
                                for c in range(ci):
                                    acc += x[p + i, q + j, r + m, c] * k[i, j, m, c, o]
                    out[p, q, r, o] = acc
    return out


def conv2d_loops(x, k, b):
    h, w, ci = x.shape
    kh, kw, _, co = k.shape
    out = np.zeros((h - kh + 1, w - kw + 1, co))
    for p in range(out.shape[0]):
        for q in range(out.shape[1]):
            for o in range(co):
                acc = b[o]
                for i in range(kh):
                    for j in range(kw):
                        for c in range(ci):
                            acc += x[p + i, q + j, c] * k[i, j, c, o]
                out[p, q, o] = acc
    return out


def dense_loops(x, w, b):
    n, m = w.shape
    out = np.zeros(m)
    for j in range(m):
        acc = b[j]
        for i in range(n):
            acc += x[i] * w[i, j]
        out[j] = acc
    return out


def random_conv3d_case(rng):
    h, w, d = rng.integers(3, 7), rng.integers(3, 7), rng.integers(2, 5)
    kh, kw = rng.integers(1, min(h, 3) + 1), rng.integers(1, min(w, 3) + 1)
    kd = rng.integers(1, min(d, 2) + 1)
    ci, co = rng.integers(1, 4), rng.integers(1, 4)
    x = rng.normal(size=(h, w, d, ci))
    k = rng.normal(size=(kh, kw, kd, ci, co))
    b = rng.normal(size=co)
    return x, k, b


# ---------------------------------------------------------------------------
# conv3d


def test_conv3d_all_ones_counts():
    x = Tensor(np.ones((4, 4, 2, 1)))
    k = Tensor(np.ones((2, 2, 2, 1, 1)))
    b = Tensor(np.zeros(1))
    out = L.conv3d(x, k, b)
    assert out.shape == (3, 3, 1, 1)
    np.testing.assert_array_equal(out.data, np.full((3, 3, 1, 1), 8.0))


def test_conv3d_unit_kernel_is_identity():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(5, 4, 3, 1)))
    k = Tensor(np.ones((1, 1, 1, 1, 1)))
    b = Tensor(np.zeros(1))
    np.testing.assert_array_equal(L.conv3d(x, k, b).data, x.data)


def test_conv3d_matches_loop_oracle_on_spec_case():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(6, 6, 3, 2))
    k = rng.normal(size=(3, 3, 2, 2, 4))
    b = rng.normal(size=4)
    got = L.conv3d(Tensor(x), Tensor(k), Tensor(b)).data
    np.testing.assert_allclose(got, conv3d_loops(x, k, b), rtol=1e-6)


def test_conv3d_matches_loop_oracle_random_shapes():
    rng = np.random.default_rng(42)
    for _ in range(20):
        x, k, b = random_conv3d_case(rng)
        got = L.conv3d(Tensor(x), Tensor(k), Tensor(b)).data
        np.testing.assert_allclose(got, conv3d_loops(x, k, b), rtol=1e-6, atol=1e-9)


def test_conv3d_shape_mismatch_diagnostics():
    x = Tensor(np.zeros((4, 4, 2, 3)))
    with pytest.raises(ShapeError, match="channel"):
        L.conv3d(x, Tensor(np.zeros((2, 2, 2, 1, 1))), Tensor(np.zeros(1)))
    with pytest.raises(ShapeError, match="larger"):
        L.conv3d(x, Tensor(np.zeros((5, 2, 2, 3, 1))), Tensor(np.zeros(1)))
    with pytest.raises(ShapeError, match="bias"):
        L.conv3d(x, Tensor(np.zeros((2, 2, 2, 3, 4))), Tensor(np.zeros(3)))


def test_conv3d_gradients():
    rng = np.random.default_rng(3)
    x = Tensor(rng.normal(size=(4, 5, 3, 2)))
    k = Tensor(rng.normal(size=(2, 3, 2, 2, 3)))
    b = Tensor(rng.normal(size=3))

    def loss():
        return L.tensor_sum(L.mul(L.conv3d(x, k, b), L.conv3d(x, k, b)))

    assert finite_diff_check(loss, {"x": x, "k": k, "b": b}) < 1e-4


# ---------------------------------------------------------------------------
# conv2d


def test_conv2d_unit_kernel_is_identity():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=(5, 5, 1)))
    out = L.conv2d(x, Tensor(np.ones((1, 1, 1, 1))), Tensor(np.zeros(1)))
    np.testing.assert_array_equal(out.data, x.data)


def test_conv2d_all_ones_counts():
    out = L.conv2d(Tensor(np.ones((5, 5, 1))), Tensor(np.ones((3, 3, 1, 1))), Tensor(np.zeros(1)))
    assert out.shape == (3, 3, 1)
    np.testing.assert_array_equal(out.data, np.full((3, 3, 1), 9.0))


def test_conv2d_matches_loop_oracle_random_shapes():
    rng = np.random.default_rng(43)
    for _ in range(20):
        h, w = rng.integers(3, 8), rng.integers(3, 8)
        kh, kw = rng.integers(1, 4), rng.integers(1, 4)
        ci, co = rng.integers(1, 4), rng.integers(1, 5)
        x = rng.normal(size=(h, w, ci))
        k = rng.normal(size=(min(kh, h), min(kw, w), ci, co))
        b = rng.normal(size=co)
        got = L.conv2d(Tensor(x), Tensor(k), Tensor(b)).data
        np.testing.assert_allclose(got, conv2d_loops(x, k, b), rtol=1e-6, atol=1e-9)


def test_conv2d_gradients():
    rng = np.random.default_rng(4)
    x = Tensor(rng.normal(size=(5, 4, 2)))
    k = Tensor(rng.normal(size=(3, 2, 2, 3)))
    b = Tensor(rng.normal(size=3))

    def loss():
        return L.tensor_sum(L.relu(L.conv2d(x, k, b)))

    assert finite_diff_check(loss, {"x": x, "k": k, "b": b}) < 1e-4


# ---------------------------------------------------------------------------
# dense


def test_dense_identity():
    x = Tensor(np.array([1.0, -2.0, 3.0]))
    out = L.dense(x, Tensor(np.eye(3)), Tensor(np.zeros(3)))
    np.testing.assert_array_equal(out.data, x.data)


def test_dense_accepts_flattened_trunk_width():
    x = Tensor(np.zeros(53824, dtype=np.float32))
    w = Tensor(np.zeros((53824, 1024), dtype=np.float32))
    b = Tensor(np.zeros(1024, dtype=np.float32))
    assert L.dense(x, w, b).shape == (1024,)


def test_dense_matches_loop_oracle_random_shapes():
    rng = np.random.default_rng(44)
    for _ in range(20):
        n, m = rng.integers(1, 12), rng.integers(1, 12)
        x = rng.normal(size=n)
        w = rng.normal(size=(n, m))
        b = rng.normal(size=m)
        got = L.dense(Tensor(x), Tensor(w), Tensor(b)).data
        np.testing.assert_allclose(got, dense_loops(x, w, b), rtol=1e-6, atol=1e-9)


def test_dense_shape_mismatch():
    with pytest.raises(ShapeError):
        L.dense(Tensor(np.zeros(4)), Tensor(np.zeros((3, 2))), Tensor(np.zeros(2)))


def test_dense_gradients():
    rng = np.random.default_rng(5)
    x = Tensor(rng.normal(size=6))
    w = Tensor(rng.normal(size=(6, 4)))
    b = Tensor(rng.normal(size=4))

    def loss():
        return L.tensor_sum(L.mul(L.dense(x, w, b), L.dense(x, w, b)))

    assert finite_diff_check(loss, {"x": x, "w": w, "b": b}) < 1e-4


# ---------------------------------------------------------------------------
# maxpool


def test_maxpool_halves_trunk_shape():
    x = Tensor(np.zeros((124, 124, 4, 16), dtype=np.float32))
    assert L.maxpool(x, (2, 2, 2)).shape == (62, 62, 2, 16)


def test_maxpool_2x2_single_window():
    x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1))
    out = L.maxpool(x, (2, 2))
    assert out.shape == (1, 1, 1)
    assert out.data[0, 0, 0] == 4.0


def test_maxpool_gradient_routes_to_argmax():
    x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1), requires_grad=True)
    with GradTape() as tape:
        loss = L.tensor_sum(L.maxpool(x, (2, 2)))
    tape.backward(loss)
    np.testing.assert_array_equal(x.grad.reshape(2, 2), [[0.0, 0.0], [0.0, 1.0]])


def test_maxpool_tie_goes_to_first_occurrence():
    x = Tensor(np.full((2, 2, 1), 7.0), requires_grad=True)
    with GradTape() as tape:
        loss = L.tensor_sum(L.maxpool(x, (2, 2)))
    tape.backward(loss)
    np.testing.assert_array_equal(x.grad.reshape(-1), [1.0, 0.0, 0.0, 0.0])


def test_maxpool_non_divisible_extent_names_axis():
    with pytest.raises(ShapeError, match="axis 1"):
        L.maxpool(Tensor(np.zeros((4, 5, 2))), (2, 2))


@settings(max_examples=25, deadline=None)
@given(
    bh=st.integers(1, 3), bw=st.integers(1, 3), bd=st.integers(1, 2),
    wh=st.integers(1, 3), ww=st.integers(1, 3), wd=st.integers(1, 2),
    c=st.integers(1, 3), seed=st.integers(0, 2**31),
)
def test_maxpool_backward_one_unit_per_window(bh, bw, bd, wh, ww, wd, c, seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(bh * wh, bw * ww, bd * wd, c)), requires_grad=True)
    with GradTape() as tape:
        loss = L.tensor_sum(L.maxpool(x, (wh, ww, wd)))
    tape.backward(loss)
    assert x.grad.sum() == bh * bw * bd * c
    assert set(np.unique(x.grad)) <= {0.0, 1.0}


def test_maxpool_gradient_finite_difference():
    rng = np.random.default_rng(6)
    x = Tensor(rng.normal(size=(4, 6, 2, 3)))

    def loss():
        return L.tensor_sum(L.mul(L.maxpool(x, (2, 3, 2)), L.maxpool(x, (2, 3, 2))))

    assert finite_diff_check(loss, {"x": x}) < 1e-4


# ---------------------------------------------------------------------------
# batchnorm


def bn_params(c, dtype=np.float64):
    gamma = Tensor(np.ones(c, dtype=dtype))
    beta = Tensor(np.zeros(c, dtype=dtype))
    return gamma, beta, np.zeros(c), np.ones(c)


def test_batchnorm_infer_fresh_stats_is_near_identity():
    rng = np.random.default_rng(8)
    x = Tensor(rng.normal(size=(5, 5, 2, 3)))
    gamma, beta, rm, rv = bn_params(3)
    out = L.batchnorm(x, gamma, beta, rm, rv, mode="infer", eps=1e-5)
    np.testing.assert_allclose(out.data, x.data, rtol=1e-4)


def test_batchnorm_train_normalizes_per_channel():
    rng = np.random.default_rng(9)
    x = Tensor(rng.normal(loc=3.0, scale=2.5, size=(8, 8, 4)))
    gamma, beta, rm, rv = bn_params(4)
    out = L.batchnorm(x, gamma, beta, rm, rv, mode="train")
    got = out.data.reshape(-1, 4)
    np.testing.assert_allclose(got.mean(axis=0), np.zeros(4), atol=1e-10)
    np.testing.assert_allclose(got.var(axis=0), np.ones(4), atol=1e-4)


def test_batchnorm_updates_running_stats_with_momentum():
    rng = np.random.default_rng(10)
    x = Tensor(rng.normal(loc=2.0, size=(16, 16, 2)))
    gamma, beta, rm, rv = bn_params(2)
    L.batchnorm(x, gamma, beta, rm, rv, mode="train", momentum=0.9)
    mean = x.data.reshape(-1, 2).mean(axis=0)
    var = x.data.reshape(-1, 2).var(axis=0)
    np.testing.assert_allclose(rm, 0.1 * mean, rtol=1e-12)
    np.testing.assert_allclose(rv, 0.9 + 0.1 * var, rtol=1e-12)


def test_batchnorm_degenerate_batch_rejected():
    gamma, beta, rm, rv = bn_params(3)
    with pytest.raises(ShapeError):
        L.batchnorm(Tensor(np.zeros((1, 3))), gamma, beta, rm, rv, mode="train")


def test_batchnorm_gradients_train_and_infer():
    rng = np.random.default_rng(11)
    for mode in ("train", "infer"):
        x = Tensor(rng.normal(size=(3, 4, 2)))
        gamma = Tensor(rng.normal(size=2) + 1.0)
        beta = Tensor(rng.normal(size=2))

        def loss():
            rm, rv = np.zeros(2), np.ones(2)  # fresh stats: keep f deterministic
            y = L.batchnorm(x, gamma, beta, rm, rv, mode=mode)
            return L.tensor_sum(L.mul(y, y))

        err = finite_diff_check(loss, {"x": x, "gamma": gamma, "beta": beta})
        assert err < 1e-4, f"{mode}: {err}"


# ---------------------------------------------------------------------------
# relu / dropout


def test_relu_values():
    out = L.relu(Tensor(np.array([-3.0, 2.0, 0.0])))
    np.testing.assert_array_equal(out.data, [0.0, 2.0, 0.0])


def test_relu_gradient():
    rng = np.random.default_rng(12)
    x = Tensor(rng.normal(size=(7,)) + 0.1)

    def loss():
        return L.tensor_sum(L.mul(L.relu(x), L.relu(x)))

    assert finite_diff_check(loss, {"x": x}) < 1e-4


def test_dropout_rate_zero_is_identity_in_both_modes():
    x = Tensor(np.arange(6.0))
    rng = np.random.default_rng(0)
    np.testing.assert_array_equal(L.dropout(x, 0.0, "train", rng).data, x.data)
    np.testing.assert_array_equal(L.dropout(x, 0.0, "infer").data, x.data)


def test_dropout_infer_is_identity_and_seed_independent():
    x = Tensor(np.arange(10.0))
    np.testing.assert_array_equal(L.dropout(x, 0.5, "infer").data, x.data)


def test_dropout_rate_validation():
    x = Tensor(np.ones(3))
    for bad in (-0.1, 1.0, 1.5):
        with pytest.raises(ValueError):
            L.dropout(x, bad, "train", np.random.default_rng(0))


def test_dropout_survivor_statistics():
    n = 100_000
    x = Tensor(np.ones(n))
    out = L.dropout(x, 0.5, "train", np.random.default_rng(123))
    survivors = np.count_nonzero(out.data) / n
    assert abs(survivors - 0.5) < 0.02
    assert abs(out.data.mean() - 1.0) < 0.02  # inverted scaling preserves the mean


def test_dropout_deterministic_given_seed():
    x = Tensor(np.arange(100.0))
    a = L.dropout(x, 0.3, "train", np.random.default_rng(7)).data
    b = L.dropout(x, 0.3, "train", np.random.default_rng(7)).data
    np.testing.assert_array_equal(a, b)


def test_dropout_gradient_with_fixed_mask():
    x = Tensor(np.arange(1.0, 9.0))

    def loss():
        y = L.dropout(x, 0.25, "train", np.random.default_rng(99))
        return L.tensor_sum(L.mul(y, y))

    assert finite_diff_check(loss, {"x": x}) < 1e-4


# ---------------------------------------------------------------------------
# lstm cell


def lstm_params(f, u, rng=None, dtype=np.float64):
    if rng is None:
        w = np.zeros(((f + u), 4 * u), dtype=dtype)
        b = np.zeros(4 * u, dtype=dtype)
    else:
        w = rng.normal(scale=0.4, size=((f + u), 4 * u))
        b = rng.normal(scale=0.4, size=4 * u)
    return Tensor(w), Tensor(b)


def test_lstm_zero_everything_stays_zero():
    w, b = lstm_params(4, 3)
    h, c = L.lstm_cell(Tensor(np.zeros(4)), Tensor(np.zeros(3)), Tensor(np.zeros(3)), w, b)
    np.testing.assert_array_equal(h.data, np.zeros(3))
    np.testing.assert_array_equal(c.data, np.zeros(3))


def test_lstm_saturated_forget_gate_carries_cell_state():
    rng = np.random.default_rng(13)
    u = 3
    w, b = lstm_params(4, u, rng)
    b.data[u : 2 * u] = 20.0  # forget gate saturates at 1
    x = Tensor(rng.normal(size=4))
    h0 = Tensor(rng.normal(size=u))
    c0 = Tensor(rng.normal(size=u))
    _, c1 = L.lstm_cell(x, h0, c0, w, b)

    z = np.concatenate([x.data, h0.data]) @ w.data + b.data
    i = 1 / (1 + np.exp(-z[:u]))
    g = np.tanh(z[2 * u : 3 * u])
    np.testing.assert_allclose(c1.data, c0.data + i * g, atol=1e-6)


def test_lstm_param_shape_validation():
    w, b = lstm_params(4, 3)
    with pytest.raises(ShapeError):
        L.lstm_cell(Tensor(np.zeros(5)), Tensor(np.zeros(3)), Tensor(np.zeros(3)), w, b)
    with pytest.raises(ShapeError):
        L.lstm_cell(Tensor(np.zeros(4)), Tensor(np.zeros(3)), Tensor(np.zeros(2)), w, b)


def test_lstm_backward_through_time_vs_finite_differences():
    rng = np.random.default_rng(14)
    u, f, steps = 3, 2, 6
    w, b = lstm_params(f, u, rng)
    xs = [Tensor(rng.normal(size=f)) for _ in range(steps)]

    def loss():
        h = Tensor(np.zeros(u))
        c = Tensor(np.zeros(u))
        for x in xs:
            h, c = L.lstm_cell(x, h, c, w, b)
        return L.tensor_sum(L.mul(h, h))

    tensors = {"w": w, "b": b, **{f"x{i}": x for i, x in enumerate(xs)}}
    assert finite_diff_check(loss, tensors) < 1e-4


# ---------------------------------------------------------------------------
# softmax cross entropy


def test_xent_symmetric_logits_is_ln2():
    loss = L.softmax_cross_entropy(Tensor(np.zeros(2)), 0)
    np.testing.assert_allclose(loss.item(), np.log(2.0), rtol=1e-12)


def test_xent_confident_correct_is_near_zero():
    loss = L.softmax_cross_entropy(Tensor(np.array([20.0, -20.0])), 0)
    assert loss.item() < 1e-12


def test_xent_label_validation():
    with pytest.raises(ValueError):
        L.softmax_cross_entropy(Tensor(np.zeros(2)), 2)


def test_xent_gradient_is_softmax_minus_onehot():
    logits = Tensor(np.array([0.3, -1.2]), requires_grad=True)
    with GradTape() as tape:
        loss = L.softmax_cross_entropy(logits, 1)
    tape.backward(loss)
    p = L.softmax(logits.data)
    np.testing.assert_allclose(logits.grad, p - np.array([0.0, 1.0]), rtol=1e-12)


def test_xent_finite_difference():
    rng = np.random.default_rng(15)
    logits = Tensor(rng.normal(size=2))

    def loss():
        return L.softmax_cross_entropy(logits, 1)

    assert finite_diff_check(loss, {"logits": logits}) < 1e-4


# ---------------------------------------------------------------------------
# remaining elementwise ops: finite differences


def test_elementwise_op_gradients():
    rng = np.random.default_rng(16)
    x = Tensor(rng.normal(size=(3, 4)))
    y = Tensor(rng.normal(size=(3, 4)))

    cases = {
        "add": (lambda: L.tensor_sum(L.mul(L.add(x, y), L.add(x, y))), {"x": x, "y": y}),
        "mul": (lambda: L.tensor_sum(L.mul(x, y)), {"x": x, "y": y}),
        "sigmoid": (lambda: L.tensor_sum(L.sigmoid(x)), {"x": x}),
        "tanh": (lambda: L.tensor_sum(L.tanh(x)), {"x": x}),
        "reshape": (lambda: L.tensor_sum(L.mul(L.reshape(x, (12,)), L.reshape(y, (12,)))), {"x": x, "y": y}),
    }
    for name, (loss, tensors) in cases.items():
        err = finite_diff_check(loss, tensors)
        assert err < 1e-4, f"{name}: {err}"


def test_take_channel_selects_and_routes_gradient():
    rng = np.random.default_rng(19)
    x = Tensor(rng.normal(size=(4, 4, 3, 1)), requires_grad=True)
    with GradTape() as tape:
        loss = L.tensor_sum(L.mul(L.take_channel(x, 1), L.take_channel(x, 1)))
    tape.backward(loss)
    np.testing.assert_allclose(x.grad[:, :, 1, :], 2 * x.data[:, :, 1, :])
    assert x.grad[:, :, 0, :].max() == 0.0
    assert x.grad[:, :, 2, :].max() == 0.0
    with pytest.raises(ShapeError):
        L.take_channel(x, 3)


def test_slice_concat_gradients():
    rng = np.random.default_rng(17)
    a = Tensor(rng.normal(size=5))
    b = Tensor(rng.normal(size=3))

    def loss():
        joined = L.concat1d(a, b)
        part = L.slice1d(joined, 2, 7)
        return L.tensor_sum(L.mul(part, part))

    assert finite_diff_check(loss, {"a": a, "b": b}) < 1e-4


def test_forward_deterministic_with_fixed_inputs():
    rng = np.random.default_rng(18)
    x = np.asarray(rng.normal(size=(6, 6, 3, 2)))
    k = np.asarray(rng.normal(size=(3, 3, 2, 2, 4)))
    b = np.asarray(rng.normal(size=4))
    one = L.conv3d(Tensor(x), Tensor(k), Tensor(b)).data
    two = L.conv3d(Tensor(x), Tensor(k), Tensor(b)).data
    np.testing.assert_array_equal(one, two)
