import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from motionforge import diffcore as dc
from motionforge.diffcore import Tensor
from motionforge.diffcore import tensor as T

from gradient_cases import PRIMITIVE_CASES, rand
from oracles import check_gradients, numeric_grad, rel_error


# ---------------------------------------------------------------- forward values


def test_softmax_uniform():
    out = dc.apply_primitive("softmax", [np.zeros(3)])
    np.testing.assert_allclose(out.data, [1 / 3] * 3, atol=1e-15)


def test_conv1d_identity_kernel():
    x = np.random.default_rng(0).normal(size=(2, 1, 9))
    out = dc.apply_primitive("conv1d", [x, np.ones((1, 1, 1))])
    np.testing.assert_array_equal(out.data, x)


def test_layer_norm_example():
    out = dc.apply_primitive("layer_norm", [np.array([1.0, 2.0, 3.0])])
    np.testing.assert_allclose(out.data, [-1.224745, 0.0, 1.224745], atol=1e-6)


def test_layer_norm_matches_direct_formula():
    x = np.random.default_rng(1).normal(size=(3, 4, 5))
    out = dc.layer_norm(Tensor(x), axis=(1, 2)).data
    mu = x.mean(axis=(1, 2), keepdims=True)
    var = x.var(axis=(1, 2), keepdims=True)
    np.testing.assert_allclose(out, (x - mu) / np.sqrt(var), atol=1e-12)


def test_conv1d_matches_direct_loop():
    rng = np.random.default_rng(2)
    x, w, b = rng.normal(size=(2, 3, 11)), rng.normal(size=(4, 3, 5)), rng.normal(size=4)
    out = dc.conv1d(Tensor(x), Tensor(w), Tensor(b), stride=2, padding=2).data
    xp = np.pad(x, ((0, 0), (0, 0), (2, 2)))
    l_out = (11 + 4 - 5) // 2 + 1
    ref = np.zeros((2, 4, l_out))
    for t in range(l_out):
        ref[:, :, t] = np.einsum("bck,ock->bo", xp[:, :, 2 * t : 2 * t + 5], w) + b
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_unknown_primitive_rejected():
    with pytest.raises(ValueError, match="unknown primitive"):
        dc.apply_primitive("fft", [np.zeros(3)])


@pytest.mark.parametrize(
    "kind,inputs",
    [
        ("dense", [np.zeros((2, 3)), np.zeros((4, 5))]),
        ("conv1d", [np.zeros((1, 2, 8)), np.zeros((3, 4, 3))]),
        ("conv1x1", [np.zeros((1, 2, 8)), np.zeros((3, 4))]),
        ("matmul", [np.zeros((2, 3)), np.zeros((4, 2))]),
        ("add", [np.zeros((2, 3)), np.zeros((4, 3))]),
    ],
)
def test_shape_mismatch_names_primitive(kind, inputs):
    with pytest.raises(dc.ShapeError) as err:
        dc.apply_primitive(kind, inputs)
    assert kind in str(err.value)


def test_every_required_primitive_registered():
    required = {
        "dense", "conv1d", "conv1x1", "layer_norm", "softmax", "leaky_relu", "tanh",
        "add", "mul", "matmul", "concat", "reshape", "mean", "sum", "l2_norm",
    }  # fmt: skip
    assert required <= set(dc.PRIMITIVE_KINDS)


def test_tape_node_recorded_only_for_differentiable_inputs():
    a = Tensor(np.ones(3))
    assert (a + a).node is None
    b = Tensor(np.ones(3), requires_grad=True)
    assert (a + b).node is not None
    with dc.no_grad():
        assert (b * b).node is None


# ---------------------------------------------------------------- gradients


def test_sum_of_squares_gradient():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    (g,) = dc.gradients(T.sum_(x * x), [x])
    np.testing.assert_array_equal(g.data, [2.0, 4.0])


def test_non_scalar_loss_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        dc.gradients(x * 2.0, [x])


def test_unreachable_param_gets_zeros():
    x = Tensor(np.ones(3), requires_grad=True)
    y = Tensor(np.ones((2, 2)), requires_grad=True)
    gx, gy = dc.gradients(T.sum_(x), [x, y])
    np.testing.assert_array_equal(gy.data, np.zeros((2, 2)))
    np.testing.assert_array_equal(gx.data, np.ones(3))


def test_shared_subexpression_accumulates():
    x = Tensor(np.array([0.3, -0.7]), requires_grad=True)
    y = dc.tanh(x)
    (g,) = dc.gradients(T.sum_(y * y + y), [x])
    t = np.tanh(x.data)
    np.testing.assert_allclose(g.data, (2 * t + 1) * (1 - t**2), atol=1e-14)


@pytest.mark.parametrize("name", sorted(PRIMITIVE_CASES))
def test_primitive_gradients_match_finite_differences(name):
    build, shapes = PRIMITIVE_CASES[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    worst = max(check_gradients(build, [rand(rng, *s) for s in shapes]) for _ in range(5))
    assert worst < 1e-4


def test_small_conv_network_gradient():
    rng = np.random.default_rng(3)
    x = rand(rng, 2, 3, 10)

    def net(w1, w2, v):
        h = dc.leaky_relu(dc.conv1d(Tensor(x), w1, None, stride=2, padding=1))
        h = dc.layer_norm(h, (1, 2))
        h = dc.tanh(dc.conv1d(h, w2, None, padding=1))
        return T.sum_(dc.dense(h.reshape(2, -1), v) ** 2)

    err = check_gradients(net, [rand(rng, 4, 3, 3), rand(rng, 2, 4, 3), rand(rng, 1, 10)])
    assert err < 1e-4


def test_reverse_over_reverse_gradient_norm():
    """d/dw ||dD/dx|| for a 2-layer critic against finite differences over w."""
    rng = np.random.default_rng(4)
    x0 = rand(rng, 3, 6)

    def penalty(w1, w2):
        x = Tensor(x0, requires_grad=True)
        score = T.sum_(dc.dense(dc.tanh(dc.dense(x, w1)), w2))
        (gx,) = dc.gradients(score, [x], create_graph=True)
        return T.sum_((dc.l2_norm(gx, axis=1) - 1.0) ** 2)

    w1, w2 = rand(rng, 5, 6), rand(rng, 1, 5)
    t1, t2 = Tensor(w1, requires_grad=True), Tensor(w2, requires_grad=True)
    g1, g2 = dc.gradients(penalty(t1, t2), [t1, t2])

    def value():
        return penalty(Tensor(w1), Tensor(w2)).item()

    assert rel_error(g1.data, numeric_grad(value, w1)) < 1e-3
    assert rel_error(g2.data, numeric_grad(value, w2)) < 1e-3


def test_sqrt_gradient_zero_at_origin():
    x = Tensor(np.zeros(3), requires_grad=True)
    (g,) = dc.gradients(dc.l2_norm(x), [x])
    np.testing.assert_array_equal(g.data, np.zeros(3))


# ---------------------------------------------------------------- adam


def test_adam_defaults():
    s = dc.AdamState.for_params([Tensor(np.zeros(2))])
    assert (s.alpha, s.beta1, s.beta2, s.eps) == (0.005, 0.0, 0.9, 1e-8)


def test_adam_zero_gradient_keeps_params():
    p = Tensor(np.array([0.5, -1.0]))
    s = dc.AdamState.for_params([p])
    dc.adam_step([p], [np.zeros(2)], s)
    np.testing.assert_array_equal(p.data, [0.5, -1.0])
    assert s.t == 1


@pytest.mark.parametrize("g", [3.0, -0.2, 50.0])
def test_adam_first_step_is_sign_times_alpha(g):
    p = Tensor(np.array(1.0))
    s = dc.AdamState.for_params([p])
    dc.adam_step([p], [np.array(g)], s)
    assert p.data == pytest.approx(1.0 - 0.005 * np.sign(g), abs=1e-9)


def test_adam_matches_reference_update():
    rng = np.random.default_rng(5)
    p = Tensor(rng.normal(size=4))
    s = dc.AdamState.for_params([p], alpha=0.01, beta1=0.9, beta2=0.999)
    ref, m, v = p.data.copy(), np.zeros(4), np.zeros(4)
    for t in range(1, 6):
        g = rng.normal(size=4)
        dc.adam_step([p], [g], s)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        assert s.t == t
    np.testing.assert_allclose(p.data, ref, atol=1e-14)


def test_adam_shape_mismatch_rejected():
    p = Tensor(np.zeros(3))
    with pytest.raises(dc.ShapeError):
        dc.adam_step([p], [np.zeros(4)], dc.AdamState.for_params([p]))


# ---------------------------------------------------------------- properties


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)), elements=st.floats(-30, 30)))
def test_softmax_is_a_distribution(x):
    p = dc.softmax(Tensor(x), axis=1).data
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(1, 4), st.integers(2, 6)), elements=st.floats(-5, 5)))
def test_forward_is_deterministic(x):
    w = np.linspace(-1, 1, 2 * x.shape[1] * 3).reshape(2, x.shape[1], 3)
    a = dc.conv1d(Tensor(x), Tensor(w), padding=1).data
    b = dc.conv1d(Tensor(x), Tensor(w), padding=1).data
    assert a.tobytes() == b.tobytes()
