import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from icd import autodiff as ad
from icd.acceptance import _mlp_loss, _op_cases
from icd.diffusion import Denoiser, DenoiserConfig, make_schedule
from icd.rng import stream

OP_NAMES = [name for name, _, _ in _op_cases(np.random.default_rng(0))]


@pytest.mark.parametrize("name", OP_NAMES)
@pytest.mark.parametrize("seed", range(3))
def test_op_gradients_match_central_differences(name, seed):
    cases = {n: (fn, inputs) for n, fn, inputs in _op_cases(stream(seed, "op-test"))}
    fn, inputs = cases[name]
    assert ad.gradcheck(fn, inputs) < 1e-6


def test_three_layer_mlp_gradients(rng):
    sizes = (3, 5, 5, 2)
    params = [rng.standard_normal((4, 3))]
    for i, o in zip(sizes[:-1], sizes[1:]):
        params += [rng.standard_normal((i, o)), rng.standard_normal(o)]
    assert ad.gradcheck(_mlp_loss(sizes, rng.standard_normal((4, 2))), params) < 1e-6


def test_denoiser_forward_gradients():
    sched = make_schedule()
    cfg = DenoiserConfig(hidden=6, depth=3, time_dim=4, class_dim=3, guidance_dim=2)
    den = Denoiser(cfg, sched, stream(0, "gc"), w_set=(1.0, 8.0))
    r = stream(1, "gc")
    for k in den.params:
        den.params[k].value[...] = r.standard_normal(den.params[k].shape) * 0.5
    x = r.standard_normal((3, 2))
    names = list(den.params)

    def fn(nodes):
        for k, n in zip(names, nodes):
            den.params[k] = n
        out = den.forward(x, np.array([19, 500, 999]), np.array([0, 3, 8]), np.array([1.0, 4.0, 8.0]))
        return ad.total(ad.square(out))

    assert ad.gradcheck(fn, [den.params[k].value.copy() for k in names]) < 1e-5


def test_shared_subexpression_accumulates():
    x = ad.parameter(np.array([[1.5, -2.0]]))
    y = ad.mul(x, x)
    loss = ad.total(ad.add(y, x))
    ad.backward(loss)
    np.testing.assert_allclose(x.grad, 2 * x.value + 1)


def test_backward_rejects_non_scalar():
    x = ad.parameter(np.ones((2, 2)))
    with pytest.raises(ad.ContractError):
        ad.backward(ad.square(x))


def test_mismatched_shapes_raise():
    with pytest.raises(ad.DimensionError):
        ad.add(ad.constant(np.ones((2, 3))), ad.constant(np.ones((3, 2))))


def test_no_grad_records_nothing():
    x = ad.parameter(np.ones((2, 2)))
    with ad.no_grad():
        y = ad.tanh(x)
    assert y.parents == () and not y.requires_grad
    assert ad.grad_enabled()


def test_stop_gradient_blocks_flow():
    x = ad.parameter(np.array([[2.0]]))
    loss = ad.total(ad.mul(ad.stop_gradient(x), x))
    ad.backward(loss)
    np.testing.assert_allclose(x.grad, [[2.0]])


def test_adam_first_step_is_lr_times_sign():
    p = {"a": np.array([1.0, -1.0, 0.5])}
    g = {"a": np.array([0.3, -4.0, 1e-3])}
    ad.adam_step(p, g, ad.AdamState(), lr=0.1)
    np.testing.assert_allclose(p["a"], [0.9, -0.9, 0.4], atol=1e-6)


def test_adam_missing_grad_is_zero():
    p = {"a": np.ones(2)}
    ad.adam_step(p, {}, ad.AdamState(), lr=0.1)
    np.testing.assert_array_equal(p["a"], np.ones(2))


@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4)),
              elements=st.floats(-3, 3, allow_nan=False)))
@settings(max_examples=40, deadline=None)
def test_elementwise_ops_match_numpy(a):
    n = ad.constant(a)
    np.testing.assert_array_equal(ad.tanh(n).value, np.tanh(a))
    np.testing.assert_array_equal(ad.square(n).value, a * a)
    np.testing.assert_array_equal(ad.row_sum(n).value, a.sum(axis=1))
    np.testing.assert_allclose(ad.mean(n).value, a.mean())


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2 ** 31))
@settings(max_examples=25, deadline=None)
def test_linear_gradient_property(n, k, seed):
    r = np.random.default_rng(seed)
    x, w, b = r.standard_normal((n, 3)), r.standard_normal((3, k)), r.standard_normal(k)
    assert ad.gradcheck(lambda p: ad.total(ad.tanh(ad.linear(p[0], p[1], p[2]))), [x, w, b]) < 1e-5
