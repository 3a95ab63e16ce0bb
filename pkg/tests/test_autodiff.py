"""Reverse-mode tape: every op's gradient against central differences."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from gridmtd.autodiff import AdamState, Tape, adam_step, finite_diff_check

from conftest import fd_gradient


def _scalarize(tape, node):
    return tape.sqnorm(node)


def _check(build_scalar, shapes, seed, tol=2e-6):
    """Tape gradient vs central differences for a scalar-valued build."""
    rng = np.random.default_rng(seed)
    arrays = [rng.standard_normal(s) for s in shapes]

    tape = Tape()
    leaves = [tape.leaf(a) for a in arrays]
    root = build_scalar(tape, leaves)
    grads = tape.grad(root, leaves)

    for k in range(len(arrays)):
        fd = fd_gradient(lambda x: _value(build_scalar, arrays, k, x), arrays[k])
        assert np.allclose(grads[k], fd, atol=tol), \
            f"leaf {k}: max err {np.max(np.abs(grads[k] - fd)):.2e}"


def _value(build_scalar, arrays, k, x):
    t = Tape()
    ls = [t.leaf(x if i == k else arrays[i]) for i in range(len(arrays))]
    return float(build_scalar(t, ls).value)


def test_add_mul_sub_grad():
    _check(lambda t, ls: t.sqnorm(t.sub(t.mul(ls[0], ls[1]), t.add(ls[0], ls[2]))),
           [(4, 3), (4, 3), (4, 3)], seed=0)


def test_broadcast_add_grad():
    # bias row broadcasts over the batch axis
    _check(lambda t, ls: t.sqnorm(t.add(ls[0], ls[1])), [(5, 3), (3,)], seed=1)


def test_matmul_grad():
    _check(lambda t, ls: t.sqnorm(t.matmul(ls[0], ls[1])), [(4, 6), (6, 2)], seed=2)


def test_affine_grad():
    _check(lambda t, ls: t.sqnorm(t.affine(ls[0], ls[1], ls[2])),
           [(7, 4), (4, 3), (3,)], seed=3)


def test_elementwise_nonlinearities_grad():
    _check(lambda t, ls: t.sqnorm(t.tanh(ls[0])), [(4, 4)], seed=4)
    _check(lambda t, ls: t.sqnorm(t.sigmoid(ls[0])), [(4, 4)], seed=5)
    _check(lambda t, ls: t.sqnorm(t.sin(ls[0])), [(4, 4)], seed=6)
    _check(lambda t, ls: t.sqnorm(t.cos(ls[0])), [(4, 4)], seed=7)


def test_scale_and_l1_grad():
    # keep entries away from the l1 kink
    rng = np.random.default_rng(8)
    a = rng.standard_normal((6,))
    a[np.abs(a) < 0.2] = 0.5
    tape = Tape()
    leaf = tape.leaf(a)
    root = tape.scale(tape.l1norm(leaf), 2.5)
    (g,) = tape.grad(root, [leaf])
    assert np.allclose(g, 2.5 * np.sign(a))


def test_slice_concat_grad():
    def build(t, ls):
        parts = [t.slice_axis(ls[0], 1, 0, 2), t.slice_axis(ls[0], 1, 2, 5)]
        joined = t.concat([t.tanh(parts[0]), parts[1]], axis=1)
        return t.sqnorm(joined)
    _check(build, [(3, 5)], seed=9)


def test_sqnorm_value():
    tape = Tape()
    x = tape.leaf(np.array([3.0, 4.0]))
    assert float(tape.sqnorm(x).value) == pytest.approx(25.0)


def test_grad_accumulates_over_reuse():
    # same leaf used twice: y = <x, x> + sum(x*x) routes two paths into x
    tape = Tape()
    x = tape.leaf(np.array([1.0, -2.0, 0.5]))
    y = tape.add(tape.sqnorm(x), tape.sqnorm(tape.scale(x, 1.0)))
    (g,) = tape.grad(y, [x])
    assert np.allclose(g, 4.0 * x.value)


def test_constant_gets_no_grad():
    tape = Tape()
    x = tape.leaf(np.ones(3))
    c = tape.constant(np.array([2.0, 2.0, 2.0]))
    y = tape.sqnorm(tape.mul(x, c))
    grads = tape.grad(y, [x])
    assert np.allclose(grads[0], 2.0 * x.value * 4.0)


def test_finite_diff_check_helper():
    def build(tape, leaves):
        return tape.sqnorm(tape.tanh(tape.matmul(leaves[0], leaves[1])))
    rng = np.random.default_rng(12)
    report = finite_diff_check(build, [rng.standard_normal((3, 4)),
                                       rng.standard_normal((4, 2))])
    assert report.max_rel_error < 1e-5
    assert not report.kinks


@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=2,
                                               min_side=1, max_side=6),
                  elements=st.floats(-3, 3)))
@settings(max_examples=40, deadline=None)
def test_tanh_chain_grad_property(a):
    tape = Tape()
    leaf = tape.leaf(a)
    root = tape.sqnorm(tape.tanh(leaf))
    (g,) = tape.grad(root, [leaf])
    fd = fd_gradient(lambda x: float(np.sum(np.tanh(x) ** 2)), a)
    assert np.allclose(g, fd, atol=5e-6)


def test_adam_descends_quadratic():
    target = np.array([1.0, -2.0, 3.0])
    params = [np.zeros(3)]
    state = AdamState.for_params(params, lr=0.05)
    for _ in range(400):
        grads = [2.0 * (params[0] - target)]
        params = adam_step(state, params, grads)
    assert np.allclose(params[0], target, atol=1e-3)


def test_adam_step_is_deterministic():
    def run():
        params = [np.ones(4)]
        state = AdamState.for_params(params, lr=0.01)
        for i in range(50):
            params = adam_step(state, params, [np.sin(params[0] + i)])
        return params[0]
    assert np.array_equal(run(), run())
