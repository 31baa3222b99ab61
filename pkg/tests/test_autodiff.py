import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hybridpred import autodiff as ad
from hybridpred.autodiff import Parameter, ShapeError, Tensor, grad_check
from hybridpred.autodiff.tensor import make_node

SEEDS = range(10)
TOL = 1e-4


def projected(fn, shape_out_rng):
    """Scalar probe: sum(fn(x) * R) with a fixed random R."""
    cache = {}

    def f(x):
        out = fn(x)
        if "R" not in cache:
            cache["R"] = shape_out_rng.normal(size=out.shape)
        return ad.sum_(ad.mul(out, cache["R"]))

    return f


def check(fn, shape, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(scale=scale, size=shape), requires_grad=True)
    return grad_check(projected(fn, rng), x, rng=rng)


# -- one entry per primitive: (builder(rng) -> fn(x), input shape)
def _fixed(fn, *shapes):
    """Builder that draws the constant operands once, then closes over them."""
    def build(rng):
        consts = [rng.normal(size=sh) for sh in shapes]
        return lambda x: fn(x, *consts)
    return build


PRIMITIVES = {
    "add": (_fixed(ad.add, (3, 4)), (3, 4)),
    "add_broadcast": (_fixed(lambda x, c: ad.add(c, x), (2, 3, 4)), (3, 1)),
    "sub": (_fixed(lambda x, c: ad.sub(c, x), (3, 4)), (3, 4)),
    "mul": (_fixed(ad.mul, (3, 4)), (3, 4)),
    "mul_self": (_fixed(lambda x: ad.mul(x, x)), (5,)),
    "neg": (_fixed(ad.neg), (4,)),
    "matmul_left": (_fixed(ad.matmul, (4, 2)), (3, 4)),
    "matmul_right": (_fixed(lambda x, c: ad.matmul(c, x), (3, 4)), (4, 2)),
    "matmul_batched": (_fixed(ad.matmul, (2, 4, 3)), (2, 5, 4)),
    "matvec_batched": (_fixed(lambda x, c: ad.matmul(c, x), (6, 5, 5)), (6, 5, 1)),
    "conv2d_input": (_fixed(lambda x, w, b: ad.conv2d(x, w, b, stride=2, padding=1),
                            (3, 2, 3, 3), (3,)), (2, 2, 7, 7)),
    "conv2d_weight": (_fixed(lambda w, x: ad.conv2d(x, w, None, stride=1, padding=1),
                             (2, 2, 6, 6)), (3, 2, 3, 3)),
    "conv2d_nopad": (_fixed(lambda x, w: ad.conv2d(x, w, stride=2), (2, 3, 2, 2)), (1, 3, 6, 6)),
    "max_pool2d": (_fixed(lambda x: ad.max_pool2d(x, 2)), (2, 2, 6, 6)),
    "leaky_relu": (_fixed(lambda x: ad.leaky_relu(x, 0.01)), (4, 5)),
    "leaky_relu_steep": (_fixed(lambda x: ad.leaky_relu(x, 0.3)), (4, 5)),
    "sigmoid": (_fixed(ad.sigmoid), (4, 5)),
    "tanh": (_fixed(ad.tanh), (4, 5)),
    "softmax": (_fixed(lambda x: ad.softmax(x, axis=-1)), (3, 4)),
    "softmax_axis0": (_fixed(lambda x: ad.softmax(x, axis=0)), (3, 4)),
    "l2_normalize": (_fixed(lambda x: ad.l2_normalize(x, axis=-1)), (3, 5)),
    "sum": (_fixed(lambda x: ad.sum_(x, axis=1)), (3, 4)),
    "mean_over_axis": (_fixed(lambda x: ad.mean_over_axis(x, axis=(2, 3))), (2, 3, 4, 4)),
    "mean_all": (_fixed(ad.mean_over_axis), (3, 4)),
    "abs_sum": (_fixed(lambda x: ad.abs_sum(x, axis=-1)), (3, 6)),
    "min_over_axis": (_fixed(lambda x: ad.min_over_axis(x, axis=-1)), (4, 3)),
    "reshape": (_fixed(lambda x: ad.reshape(x, (4, 3))), (3, 4)),
    "transpose": (_fixed(lambda x: ad.transpose(x, (1, 0, 2))), (2, 3, 4)),
    "concat": (_fixed(lambda x, c: ad.concat([x, c, x], axis=0), (2, 3)), (2, 3)),
    "slice": (_fixed(lambda x: x[1:, ::2]), (4, 5)),
    "slice_repeated": (_fixed(lambda x: ad.slice_(x, np.array([0, 2, 2, 1]))), (3, 2)),
    "gather_rows": (_fixed(lambda x: ad.gather_rows(x, [2, 0, 2, 1])), (3, 4)),
    "segment_mean": (_fixed(lambda x: ad.segment_mean(x, [0, 2, 2, 0, 2], 4)), (5, 3)),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients_over_seeds(name):
    build, shape = PRIMITIVES[name]
    worst = 0.0
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        fn = build(rng)
        worst = max(worst, check(fn, shape, seed))
    assert worst < TOL, f"{name}: {worst}"


def test_gru_cell_gradients():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        cell = ad.GRUCell(3, 4, rng)
        h0 = rng.normal(size=(2, 4))
        x0 = rng.normal(size=(2, 3))
        assert check(lambda x: cell(x, Tensor(h0)), (2, 3), seed) < TOL
        assert check(lambda h: cell(Tensor(x0), h), (2, 4), seed + 100) < TOL
        for p in cell.parameters():
            p.data += rng.normal(scale=0.1, size=p.shape)
            err = grad_check(projected(lambda _: cell(Tensor(x0), Tensor(h0)), rng), p, rng=rng)
            assert err < TOL


# -- hand examples

def test_leaky_relu_example():
    np.testing.assert_allclose(ad.leaky_relu(Tensor([-1.0, 0.0, 2.0]), 0.01).data, [-0.01, 0.0, 2.0])


def test_softmax_symmetric():
    np.testing.assert_allclose(ad.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])


def test_conv_identity_kernel():
    x = np.random.default_rng(0).normal(size=(2, 3, 5, 5))
    w = np.zeros((3, 3, 1, 1))
    w[np.arange(3), np.arange(3)] = 1.0
    np.testing.assert_array_equal(ad.conv2d(Tensor(x), Tensor(w)).data, x)


def test_conv_matches_direct_loop():
    rng = np.random.default_rng(1)
    x, w, b = rng.normal(size=(1, 2, 5, 6)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)
    out = ad.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=2, padding=1).data
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros((1, 3, 3, 3))
    for o in range(3):
        for i in range(3):
            for j in range(3):
                ref[0, o, i, j] = (xp[0, :, 2 * i:2 * i + 3, 2 * j:2 * j + 3] * w[o]).sum() + b[o]
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_max_pool_values():
    x = np.arange(16.0).reshape(1, 1, 4, 4)
    np.testing.assert_array_equal(ad.max_pool2d(Tensor(x), 2).data[0, 0], [[5, 7], [13, 15]])


def test_gru_zero_weights_zero_state():
    zeros = lambda *s: Tensor(np.zeros(s))
    h = ad.gru_cell(Tensor(np.ones((1, 3))), zeros(1, 4), zeros(3, 12), zeros(4, 12), zeros(12), zeros(12))
    np.testing.assert_array_equal(h.data, np.zeros((1, 4)))


def test_gru_saturated_update_gate_keeps_state():
    rng = np.random.default_rng(2)
    cell = ad.GRUCell(3, 4, rng)
    cell.b_input.data[4:8] = 50.0   # update gate columns
    h = rng.normal(size=(2, 4))
    out = cell(Tensor(rng.normal(size=(2, 3))), Tensor(h))
    np.testing.assert_allclose(out.data, h, atol=1e-6)


def test_gru_matches_reference_equations():
    rng = np.random.default_rng(3)
    cell = ad.GRUCell(3, 2, rng)
    for p in cell.parameters():
        p.data[...] = rng.normal(size=p.shape)
    x, h = rng.normal(size=(1, 3)), rng.normal(size=(1, 2))
    sig = lambda v: 1 / (1 + np.exp(-v))
    Wi, Wh, bi, bh = cell.w_input.data, cell.w_hidden.data, cell.b_input.data, cell.b_hidden.data
    r = sig(x @ Wi[:, :2] + bi[:2] + h @ Wh[:, :2] + bh[:2])
    z = sig(x @ Wi[:, 2:4] + bi[2:4] + h @ Wh[:, 2:4] + bh[2:4])
    n = np.tanh(x @ Wi[:, 4:] + bi[4:] + r * (h @ Wh[:, 4:] + bh[4:]))
    np.testing.assert_allclose(cell(Tensor(x), Tensor(h)).data, (1 - z) * n + z * h, atol=1e-12)


def test_backward_square():
    x = Tensor(3.0, requires_grad=True)
    (x * x).backward()
    assert x.grad == 6.0


def test_backward_sum_of_two():
    x, y = Tensor(1.5, requires_grad=True), Tensor(-2.0, requires_grad=True)
    (x + y).backward()
    assert (x.grad, y.grad) == (1.0, 1.0)


def test_backward_accumulates_over_reuse():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    ad.sum_(ad.add(ad.mul(x, x), x)).backward()
    np.testing.assert_array_equal(x.grad, [3.0, 5.0])


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        ad.mul(x, 2.0).backward()


def test_shape_error_names_op_and_shapes():
    with pytest.raises(ShapeError) as info:
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))
    assert info.value.op == "matmul"
    assert (2, 3) in info.value.shapes and (4, 5) in info.value.shapes
    with pytest.raises(ShapeError):
        ad.add(Tensor(np.ones(3)), Tensor(np.ones(4)))
    with pytest.raises(ShapeError):
        ad.conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))))


def test_gradcheck_quadratic_form():
    rng = np.random.default_rng(4)
    A = rng.normal(size=(5, 5))
    A = A @ A.T
    x = Tensor(rng.normal(size=(5, 1)), requires_grad=True)
    f = lambda v: ad.sum_(ad.mul(v, ad.matmul(A, v)))
    assert grad_check(f, x) < 1e-9


def test_gradcheck_conv_leaky_stack():
    rng = np.random.default_rng(5)
    w1, w2 = rng.normal(size=(3, 2, 3, 3)), rng.normal(size=(2, 3, 3, 3))

    def fn(x):
        h = ad.leaky_relu(ad.conv2d(x, w1, padding=1), 0.01)
        return ad.leaky_relu(ad.conv2d(h, w2, stride=2, padding=1), 0.01)

    assert check(fn, (1, 2, 6, 6), 5) < TOL


def test_gradcheck_detects_wrong_backward():
    def bad_square(x):
        return make_node(x.data ** 2, (x,), lambda g: x._accumulate(g * 3.0 * x.data))

    x = Tensor(np.array([0.7, -1.2]), requires_grad=True)
    assert grad_check(lambda v: ad.sum_(bad_square(v)), x) > 0.1


def test_gradcheck_resamples_off_kinks():
    x = Tensor(np.array([0.0004, 1.0, -2.0]), requires_grad=True)
    err = grad_check(lambda v: ad.sum_(ad.leaky_relu(v, 0.01)), x, rng=np.random.default_rng(0))
    assert err < 1e-9
    assert abs(x.data[0]) >= 1e-3


# -- Adam

def test_adam_zero_gradient_keeps_parameter():
    p = Parameter(np.array([1.0, -2.0]))
    ad.adam_step([p], [np.zeros(2)], lr=0.1)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adam_first_step_closed_form():
    g = np.array([0.3, -2.0, 1e-6])
    p = Parameter(np.zeros(3))
    ad.adam_step([p], [g], lr=0.01)
    np.testing.assert_allclose(p.data, -0.01 * np.sign(g) / (1 + 1e-8 / np.abs(g)), rtol=1e-12)


def test_adam_constant_gradient_step_size():
    p = Parameter(np.zeros(2))
    for _ in range(500):
        before = p.data.copy()
        ad.adam_step([p], [np.array([0.5, -4.0])], lr=1e-3)
    np.testing.assert_allclose(p.data - before, [-1e-3, 1e-3], rtol=1e-6)


def test_adam_moments_track_shape():
    p = Parameter(np.zeros((2, 3)))
    ad.adam_step([p], [np.ones((2, 3))], lr=0.1)
    assert p.m.shape == p.v.shape == (2, 3) and p.step == 1


# -- invariants

finite = st.floats(-30, 30, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)), elements=finite))
def test_softmax_sums_to_one_and_positive(x):
    out = ad.softmax(Tensor(x), axis=-1).data
    np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(out > 0)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_l2_normalize_unit_norm_or_passthrough(x):
    eps = 1e-6
    out = ad.l2_normalize(Tensor(x), axis=-1, epsilon=eps).data
    norms = np.linalg.norm(x, axis=-1)
    for row_in, row_out, n in zip(x, out, norms):
        if n < eps:
            np.testing.assert_array_equal(row_out, row_in)
        else:
            assert abs(np.linalg.norm(row_out) - 1.0) < 1e-9


def test_l2_normalize_degenerate_gradient_is_identity():
    x = Tensor(np.zeros((1, 3)), requires_grad=True)
    ad.sum_(ad.mul(ad.l2_normalize(x), np.array([1.0, 2.0, 3.0]))).backward()
    np.testing.assert_array_equal(x.grad, [[1.0, 2.0, 3.0]])


def test_glorot_bounds_and_zero_biases():
    rng = np.random.default_rng(0)
    lin = ad.Linear(30, 10, rng)
    assert np.abs(lin.weight.data).max() <= np.sqrt(6 / 40)
    assert np.all(lin.bias.data == 0)
    cell = ad.GRUCell(4, 5, rng)
    assert np.all(cell.b_input.data == 0) and np.all(cell.b_hidden.data == 0)


# -- checkpoints

def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    mlp = ad.MLP([3, 4, 2], rng)
    ad.save_checkpoint(tmp_path, mlp.named_parameters(), {"step": 7, "seed": 3})
    other = ad.MLP([3, 4, 2], np.random.default_rng(99))
    manifest = ad.load_checkpoint(tmp_path, other.named_parameters())
    assert manifest["step"] == 7 and manifest["seed"] == 3
    for (_, a), (_, b) in zip(mlp.named_parameters(), other.named_parameters()):
        np.testing.assert_array_equal(a.data, b.data)
    payload = (tmp_path / "params.bin").read_bytes()
    first = manifest["parameters"][0]
    value = np.frombuffer(payload, dtype="<f8", count=1, offset=first["offset"])[0]
    assert value == mlp.named_parameters()[0][1].data.flat[0]


def test_checkpoint_rejects_mismatched_model(tmp_path):
    rng = np.random.default_rng(0)
    ad.save_checkpoint(tmp_path, ad.MLP([3, 4, 2], rng).named_parameters())
    with pytest.raises(ad.CheckpointError):
        ad.load_checkpoint(tmp_path, ad.MLP([3, 5, 2], rng).named_parameters())
    with pytest.raises(ad.CheckpointError):
        ad.load_manifest(tmp_path / "nowhere")
