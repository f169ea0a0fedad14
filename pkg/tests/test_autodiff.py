import numpy as np
import pytest

from latentwave import autodiff as ad
from latentwave.errors import ContractError, NumericError


def leaf(arr, **kw):
    return ad.tensor(np.asarray(arr, dtype=np.float64), requires_grad=True, **kw)


class TestForward:
    def test_matmul_identity(self):
        x = np.random.default_rng(0).standard_normal((3, 5))
        out = ad.matmul(ad.tensor(np.eye(3)), ad.tensor(x))
        np.testing.assert_array_equal(out.data, x)

    def test_conv2d_identity_kernel(self):
        x = np.random.default_rng(1).standard_normal((2, 1, 4, 4))
        w = np.ones((1, 1, 1, 1))
        out = ad.conv2d(ad.tensor(x), ad.tensor(w), stride=1, pad=0)
        np.testing.assert_array_equal(out.data, x)

    def test_channel_norm_hand_values(self):
        out = ad.channel_norm(ad.tensor([1.0, 3.0]))
        np.testing.assert_allclose(out.data, [-1.0, 1.0], atol=2e-6)

    def test_channel_norm_needs_two_channels(self):
        with pytest.raises(ContractError):
            ad.channel_norm(ad.tensor([1.0]))

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ContractError) as ei:
            ad.add(ad.tensor(np.zeros((2, 3))), ad.tensor(np.zeros((4, 5))))
        msg = str(ei.value)
        assert "(2, 3)" in msg and "(4, 5)" in msg

    def test_non_finite_input_rejected(self):
        with pytest.raises(NumericError):
            ad.tensor([np.inf, 1.0])

    def test_non_finite_result_rejected(self):
        big = ad.tensor(np.full((4,), 1e308))
        with np.errstate(over="ignore"), pytest.raises(NumericError):
            ad.mul(big, big)

    def test_suffix_broadcast_add(self):
        x = np.arange(24.0).reshape(2, 3, 4)
        b = np.arange(4.0)
        out = ad.add(ad.tensor(x), ad.tensor(b))
        np.testing.assert_array_equal(out.data, x + b)

    def test_maxout_abs_construction(self):
        x = leaf([-2.0, 0.5, 3.0])
        out = ad.maxout(x, ad.scale(x, -1.0))
        np.testing.assert_array_equal(out.data, [2.0, 0.5, 3.0])

    def test_nearest_upsample2x(self):
        x = np.arange(4.0).reshape(1, 1, 2, 2)
        out = ad.nearest_upsample2x(ad.tensor(x))
        expect = np.array([[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 3, 3], [2, 2, 3, 3]], dtype=float)
        np.testing.assert_array_equal(out.data[0, 0], expect)


class TestBackward:
    def test_linear_map_seed(self):
        x = leaf([2.0])
        with ad.Graph() as g:
            y = ad.scale(x, 3.0)
        g.backward(y, 1.0)
        np.testing.assert_allclose(x.grad, [3.0])

    def test_sum_of_squares(self):
        x = leaf([1.0, 2.0])
        with ad.Graph() as g:
            y = ad.tsum(ad.mul(x, x))
        g.backward(y)
        np.testing.assert_allclose(x.grad, [2.0, 4.0])

    def test_empty_graph_backward_is_noop(self):
        g = ad.Graph()
        out = ad.tensor([1.0, 2.0])
        g.backward(out, np.zeros(2))  # nothing recorded, nothing raised

    def test_repeated_backward_errors(self):
        x = leaf([1.0])
        with ad.Graph() as g:
            y = ad.scale(x, 2.0)
        g.backward(y, 1.0)
        with pytest.raises(ContractError):
            g.backward(y, 1.0)

    def test_seed_shape_checked(self):
        x = leaf(np.zeros((2, 2)))
        with ad.Graph() as g:
            y = ad.scale(x, 1.0)
        with pytest.raises(ContractError):
            g.backward(y, np.zeros(3))

    def test_linearity_of_backward(self):
        rng = np.random.default_rng(7)
        xv = rng.standard_normal((4, 4))
        s1 = rng.standard_normal((4, 4))
        s2 = rng.standard_normal((4, 4))
        alpha, beta = 0.7, -1.3

        def run(seed):
            x = leaf(xv)
            with ad.Graph() as g:
                y = ad.channel_norm(ad.matmul(x, x))
            g.backward(y, seed)
            return x.grad

        combined = run(alpha * s1 + beta * s2)
        parts = alpha * run(s1) + beta * run(s2)
        np.testing.assert_allclose(combined, parts, rtol=1e-12, atol=1e-12)

    def test_determinism_bit_identical(self):
        def run():
            rng = np.random.default_rng(3)
            x = leaf(rng.standard_normal((8, 8)))
            w = leaf(rng.standard_normal((8, 8)))
            with ad.Graph() as g:
                y = ad.mean(ad.gelu(ad.matmul(x, w)))
            g.backward(y)
            return y.data.copy(), x.grad.copy(), w.grad.copy()

        a, b = run(), run()
        for left, right in zip(a, b):
            assert np.array_equal(left, right)


PRIMITIVE_CASES = [
    ("matmul", lambda x, w: ad.matmul(x, w), [(2, 3), (3, 2)], None, 1e-6),
    ("matmul-batched", lambda x, w: ad.matmul(x, w), [(4, 2, 3), (3, 5)], None, 1e-6),
    ("conv2d", lambda x, w: ad.conv2d(x, w, stride=1, pad=1), [(2, 3, 5, 5), (4, 3, 3, 3)], None, 1e-5),
    ("conv2d-stride2", lambda x, w: ad.conv2d(x, w, stride=2, pad=1), [(2, 2, 6, 6), (3, 2, 3, 3)], None, 1e-5),
    ("add", ad.add, [(3, 4), (3, 4)], None, 1e-6),
    ("add-suffix", ad.add, [(2, 3, 4), (4,)], None, 1e-6),
    ("mul", ad.mul, [(3, 4), (3, 4)], None, 1e-6),
    ("scale", lambda x: ad.scale(x, -1.7), [(5,)], None, 1e-6),
    ("reshape", lambda x: ad.reshape(x, (6, 2)), [(3, 4)], None, 1e-6),
    ("transpose", lambda x: ad.transpose(x, (2, 0, 1)), [(2, 3, 4)], None, 1e-6),
    ("channel_norm", ad.channel_norm, [(3, 8)], None, 1e-5),
    ("softmax", ad.softmax, [(3, 6)], None, 1e-5),
    ("relu", ad.relu, [(4, 4)], "relu", 1e-5),
    ("gelu", ad.gelu, [(4, 4)], None, 1e-5),
    ("maxout", ad.maxout, [(3, 4), (3, 4), (3, 4)], "maxout", 1e-5),
    ("nearest_upsample2x", ad.nearest_upsample2x, [(2, 2, 3, 3)], None, 1e-6),
    ("mean", ad.mean, [(3, 5)], None, 1e-6),
    ("sum", ad.tsum, [(3, 5)], None, 1e-6),
]


@pytest.mark.parametrize("name,fn,shapes,kind,bound", PRIMITIVE_CASES,
                         ids=[c[0] for c in PRIMITIVE_CASES])
def test_grad_check_primitives(name, fn, shapes, kind, bound):
    worst = max(ad.grad_check(fn, shapes, eps=1e-5, seed=s, kind=kind) for s in range(3))
    assert worst < bound, f"{name}: max relative error {worst}"


def test_grad_check_eps_contract():
    with pytest.raises(ContractError):
        ad.grad_check(ad.relu, [(2,)], eps=1e-2)


def test_forward_primitive_dispatch():
    out = ad.forward_primitive("relu", ad.tensor([-1.0, 2.0]))
    np.testing.assert_array_equal(out.data, [0.0, 2.0])
    with pytest.raises(ContractError):
        ad.forward_primitive("nope", ad.tensor([0.0]))
