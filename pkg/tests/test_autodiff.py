"""Engine tests: forward semantics, graph rules, gradients vs finite differences."""

import numpy as np
import pytest

from ncam import autodiff as ad
from ncam.autodiff import Tensor

from helpers import check_gradients, scalar_probe

N_SEEDS = 20
TOL_F64 = 1e-5
TOL_F32 = 1e-3


def _rand(rng, *shape, dtype=np.float64):
    return rng.standard_normal(shape).astype(dtype)


# -- forward semantics ---------------------------------------------------------


class TestForward:
    def test_conv2d_zero_input_gives_bias(self):
        rng = np.random.default_rng(0)
        x = Tensor(np.zeros((3, 5, 5)))
        k = Tensor(_rand(rng, 4, 3, 3, 3))
        b = Tensor(_rand(rng, 4))
        y = ad.conv2d(x, k, b)
        assert y.shape == (4, 5, 5)
        assert np.allclose(y.data, np.broadcast_to(b.data[:, None, None], (4, 5, 5)))

    def test_conv2d_identity_1x1(self):
        rng = np.random.default_rng(1)
        x = Tensor(_rand(rng, 3, 4, 6))
        k = Tensor(np.eye(3).reshape(3, 3, 1, 1))
        y = ad.conv2d(x, k)
        assert np.array_equal(y.data, x.data)

    def test_conv2d_matches_brute_force(self):
        # Independent oracle: direct loop over the cross-correlation definition.
        rng = np.random.default_rng(2)
        x = _rand(rng, 2, 5, 4)
        k = _rand(rng, 3, 2, 3, 3)
        b = _rand(rng, 3)
        y = ad.conv2d(Tensor(x), Tensor(k), Tensor(b)).data
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
        want = np.zeros((3, 5, 4))
        for m in range(3):
            for i in range(5):
                for j in range(4):
                    want[m, i, j] = (k[m] * xp[:, i:i + 3, j:j + 3]).sum() + b[m]
        assert np.allclose(y, want, atol=1e-12)

    def test_conv2d_shape_mismatch_names_both_shapes(self):
        x = Tensor(np.zeros((3, 4, 4)))
        k = Tensor(np.zeros((2, 5, 1, 1)))
        with pytest.raises(ValueError, match=r"(?s)\(3, 4, 4\).*\(2, 5, 1, 1\)"):
            ad.conv2d(x, k)

    def test_conv2d_rejects_bad_kernel_size(self):
        with pytest.raises(ValueError, match="kernel size"):
            ad.conv2d(Tensor(np.zeros((1, 5, 5))), Tensor(np.zeros((1, 1, 5, 5))))

    def test_dense_identity_and_zero(self):
        rng = np.random.default_rng(3)
        x = _rand(rng, 7)
        w_eye = Tensor(np.eye(7))
        b0 = Tensor(np.zeros(7))
        assert np.allclose(ad.dense(Tensor(x), w_eye, b0).data, x)
        b = _rand(rng, 4)
        y = ad.dense(Tensor(np.zeros(5)), Tensor(_rand(rng, 4, 5)), Tensor(b))
        assert np.allclose(y.data, b)

    def test_dense_rejects_mismatch(self):
        with pytest.raises(ValueError, match="dense"):
            ad.dense(Tensor(np.zeros(3)), Tensor(np.zeros((2, 4))))

    def test_instance_norm_constant_channel_is_zero(self):
        x = Tensor(np.full((2, 3, 3), 7.0))
        y = ad.instance_norm(x)
        assert np.allclose(y.data, 0.0)

    def test_instance_norm_two_pixel_channel(self):
        # Closed form: mean 0, variance 1 -> output [1, -1] up to epsilon.
        y = ad.instance_norm(Tensor(np.array([[[1.0, -1.0]]])), epsilon=1e-5).data
        assert np.allclose(y, [[[1.0, -1.0]]], atol=1e-5)

    def test_instance_norm_statistics(self):
        rng = np.random.default_rng(4)
        x = Tensor(_rand(rng, 6, 9, 8) * 3.0)
        y = ad.instance_norm(x).data
        assert np.all(np.abs(y.mean(axis=(-2, -1))) <= 1e-6)
        assert np.all(np.abs(y.var(axis=(-2, -1)) - 1.0) <= 1e-4)

    def test_softmax_uniform_on_zeros(self):
        y = ad.softmax_lastdim(Tensor(np.zeros((3, 4))))
        assert np.allclose(y.data, 0.25)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(5)
        y = ad.softmax_lastdim(Tensor(_rand(rng, 5, 16, 4) * 4)).data
        assert np.allclose(y.sum(axis=-1), 1.0, atol=1e-6)

    def test_mse_identical_is_zero(self):
        rng = np.random.default_rng(6)
        x = Tensor(_rand(rng, 4, 4))
        assert ad.mse(x, x).item() == 0.0

    def test_mean_over_axes_ones(self):
        y = ad.mean_over_axes(Tensor(np.ones((3, 5, 7))), (1, 2))
        assert y.shape == (3,)
        assert np.allclose(y.data, 1.0)

    def test_mean_over_axes_rejects_bad_axis(self):
        with pytest.raises(ValueError, match="out of range"):
            ad.mean_over_axes(Tensor(np.zeros((2, 2))), (5,))

    def test_concat_and_slice_roundtrip(self):
        rng = np.random.default_rng(7)
        a, b = _rand(rng, 2, 3), _rand(rng, 4, 3)
        cat = ad.concat([Tensor(a), Tensor(b)], axis=0)
        back = ad.slice_axis(cat, 0, 2, 6)
        assert np.array_equal(back.data, b)

    def test_sobel_perception_matches_generic_depthwise(self):
        rng = np.random.default_rng(12)
        x = _rand(rng, 2, 3, 7, 6)
        fused = ad.sobel_perception(Tensor(x)).data
        ref = ad.concat([Tensor(x),
                         ad.depthwise_conv3x3(Tensor(x), ad.SOBEL_X_KERNEL),
                         ad.depthwise_conv3x3(Tensor(x), ad.SOBEL_Y_KERNEL)],
                        axis=-3).data
        assert np.allclose(fused, ref, atol=1e-12)

    def test_depthwise_conv3x3_matches_loop(self):
        rng = np.random.default_rng(8)
        x = _rand(rng, 2, 6, 5)
        kern = _rand(rng, 3, 3)
        y = ad.depthwise_conv3x3(Tensor(x), kern).data
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
        want = np.zeros_like(x)
        for c in range(2):
            for i in range(6):
                for j in range(5):
                    want[c, i, j] = (kern * xp[c, i:i + 3, j:j + 3]).sum()
        assert np.allclose(y, want, atol=1e-12)


# -- graph rules ----------------------------------------------------------------


class TestGraph:
    def test_backward_requires_scalar(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(RuntimeError, match="scalar"):
            (x * 2.0).backward()

    def test_backward_twice_is_an_error(self):
        x = Tensor(np.ones(3), requires_grad=True)
        loss = ad.mse(x * 2.0, Tensor(np.zeros(3)))
        loss.backward()
        with pytest.raises(RuntimeError, match="already"):
            loss.backward()

    def test_backward_through_consumed_subgraph_is_an_error(self):
        x = Tensor(np.ones(3), requires_grad=True)
        y = x * 2.0
        ad.mse(y, Tensor(np.zeros(3))).backward()
        loss2 = ad.mse(y, Tensor(np.ones(3)))
        with pytest.raises(RuntimeError, match="consumed"):
            loss2.backward()

    def test_every_reachable_param_gets_grad(self):
        rng = np.random.default_rng(9)
        xs = [Tensor(_rand(rng, 3, 3), requires_grad=True) for _ in range(3)]
        loss = ad.mse(ad.add(ad.mul(xs[0], xs[1]), xs[2]), Tensor(np.zeros((3, 3))))
        loss.backward()
        assert all(x.grad is not None and x.grad.shape == (3, 3) for x in xs)

    def test_grad_accumulates_across_graphs(self):
        x = Tensor(np.ones(2), requires_grad=True)
        ad.mse(x, Tensor(np.zeros(2))).backward()
        g1 = x.grad.copy()
        ad.mse(x, Tensor(np.zeros(2))).backward()
        assert np.allclose(x.grad, 2 * g1)

    def test_no_grad_matches_grad_forward(self):
        rng = np.random.default_rng(10)
        x = _rand(rng, 4, 6, 6)
        k = _rand(rng, 4, 4, 3, 3)

        def run():
            t = Tensor(x.copy(), requires_grad=True)
            return ad.instance_norm(ad.relu(ad.conv2d(t, Tensor(k.copy())))).data

        with_grad = run()
        with ad.no_grad():
            without = run()
        assert np.array_equal(with_grad, without)

    def test_no_grad_builds_no_graph(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with ad.no_grad():
            y = x * 3.0
        assert y._prev == () and not y.requires_grad

    def test_forward_determinism(self):
        rng1 = np.random.default_rng(11)
        rng2 = np.random.default_rng(11)
        a = ad.softmax_lastdim(Tensor(rng1.standard_normal((5, 4)))).data
        b = ad.softmax_lastdim(Tensor(rng2.standard_normal((5, 4)))).data
        assert np.array_equal(a, b)


# -- gradients vs central finite differences ------------------------------------

OPS = {}


def op_case(name):
    def deco(fn):
        OPS[name] = fn
        return fn
    return deco


@op_case("add_broadcast")
def _add(rng, dt):
    return [_rand(rng, 3, 4).astype(dt), _rand(rng, 4).astype(dt)], \
        lambda ts, p: scalar_probe(ad.add(ts[0], ts[1]), p), (3, 4)


@op_case("mul_broadcast")
def _mul(rng, dt):
    return [_rand(rng, 2, 3, 4).astype(dt), _rand(rng, 1, 3, 1).astype(dt)], \
        lambda ts, p: scalar_probe(ad.mul(ts[0], ts[1]), p), (2, 3, 4)


@op_case("scale")
def _scale(rng, dt):
    return [_rand(rng, 5, 3).astype(dt)], \
        lambda ts, p: scalar_probe(ad.scale(ts[0], -1.7), p), (5, 3)


@op_case("relu")
def _relu(rng, dt):
    # keep inputs away from the kink
    a = _rand(rng, 6, 6)
    a = np.where(np.abs(a) < 0.05, a + 0.2 * np.sign(a) + 0.01, a).astype(dt)
    return [a], lambda ts, p: scalar_probe(ad.relu(ts[0]), p), (6, 6)


@op_case("dense")
def _dense(rng, dt):
    return [_rand(rng, 2, 5).astype(dt), _rand(rng, 3, 5).astype(dt),
            _rand(rng, 3).astype(dt)], \
        lambda ts, p: scalar_probe(ad.dense(ts[0], ts[1], ts[2]), p), (2, 3)


@op_case("conv2d_3x3")
def _conv3(rng, dt):
    return [_rand(rng, 2, 4, 5).astype(dt), _rand(rng, 3, 2, 3, 3).astype(dt),
            _rand(rng, 3).astype(dt)], \
        lambda ts, p: scalar_probe(ad.conv2d(ts[0], ts[1], ts[2]), p), (3, 4, 5)


@op_case("conv2d_1x1_batched")
def _conv1(rng, dt):
    return [_rand(rng, 2, 3, 4, 4).astype(dt), _rand(rng, 5, 3, 1, 1).astype(dt),
            _rand(rng, 5).astype(dt)], \
        lambda ts, p: scalar_probe(ad.conv2d(ts[0], ts[1], ts[2]), p), (2, 5, 4, 4)


@op_case("bmm")
def _bmm(rng, dt):
    return [_rand(rng, 2, 3, 4).astype(dt), _rand(rng, 2, 4, 5).astype(dt)], \
        lambda ts, p: scalar_probe(ad.bmm(ts[0], ts[1]), p), (2, 3, 5)


@op_case("depthwise3x3")
def _dw(rng, dt):
    kern = np.array([[-1.0, 0, 1], [-2, 0, 2], [-1, 0, 1]])
    return [_rand(rng, 3, 5, 5).astype(dt)], \
        lambda ts, p: scalar_probe(ad.depthwise_conv3x3(ts[0], kern), p), (3, 5, 5)


@op_case("sobel_perception")
def _sobel(rng, dt):
    return [_rand(rng, 2, 5, 4).astype(dt)], \
        lambda ts, p: scalar_probe(ad.sobel_perception(ts[0]), p), (6, 5, 4)


@op_case("tanh")
def _tanh(rng, dt):
    return [(_rand(rng, 4, 5) * 2).astype(dt)], \
        lambda ts, p: scalar_probe(ad.tanh(ts[0]), p), (4, 5)


@op_case("instance_norm")
def _inorm(rng, dt):
    return [(_rand(rng, 3, 4, 5) * 2 + 1).astype(dt)], \
        lambda ts, p: scalar_probe(ad.instance_norm(ts[0]), p), (3, 4, 5)


@op_case("softmax_lastdim")
def _smax(rng, dt):
    return [_rand(rng, 4, 6).astype(dt)], \
        lambda ts, p: scalar_probe(ad.softmax_lastdim(ts[0]), p), (4, 6)


@op_case("mse")
def _mse(rng, dt):
    return [_rand(rng, 3, 4).astype(dt), _rand(rng, 3, 4).astype(dt)], \
        lambda ts, p: ad.mse(ts[0], ts[1]), None


@op_case("mean_over_axes")
def _mean(rng, dt):
    return [_rand(rng, 3, 4, 5).astype(dt)], \
        lambda ts, p: scalar_probe(ad.mean_over_axes(ts[0], (0, 2)), p), (4,)


@op_case("concat")
def _concat(rng, dt):
    return [_rand(rng, 2, 3).astype(dt), _rand(rng, 4, 3).astype(dt)], \
        lambda ts, p: scalar_probe(ad.concat(ts, axis=0), p), (6, 3)


@op_case("reshape_slice")
def _reshape(rng, dt):
    return [_rand(rng, 4, 6).astype(dt)], \
        lambda ts, p: scalar_probe(ad.slice_axis(ad.reshape(ts[0], (2, 12)), 1, 3, 9), p), \
        (2, 6)


class TestGradients:
    @pytest.mark.parametrize("name", sorted(OPS))
    def test_float64(self, name):
        for seed in range(N_SEEDS):
            rng = np.random.default_rng(1000 + seed)
            arrays, make, probe_shape = OPS[name](rng, np.float64)
            probe = rng.standard_normal(probe_shape) if probe_shape else None

            def build(ts):
                return make(ts, probe)

            check_gradients(build, arrays, h=1e-4, tol=TOL_F64)

    @pytest.mark.parametrize("name", sorted(OPS))
    def test_float32(self, name):
        for seed in range(N_SEEDS):
            rng = np.random.default_rng(2000 + seed)
            arrays, make, probe_shape = OPS[name](rng, np.float32)
            probe = (rng.standard_normal(probe_shape).astype(np.float32)
                     if probe_shape else None)

            def build(ts):
                return make(ts, probe)

            check_gradients(build, arrays, h=1e-2, tol=TOL_F32)
