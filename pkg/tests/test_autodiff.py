"""Gradient and contract tests for the autodiff engine.

Analytic gradients are checked against central finite differences at
double precision; forward semantics are checked against numpy oracles
computed independently of the op implementations.
"""

import numpy as np
import pytest

from bandstep.dsp import StftConfig, istft_array
from bandstep.errors import InvalidArgumentError
from bandstep.nn import Tensor, grad_check, no_grad
from bandstep.nn import functional as F


def rng(seed=0):
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------------

class TestElementwise:

    def test_broadcast_arithmetic_gradients(self):
        r = rng(1)
        err = grad_check(
            lambda a, b, c: F.mul(F.add(a, b), F.sub(a, c)),
            [r.standard_normal((3, 4)), r.standard_normal((4,)), r.standard_normal((3, 1))])
        assert err <= 1e-5

    def test_div_exp_trig_gradients(self):
        r = rng(2)
        err = grad_check(
            lambda a, b: F.div(F.sin(a), F.add(F.exp(F.cos(b)), 0.5)),
            [r.standard_normal((2, 5)), r.standard_normal((2, 5))])
        assert err <= 1e-5

    def test_abs_gradient_and_zero_subgradient(self):
        r = rng(3)
        x = np.sign(r.standard_normal((3, 3))) * (0.1 + np.abs(r.standard_normal((3, 3))))
        assert grad_check(F.absolute, [x]) <= 1e-5
        t = Tensor(np.zeros(3, dtype=np.float64), requires_grad=True)
        F.absolute(t).sum().backward()
        assert np.all(t.grad == 0.0)

    def test_relu_leaky_relu_values_and_gradients(self):
        assert F.leaky_relu(Tensor([1.0]), 0.1).item() == pytest.approx(1.0)
        assert F.leaky_relu(Tensor([-1.0]), 0.1).item() == pytest.approx(-0.1)
        r = rng(4)
        x = np.sign(r.standard_normal(20)) * (0.1 + np.abs(r.standard_normal(20)))
        assert grad_check(lambda a: F.leaky_relu(a, 0.1), [x]) <= 1e-8
        assert grad_check(F.relu, [x]) <= 1e-8

    def test_gelu_values(self):
        assert F.gelu(Tensor([0.0])).item() == 0.0
        assert abs(F.gelu(Tensor([10.0], )).item() - 10.0) <= 1e-6

    def test_gelu_gradient_at_half(self):
        assert grad_check(F.gelu, [np.array([0.5])]) <= 1e-6

    def test_gelu_gradient_random(self):
        assert grad_check(F.gelu, [rng(5).standard_normal((4, 4))]) <= 1e-6

    def test_wrap_principal_values_and_identity_gradient(self):
        x = Tensor(np.array([0.3, 0.3 + 2 * np.pi, -0.3 - 4 * np.pi]), requires_grad=True)
        out = F.wrap_principal(x)
        np.testing.assert_allclose(out.data, [0.3, 0.3, -0.3], atol=1e-12)
        out.sum().backward()
        np.testing.assert_array_equal(x.grad, np.ones(3))


class TestAtan2:

    def test_axis_values(self):
        assert F.atan2(Tensor([0.0]), Tensor([1.0])).item() == pytest.approx(0.0)
        assert F.atan2(Tensor([1.0]), Tensor([0.0])).item() == pytest.approx(np.pi / 2)

    def test_diagonal_value_and_analytic_gradients(self):
        y = Tensor(np.array([1.0]), requires_grad=True)
        x = Tensor(np.array([1.0]), requires_grad=True)
        out = F.atan2(y, x)
        assert out.item() == pytest.approx(np.pi / 4)
        out.sum().backward()
        assert y.grad[0] == pytest.approx(0.5)
        assert x.grad[0] == pytest.approx(-0.5)

    def test_gradient_matches_finite_differences(self):
        r = rng(6)
        y = r.standard_normal((3, 4)) + np.sign(r.standard_normal((3, 4))) * 0.5
        x = r.standard_normal((3, 4)) + np.sign(r.standard_normal((3, 4))) * 0.5
        assert grad_check(F.atan2, [y, x]) <= 1e-5

    def test_origin_convention_zero_output_zero_gradient(self):
        y = Tensor(np.zeros(2, dtype=np.float64), requires_grad=True)
        x = Tensor(np.zeros(2, dtype=np.float64), requires_grad=True)
        out = F.atan2(y, x)
        assert np.all(out.data == 0.0)
        out.sum().backward()
        assert np.all(y.grad == 0.0) and np.all(x.grad == 0.0)

    def test_range_is_principal(self):
        r = rng(7)
        out = F.atan2(Tensor(r.standard_normal(200)), Tensor(r.standard_normal(200)))
        assert np.all(out.data > -np.pi) and np.all(out.data <= np.pi)


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------

class TestLinearOps:

    def test_linear_ops_are_exact(self):
        r = rng(8)
        cases = [
            (lambda a, b: F.add(a, b), [r.standard_normal((3, 4)), r.standard_normal((3, 4))]),
            (lambda a: F.sum(a, axis=1), [r.standard_normal((3, 4))]),
            (lambda a: F.mean(a, axis=0, keepdims=True), [r.standard_normal((3, 4))]),
            (lambda a: F.reshape(a, (4, 3)), [r.standard_normal((3, 4))]),
            (lambda a: F.transpose(a, (1, 0)), [r.standard_normal((3, 4))]),
            (lambda a: F.narrow(a, 1, 1, 2), [r.standard_normal((3, 4))]),
            (lambda a, b: F.concat([a, b], axis=0),
             [r.standard_normal((2, 3)), r.standard_normal((4, 3))]),
        ]
        # a larger step is exact for linear maps and suppresses rounding noise
        for fn, inputs in cases:
            assert grad_check(fn, inputs, eps=1e-3) <= 1e-10

    def test_reduction_values_match_numpy(self):
        r = rng(9)
        x = r.standard_normal((2, 3, 4))
        np.testing.assert_allclose(F.sum(Tensor(x), axis=(0, 2)).data, x.sum(axis=(0, 2)))
        np.testing.assert_allclose(
            F.mean(Tensor(x), axis=1, keepdims=True).data, x.mean(axis=1, keepdims=True))

    def test_narrow_bounds_rejected(self):
        with pytest.raises(InvalidArgumentError):
            F.narrow(Tensor(np.zeros((2, 3))), 1, 2, 2)


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------

class TestConv1d:

    def test_kernel1_identity(self):
        x = rng(10).standard_normal((2, 3, 5))
        w = np.eye(3)[:, :, None]
        out = F.conv1d(Tensor(x), Tensor(w), Tensor(np.zeros(3)))
        np.testing.assert_allclose(out.data, x, atol=1e-12)

    def test_depthwise_centered_delta_identity(self):
        x = rng(11).standard_normal((2, 4, 6))
        w = np.zeros((4, 1, 3))
        w[:, 0, 1] = 1.0
        out = F.conv1d(Tensor(x), Tensor(w), None, padding=1, groups=4)
        np.testing.assert_allclose(out.data, x, atol=1e-12)

    def test_kernel1_equals_per_position_matmul(self):
        r = rng(12)
        x = r.standard_normal((2, 3, 4))
        w = r.standard_normal((5, 3, 1))
        b = r.standard_normal(5)
        out = F.conv1d(Tensor(x), Tensor(w), Tensor(b))
        oracle = np.einsum("oc,bct->bot", w[:, :, 0], x) + b[None, :, None]
        np.testing.assert_allclose(out.data, oracle, atol=1e-12)

    def test_output_length_formula(self):
        x = Tensor(np.zeros((1, 2, 11)))
        w = Tensor(np.zeros((3, 2, 3)))
        out = F.conv1d(x, w, None, stride=2, padding=3, dilation=2)
        t = (11 + 2 * 3 - 2 * (3 - 1) - 1) // 2 + 1
        assert out.shape == (1, 3, t)

    def test_gradients_strided_dilated(self):
        r = rng(13)
        err = grad_check(
            lambda x, w, b: F.conv1d(x, w, b, stride=2, padding=3, dilation=2),
            [r.standard_normal((1, 2, 5)), r.standard_normal((3, 2, 3)),
             r.standard_normal(3)])
        assert err <= 1e-5

    def test_gradients_depthwise_and_grouped(self):
        r = rng(14)
        err = grad_check(
            lambda x, w: F.conv1d(x, w, None, padding=2, groups=6),
            [r.standard_normal((2, 6, 7)), r.standard_normal((6, 1, 5))])
        assert err <= 1e-5
        err = grad_check(
            lambda x, w, b: F.conv1d(x, w, b, stride=2, padding=1, groups=2),
            [r.standard_normal((2, 4, 8)), r.standard_normal((6, 2, 3)),
             r.standard_normal(6)])
        assert err <= 1e-5

    def test_geometry_errors(self):
        x = Tensor(np.zeros((1, 4, 8)))
        with pytest.raises(InvalidArgumentError):
            F.conv1d(x, Tensor(np.zeros((6, 4, 3))), None, groups=3)
        with pytest.raises(InvalidArgumentError):
            F.conv1d(x, Tensor(np.zeros((2, 2, 3))), None)  # 2 chans/group vs 4 in
        with pytest.raises(InvalidArgumentError):
            F.conv1d(x, Tensor(np.zeros((2, 4, 11))), None)  # kernel exceeds input


class TestConv2d:

    def test_one_by_one_identity(self):
        x = rng(15).standard_normal((2, 3, 4, 5))
        w = np.eye(3)[:, :, None, None]
        out = F.conv2d(Tensor(x), Tensor(w), None)
        np.testing.assert_allclose(out.data, x, atol=1e-12)

    def test_depthwise_centered_delta_identity(self):
        x = rng(16).standard_normal((1, 2, 4, 4))
        w = np.zeros((2, 1, 3, 3))
        w[:, 0, 1, 1] = 1.0
        out = F.conv2d(Tensor(x), Tensor(w), None, padding=(1, 1), groups=2)
        np.testing.assert_allclose(out.data, x, atol=1e-12)

    def test_gradients_random_case(self):
        r = rng(17)
        err = grad_check(
            lambda x, w, b: F.conv2d(x, w, b),
            [r.standard_normal((1, 1, 4, 4)), r.standard_normal((2, 1, 3, 3)),
             r.standard_normal(2)])
        assert err <= 1e-5

    def test_gradients_strided_padded(self):
        r = rng(18)
        err = grad_check(
            lambda x, w, b: F.conv2d(x, w, b, stride=(1, 2), padding=(1, 4)),
            [r.standard_normal((2, 2, 4, 7)), r.standard_normal((3, 2, 3, 9)),
             r.standard_normal(3)])
        assert err <= 1e-5

    def test_general_grouped_rejected(self):
        with pytest.raises(InvalidArgumentError):
            F.conv2d(Tensor(np.zeros((1, 4, 4, 4))),
                     Tensor(np.zeros((6, 2, 3, 3))), None, groups=2)


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

class TestLayerNorm:

    def test_constant_input_collapses_to_zero(self):
        x = Tensor(np.full((2, 5, 3), 7.0))
        out = F.layer_norm(x, Tensor(np.ones(5)), Tensor(np.zeros(5)), axis=1)
        np.testing.assert_allclose(out.data, 0.0, atol=1e-6)

    def test_two_point_fixed_point(self):
        out = F.layer_norm(Tensor(np.array([[1.0, -1.0]])),
                           Tensor(np.ones(2)), Tensor(np.zeros(2)),
                           axis=1, eps=1e-12)
        np.testing.assert_allclose(out.data, [[1.0, -1.0]], atol=1e-5)

    def test_output_statistics(self):
        r = rng(19)
        x = 5.0 * r.standard_normal((4, 16, 10))
        out = F.layer_norm(Tensor(x), Tensor(np.ones(16)), Tensor(np.zeros(16)), axis=1)
        mu = out.data.mean(axis=1)
        var = out.data.var(axis=1)
        assert np.abs(mu).max() <= 1e-6
        assert np.abs(var - 1.0).max() <= 1e-4

    def test_gradients_both_layouts(self):
        r = rng(20)
        for axis in (1, -1):
            err = grad_check(
                lambda x, g, b, axis=axis: F.layer_norm(x, g, b, axis=axis),
                [r.standard_normal((2, 5, 5)), r.standard_normal(5),
                 r.standard_normal(5)])
            assert err <= 1e-5

    def test_affine_shape_mismatch_rejected(self):
        with pytest.raises(InvalidArgumentError):
            F.layer_norm(Tensor(np.zeros((2, 5, 3))), Tensor(np.ones(3)),
                         Tensor(np.zeros(3)), axis=1)


class TestGrn:

    def test_zero_affine_is_identity(self):
        x = rng(21).standard_normal((2, 6, 4))
        out = F.grn(Tensor(x), Tensor(np.zeros(4)), Tensor(np.zeros(4)))
        np.testing.assert_allclose(out.data, x, atol=1e-12)

    def test_identical_channels_reduce_to_affine_residual(self):
        r = rng(22)
        col = r.standard_normal((2, 8, 1)) + 2.0
        x = np.repeat(col, 5, axis=2)
        gamma = r.standard_normal(5)
        beta = r.standard_normal(5)
        out = F.grn(Tensor(x), Tensor(gamma), Tensor(beta))
        oracle = gamma[None, None, :] * x + beta[None, None, :] + x
        np.testing.assert_allclose(out.data, oracle, atol=1e-5)

    def test_gradients_both_layouts(self):
        r = rng(23)
        for ch_axis in (-1, 1):
            err = grad_check(
                lambda x, g, b, a=ch_axis: F.grn(x, g, b, channel_axis=a),
                [r.standard_normal((2, 4, 6)), r.standard_normal(4 if ch_axis == 1 else 6),
                 r.standard_normal(4 if ch_axis == 1 else 6)])
            assert err <= 1e-5

    def test_zero_row_safe(self):
        x = Tensor(np.zeros((1, 3, 4), dtype=np.float64), requires_grad=True)
        out = F.grn(x, Tensor(np.ones(4, dtype=np.float64), requires_grad=True),
                    Tensor(np.zeros(4, dtype=np.float64)))
        out.sum().backward()
        assert np.all(np.isfinite(x.grad))


# ---------------------------------------------------------------------------
# differentiable synthesis
# ---------------------------------------------------------------------------

class TestIstftSynth:

    CFG = StftConfig(n_fft=16, win_len=12, hop=4)

    def test_forward_matches_reference_inverse(self):
        r = rng(24)
        re = r.standard_normal((2, 9, 6))
        im = r.standard_normal((2, 9, 6))
        out = F.istft_synth(Tensor(re), Tensor(im), self.CFG, n_samples=20)
        for b in range(2):
            frames = (re[b] + 1j * im[b]).T
            oracle = istft_array(frames, self.CFG, n_samples=20)
            np.testing.assert_allclose(out.data[b], oracle, atol=1e-10)

    def test_gradients(self):
        r = rng(25)
        err = grad_check(
            lambda re, im: F.istft_synth(re, im, self.CFG, n_samples=20),
            [r.standard_normal((1, 9, 6)), r.standard_normal((1, 9, 6))])
        assert err <= 1e-5

    def test_rejects_wrong_bin_count(self):
        with pytest.raises(InvalidArgumentError):
            F.istft_synth(Tensor(np.zeros((1, 8, 4))), Tensor(np.zeros((1, 8, 4))),
                          self.CFG)

    def test_rejects_overlong_output(self):
        with pytest.raises(InvalidArgumentError):
            F.istft_synth(Tensor(np.zeros((1, 9, 4))), Tensor(np.zeros((1, 9, 4))),
                          self.CFG, n_samples=1000)


# ---------------------------------------------------------------------------
# autograd mechanics
# ---------------------------------------------------------------------------

class TestAutogradMechanics:

    def test_backward_twice_accumulates(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        (x * 3.0).sum().backward()
        (x * 5.0).sum().backward()
        np.testing.assert_allclose(x.grad, [8.0, 8.0])

    def test_shared_subexpression_accumulates(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        (x * x).sum().backward()
        assert x.grad[0] == pytest.approx(4.0)

    def test_no_grad_builds_no_graph(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            y = (x * 2.0).sum()
        assert not y.requires_grad and y.is_leaf

    def test_detach_blocks_flow(self):
        x = Tensor(np.ones(3), requires_grad=True)
        y = (x * 2.0).detach()
        z = (y * 3.0).sum()
        assert not z.requires_grad

    def test_nonscalar_backward_needs_seed(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(InvalidArgumentError):
            (x * 2.0).backward()

    def test_forward_chain_stays_finite(self):
        r = rng(26)
        x = Tensor(r.standard_normal((2, 4, 8)).astype(np.float32), requires_grad=True)
        w = Tensor(r.standard_normal((4, 1, 3)).astype(np.float32) * 0.1, requires_grad=True)
        h = F.conv1d(x, w, None, padding=1, groups=4)
        h = F.gelu(F.layer_norm(h, Tensor(np.ones(4, np.float32), requires_grad=True),
                                Tensor(np.zeros(4, np.float32), requires_grad=True), axis=1))
        h = F.grn(h, Tensor(np.zeros(4, np.float32), requires_grad=True),
                  Tensor(np.zeros(4, np.float32), requires_grad=True), channel_axis=1)
        loss = h.mean()
        assert np.isfinite(loss.item())
        loss.backward()
        assert np.all(np.isfinite(x.grad)) and np.all(np.isfinite(w.grad))
