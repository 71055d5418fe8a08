"""Finite-difference checks of every differentiable op in 64-bit mode."""

import numpy as np
import pytest

from segviz.ndtensor import (
    Tape,
    Tensor,
    add,
    backward,
    batch_norm_nd,
    concat_channels,
    conv_nd,
    conv_transpose_nd,
    div,
    finite_difference_gradient,
    float64,
    max_relative_error,
    mean_all,
    mul,
    relu,
    sigmoid,
    slice_channels,
    softmax,
    sub,
    sum_all,
)
from segviz.nn import ModelConfig, build_model
from segviz.optim import soft_dice_loss

SEEDS = range(20)
TOLERANCE = 1e-5
# Fourth-order differences tolerate a large step.
STEP = 1e-3


@pytest.fixture(autouse=True)
def _float64():
    """Run every check in 64-bit."""
    with float64():
        yield


def leaf(rng, shape, low=-1.0, high=1.0):
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=True, dtype=np.float64)


def away_from_zero(rng, shape):
    """Values with |v| in [0.1, 1] so relu kinks are never crossed."""
    magnitude = rng.uniform(0.1, 1.0, size=shape)
    sign = rng.choice([-1.0, 1.0], size=shape)
    return Tensor(magnitude * sign, requires_grad=True, dtype=np.float64)


def assert_gradients(fn, leaves, rng):
    """Compare backward() with central differences on a random weighted sum of fn()."""
    weights = Tensor(rng.standard_normal(fn().shape), dtype=np.float64)

    def loss():
        return sum_all(mul(fn(), weights))

    with Tape() as tape:
        value = loss()
    backward(value, tape)
    for x in leaves:
        numeric = finite_difference_gradient(lambda _: loss(), x, h=STEP, richardson=True)
        error = max_relative_error(x.grad, numeric.data)
        assert error < TOLERANCE, f"relative error {error}"


class TestElementwise:
    """Arithmetic ops."""

    @pytest.mark.parametrize("seed", SEEDS)
    def test_add(self, seed):
        rng = np.random.default_rng(seed)
        a, b = leaf(rng, (2, 3)), leaf(rng, (2, 3))
        assert_gradients(lambda: add(a, b), [a, b], rng)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_sub_mul(self, seed):
        rng = np.random.default_rng(seed)
        a, b = leaf(rng, (3, 2)), leaf(rng, (3, 2))
        assert_gradients(lambda: mul(sub(a, b), a), [a, b], rng)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_div(self, seed):
        rng = np.random.default_rng(seed)
        a, b = leaf(rng, (4,)), leaf(rng, (4,), 1.0, 2.0)
        assert_gradients(lambda: div(a, b), [a, b], rng)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_scalar_sugar(self, seed):
        rng = np.random.default_rng(seed)
        x = leaf(rng, (5,))
        assert_gradients(lambda: 1.0 - (x * 3.0 + 2.0) / 4.0, [x], rng)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_mean_all(self, seed):
        rng = np.random.default_rng(seed)
        x = leaf(rng, (3, 3))
        assert_gradients(lambda: mul(mean_all(x), mean_all(x)), [x], rng)


class TestActivations:
    """Activation ops."""

    @pytest.mark.parametrize("seed", SEEDS)
    def test_relu(self, seed):
        rng = np.random.default_rng(seed)
        x = away_from_zero(rng, (2, 2, 3, 3))
        assert_gradients(lambda: relu(x), [x], rng)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_sigmoid(self, seed):
        rng = np.random.default_rng(seed)
        x = leaf(rng, (2, 1, 3, 3), -4.0, 4.0)
        assert_gradients(lambda: sigmoid(x), [x], rng)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_softmax(self, seed):
        rng = np.random.default_rng(seed)
        x = leaf(rng, (2, 3, 2, 2), -2.0, 2.0)
        assert_gradients(lambda: softmax(x, axis=1), [x], rng)


class TestChannelOps:
    """Concatenation and slicing."""

    @pytest.mark.parametrize("seed", SEEDS)
    def test_concat(self, seed):
        rng = np.random.default_rng(seed)
        a, b = leaf(rng, (1, 2, 3, 3)), leaf(rng, (1, 3, 3, 3))
        assert_gradients(lambda: concat_channels(a, b), [a, b], rng)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_slice(self, seed):
        rng = np.random.default_rng(seed)
        x = leaf(rng, (2, 4, 2, 2))
        assert_gradients(lambda: slice_channels(x, 1, 3), [x], rng)


class TestConvolutions:
    """Convolution and transposed convolution, 2-D and 3-D."""

    @pytest.mark.parametrize("seed", SEEDS)
    def test_conv_2d(self, seed):
        rng = np.random.default_rng(seed)
        stride, padding = int(rng.integers(1, 3)), int(rng.integers(0, 2))
        x, k, b = leaf(rng, (2, 2, 5, 5)), leaf(rng, (3, 2, 3, 3)), leaf(rng, (3,))
        assert_gradients(lambda: conv_nd(x, k, b, stride, padding), [x, k, b], rng)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_conv_3d(self, seed):
        rng = np.random.default_rng(seed)
        x, k = leaf(rng, (1, 2, 4, 4, 4)), leaf(rng, (2, 2, 3, 3, 3))
        assert_gradients(lambda: conv_nd(x, k, stride=2, padding=1), [x, k], rng)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_conv_transpose_2d(self, seed):
        rng = np.random.default_rng(seed)
        x, k, b = leaf(rng, (2, 3, 3, 3)), leaf(rng, (3, 2, 2, 2)), leaf(rng, (2,))
        assert_gradients(lambda: conv_transpose_nd(x, k, 2, 0, b), [x, k, b], rng)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_conv_transpose_3d(self, seed):
        rng = np.random.default_rng(seed)
        x, k = leaf(rng, (1, 2, 2, 2, 2)), leaf(rng, (2, 1, 3, 3, 3))
        assert_gradients(lambda: conv_transpose_nd(x, k, stride=2, padding=1), [x, k], rng)


class TestBatchNorm:
    """Batch norm in both modes."""

    def _params(self, rng, channels):
        gamma = leaf(rng, (channels,), 0.5, 1.5)
        beta = leaf(rng, (channels,))
        mean = Tensor(rng.uniform(-0.5, 0.5, channels), dtype=np.float64)
        var = Tensor(rng.uniform(0.5, 1.5, channels), dtype=np.float64)
        return gamma, beta, mean, var

    @pytest.mark.parametrize("seed", SEEDS)
    def test_train_mode(self, seed):
        rng = np.random.default_rng(seed)
        x = leaf(rng, (2, 3, 3, 3), -2.0, 2.0)
        gamma, beta, mean, var = self._params(rng, 3)
        assert_gradients(
            lambda: batch_norm_nd(x, gamma, beta, mean, var, mode="train"), [x, gamma, beta], rng
        )

    @pytest.mark.parametrize("seed", SEEDS)
    def test_eval_mode(self, seed):
        rng = np.random.default_rng(seed)
        x = leaf(rng, (2, 2, 2, 2, 2))
        gamma, beta, mean, var = self._params(rng, 2)
        assert_gradients(
            lambda: batch_norm_nd(x, gamma, beta, mean, var, mode="eval"), [x, gamma, beta], rng
        )


class TestComposed:
    """A conv -> batch norm -> sigmoid -> weighted sum chain."""

    @pytest.mark.parametrize("seed", range(5))
    def test_chain_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        x, k = leaf(rng, (2, 1, 4, 4)), leaf(rng, (2, 1, 3, 3))
        gamma, beta = leaf(rng, (2,), 0.5, 1.5), leaf(rng, (2,))
        mean, var = Tensor(np.zeros(2)), Tensor(np.ones(2))

        def chain():
            y = batch_norm_nd(conv_nd(x, k, padding=1), gamma, beta, mean, var)
            return sigmoid(y)

        assert_gradients(chain, [x, k, gamma, beta], rng)

    def test_network_dice_loss_matches_finite_differences(self):
        """Dice loss through a depth-3 2-D network, one tensor per layer kind."""
        rng = np.random.default_rng(0)
        config = ModelConfig(
            depth=3, channels=[2, 4, 4], num_res_units=1, tasks=["liver"], activation="sigmoid"
        )
        model = build_model(config, seed=0)
        x = leaf(rng, (2, 1, 8, 8))
        target = Tensor((rng.uniform(size=(2, 1, 8, 8)) < 0.4).astype(np.float64))
        trainable = model.trainable("liver")
        checked = [
            "encoder.1.down.conv.weight",
            "encoder.1.down.norm.weight",
            "encoder.1.down.norm.bias",
            "encoder.0.res0.conv1.weight",
            "encoder.0.res0.skip.weight",
            "decoder.0.res0.conv2.weight",
            "decoder.1.up.conv.weight",
            "head.liver.conv.weight",
            "head.liver.norm.weight",
            "head.liver.classifier.weight",
            "head.liver.classifier.bias",
        ]

        def loss():
            return soft_dice_loss(model.forward(x, "liver", "train"), target)

        with Tape() as tape:
            value = loss()
        backward(value, tape)

        for name, tensor in [("input", x)] + [(n, trainable[n]) for n in checked]:
            flat = rng.choice(tensor.size, size=min(tensor.size, 4), replace=False)
            indices = [np.unravel_index(int(i), tensor.shape) for i in sorted(flat)]
            numeric = finite_difference_gradient(
                lambda _: loss(), tensor, h=STEP, indices=indices, richardson=True
            )
            picked = tuple(np.array(indices).T)
            error = max_relative_error(tensor.grad[picked], numeric.data[picked])
            assert error < TOLERANCE, f"{name}: relative error {error}"


class TestFiniteDifference:
    """The oracle itself."""

    def test_linear_function(self, rng):
        x = Tensor(rng.standard_normal((2, 3)), dtype=np.float64)
        grad = finite_difference_gradient(sum_all, x)
        assert np.allclose(grad.data, 1.0)

    def test_square(self):
        x = Tensor([1.0, 2.0], dtype=np.float64)
        grad = finite_difference_gradient(lambda t: sum_all(mul(t, t)), x)
        assert np.allclose(grad.data, [2.0, 4.0], atol=1e-8)

    def test_restores_input(self, rng):
        values = rng.standard_normal(4)
        x = Tensor(values.copy(), dtype=np.float64)
        finite_difference_gradient(lambda t: sum_all(mul(t, t)), x)
        assert np.array_equal(x.data, values)

    def test_step_must_be_positive(self):
        with pytest.raises(ValueError):
            finite_difference_gradient(sum_all, Tensor([1.0]), h=0.0)

    def test_richardson_is_exact_on_cubics(self):
        """Central differences miss x**3 by h**2; the extrapolated estimate does not."""
        x = Tensor([1.0, 2.0], dtype=np.float64)

        def cube(t):
            return sum_all(mul(mul(t, t), t))

        plain = finite_difference_gradient(cube, x, h=1e-2)
        extrapolated = finite_difference_gradient(cube, x, h=1e-2, richardson=True)
        assert np.allclose(plain.data, [3.0 + 1e-4, 12.0 + 1e-4], atol=1e-9)
        assert np.allclose(extrapolated.data, [3.0, 12.0], atol=1e-9)

    def test_indices_limit_estimates(self):
        x = Tensor([1.0, 2.0, 3.0], dtype=np.float64)
        grad = finite_difference_gradient(lambda t: sum_all(mul(t, t)), x, indices=[(1,)])
        assert grad.data[0] == 0.0 and grad.data[2] == 0.0
        assert grad.data[1] == pytest.approx(4.0, abs=1e-8)
