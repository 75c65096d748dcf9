"""Tests for tensors, the gradient tape and primitive ops."""

import math

import numpy as np
import pytest

from pmgan.core.errors import ConfigurationError, ContractError, DimensionError
from pmgan.engine import ops
from pmgan.engine.tensor import Tape, Tensor, backward


class TestTensor:
    """Tensor value semantics."""

    def test_values_are_immutable_copies(self):
        """Construction copies the input and freezes the copy."""
        source = np.ones((2, 2))
        t = Tensor(source)
        source[0, 0] = 5.0
        assert t.data[0, 0] == 1.0
        with pytest.raises(ValueError):
            t.data[0, 0] = 3.0

    def test_item_needs_single_element(self):
        """item() refuses multi-element tensors."""
        assert Tensor(2.5).item() == 2.5
        with pytest.raises(ContractError):
            Tensor([1.0, 2.0]).item()

    def test_operators_delegate_to_ops(self):
        """Python operators build the same values as the named ops."""
        a, b = Tensor([1.0, 2.0]), Tensor([3.0, 5.0])
        np.testing.assert_array_equal((a + b).data, [4.0, 7.0])
        np.testing.assert_array_equal((a * b).data, [3.0, 10.0])
        np.testing.assert_array_equal((a - b).data, [-2.0, -3.0])
        np.testing.assert_array_equal((1.0 - a).data, [0.0, -1.0])
        m = Tensor([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal((m @ Tensor([[1.0], [1.0]])).data, [[3.0], [7.0]])


class TestTape:
    """Reverse-mode sweep."""

    def test_gradient_of_product(self):
        """d(sum(x*y))/dx = y and d/dy = x."""
        tape = Tape()
        x = tape.watch([1.0, 2.0, 3.0], "x")
        y = tape.watch([4.0, 5.0, 6.0], "y")
        grads = backward(tape, ops.reduce_sum(ops.multiply(x, y)))
        np.testing.assert_array_equal(grads["x"], [4.0, 5.0, 6.0])
        np.testing.assert_array_equal(grads["y"], [1.0, 2.0, 3.0])

    def test_shared_subexpression_accumulates(self):
        """A value used twice receives both contributions."""
        tape = Tape()
        x = tape.watch(3.0, "x")
        grads = backward(tape, ops.multiply(x, x))
        assert grads["x"] == pytest.approx(6.0)

    def test_unreached_leaf_gets_zeros(self):
        """Leaves that do not influence the root have zero gradient."""
        tape = Tape()
        x = tape.watch([1.0, 2.0], "x")
        tape.watch(np.ones((2, 2)), "unused")
        grads = backward(tape, ops.reduce_sum(x))
        np.testing.assert_array_equal(grads["unused"], np.zeros((2, 2)))

    def test_detached_value_blocks_gradient(self):
        """detach() cuts the path back to the leaf."""
        tape = Tape()
        x = tape.watch(2.0, "x")
        y = ops.multiply(x.detach(), x)
        grads = backward(tape, y)
        assert grads["x"] == pytest.approx(2.0)

    def test_backward_requires_scalar_root(self):
        """Non-scalar roots are rejected."""
        tape = Tape()
        x = tape.watch([1.0, 2.0], "x")
        with pytest.raises(ContractError):
            backward(tape, ops.scale(x, 2.0))

    def test_duplicate_leaf_name_rejected(self):
        """Leaf names are unique per tape."""
        tape = Tape()
        tape.watch(1.0, "w")
        with pytest.raises(ContractError):
            tape.watch(2.0, "w")

    def test_mixing_tapes_rejected(self):
        """Operands recorded on two tapes cannot be combined."""
        a = Tape().watch(1.0, "a")
        b = Tape().watch(1.0, "b")
        with pytest.raises(ContractError):
            ops.add(a, b)


class TestOps:
    """Forward values and error cases of primitive ops."""

    def test_matmul_shape_mismatch(self):
        """Inner dimensions must agree."""
        with pytest.raises(DimensionError):
            ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_elementwise_shape_mismatch(self):
        """Element-wise ops do not broadcast non-scalars."""
        with pytest.raises(DimensionError):
            ops.add(Tensor(np.ones(3)), Tensor(np.ones(2)))

    def test_sigmoid_at_zero(self):
        """sigmoid(0) = 0.5."""
        assert ops.sigmoid(Tensor(0.0)).item() == 0.5

    def test_sigmoid_is_stable_for_large_inputs(self):
        """No overflow at +/-1000."""
        values = ops.sigmoid(Tensor([-1000.0, 1000.0])).data
        assert np.all(np.isfinite(values))
        np.testing.assert_allclose(values, [0.0, 1.0])

    def test_softmax_two_classes(self):
        """softmax(5, -5) puts 1/(1+e^-10) on the first class."""
        probs = ops.softmax(Tensor([5.0, -5.0])).data
        assert probs[0] == pytest.approx(0.99995, abs=1e-5)
        assert probs.sum() == pytest.approx(1.0, abs=1e-15)

    def test_softmax_rows_sum_to_one(self, rng):
        """Each row of a batch is normalized separately."""
        probs = ops.softmax(Tensor(rng.normal(size=(4, 6)) * 50)).data
        np.testing.assert_allclose(probs.sum(axis=1), np.ones(4), atol=1e-12)

    def test_softmax_shift_invariance(self, rng):
        """Adding a constant to every logit leaves the distribution unchanged."""
        logits = rng.normal(size=(5, 4))
        base = ops.softmax(Tensor(logits)).data
        for shift in (-1e3, 7.5, 1e3):
            np.testing.assert_allclose(ops.softmax(Tensor(logits + shift)).data, base, atol=1e-12)

    def test_softmax_large_magnitudes(self):
        """Logits of magnitude 1e3 and beyond stay finite and normalized."""
        probs = ops.softmax(Tensor([[1e3, -1e3, 0.0], [2e3, 2e3 - 1.0, -5e3]])).data
        assert np.all(np.isfinite(probs))
        np.testing.assert_allclose(probs.sum(axis=1), [1.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(probs[0], [1.0, 0.0, 0.0], atol=1e-12)
        assert probs[1, 0] == pytest.approx(1 / (1 + math.exp(-1.0)), abs=1e-12)

    def test_log_clamps_at_epsilon(self):
        """log(0) is finite and its gradient is zero."""
        tape = Tape()
        x = tape.watch([0.0, 1.0], "x")
        out = ops.log(x)
        assert out.data[0] == pytest.approx(math.log(ops.EPSILON_LOG))
        grads = backward(tape, ops.reduce_sum(out))
        np.testing.assert_array_equal(grads["x"], [0.0, 1.0])

    def test_relu(self):
        """Negative entries become zero."""
        np.testing.assert_array_equal(ops.relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])

    def test_mean(self):
        """mean divides by the element count."""
        assert ops.mean(Tensor([1.0, 2.0, 3.0, 6.0])).item() == 3.0

    def test_elementwise_dispatch(self):
        """elementwise() routes by name and rejects unknown kinds."""
        assert ops.elementwise("scale", Tensor(2.0), factor=3.0).item() == 6.0
        assert ops.elementwise("negate", Tensor(2.0)).item() == -2.0
        with pytest.raises(ContractError):
            ops.elementwise("tanh", Tensor(1.0))

    def test_conv_same_identity_kernel(self, rng):
        """A centered one-hot kernel reproduces the input."""
        x = rng.normal(size=(2, 3, 3, 2))
        kernel = np.zeros((3, 3, 2, 2))
        kernel[1, 1] = np.eye(2)
        out = ops.conv_same(Tensor(x), Tensor(kernel), Tensor(np.zeros(2)))
        np.testing.assert_array_equal(out.data, x)

    def test_conv_same_zero_padding(self):
        """Border outputs only see in-bounds inputs."""
        x = np.ones((3, 3, 1))
        out = ops.conv_same(Tensor(x), Tensor(np.ones((3, 3, 1, 1))), Tensor(np.zeros(1)))
        assert out.data[0, 0, 0] == 4.0
        assert out.data[1, 1, 0] == 9.0
        assert out.data[0, 1, 0] == 6.0

    def test_conv_same_rejects_even_kernel(self):
        """Even kernels cannot preserve H x W symmetrically."""
        with pytest.raises(ConfigurationError):
            ops.conv_same(Tensor(np.ones((2, 2, 1))), Tensor(np.ones((2, 2, 1, 1))), Tensor(np.zeros(1)))

    def test_conv1x1_mixes_channels(self):
        """Each location is multiplied by the 1 x 1 kernel matrix."""
        x = np.arange(8.0).reshape(2, 2, 2)
        filt = np.array([[[[1.0], [10.0]]]])
        out = ops.conv1x1(Tensor(x), Tensor(filt), Tensor([0.5]))
        np.testing.assert_array_equal(out.data[..., 0], x[..., 0] + 10 * x[..., 1] + 0.5)

    def test_interleave_channels_layout(self):
        """Even channels come from the first operand, odd from the second."""
        first = Tensor(np.full((1, 1, 2), 1.0))
        second = Tensor(np.full((1, 1, 2), 2.0))
        out = ops.interleave_channels(first, second).data
        np.testing.assert_array_equal(out[0, 0], [1.0, 2.0, 1.0, 2.0])

    def test_flatten_keeps_batch_axis(self):
        """A 4-D batch flattens per sample; a single map becomes one row."""
        assert ops.flatten(Tensor(np.ones((3, 2, 2, 2)))).shape == (3, 8)
        assert ops.flatten(Tensor(np.ones((2, 2, 2)))).shape == (1, 8)


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for p in range(a.shape[1]):
                out[i, j] += a[i, p] * b[p, j]
    return out


def naive_conv(x, filt, bias):
    """Direct zero-padded sliding-window correlation of one H x W x Cin map."""
    k = filt.shape[0]
    pad = (k - 1) // 2
    h, w, _ = x.shape
    out = np.zeros((h, w, filt.shape[3]))
    for i in range(h):
        for j in range(w):
            for o in range(filt.shape[3]):
                total = bias[o]
                for di in range(k):
                    for dj in range(k):
                        r, c = i + di - pad, j + dj - pad
                        if 0 <= r < h and 0 <= c < w:
                            total += np.dot(x[r, c], filt[di, dj, :, o])
                out[i, j, o] = total
    return out


INSTANCES = 100


class TestOracles:
    """Ops against naive loops on seeded random small instances."""

    def test_matmul(self):
        """matmul equals the triple loop."""
        rng = np.random.default_rng(101)
        for _ in range(INSTANCES):
            m, k, n = rng.integers(1, 6, size=3)
            a, b = rng.normal(size=(m, k)), rng.normal(size=(k, n))
            np.testing.assert_allclose(
                ops.matmul(Tensor(a), Tensor(b)).data, naive_matmul(a, b), rtol=0, atol=1e-12
            )

    def test_conv1x1(self):
        """conv1x1 equals a per-location dot product, including 1 x 1 maps."""
        rng = np.random.default_rng(102)
        for _ in range(INSTANCES):
            h, w, c_in, c_out = rng.integers(1, 5, size=4)
            x = rng.normal(size=(h, w, c_in))
            filt = rng.normal(size=(1, 1, c_in, c_out))
            bias = rng.normal(size=c_out)
            expected = np.zeros((h, w, c_out))
            for i in range(h):
                for j in range(w):
                    for o in range(c_out):
                        expected[i, j, o] = bias[o] + sum(
                            x[i, j, c] * filt[0, 0, c, o] for c in range(c_in)
                        )
            out = ops.conv1x1(Tensor(x), Tensor(filt), Tensor(bias)).data
            np.testing.assert_allclose(out, expected, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("k", [1, 3, 5])
    def test_conv_same(self, k):
        """conv_same equals the direct sliding window for odd kernels and tiny maps."""
        rng = np.random.default_rng(103 + k)
        for index in range(INSTANCES):
            h, w = (1, 1) if index % 10 == 0 else tuple(rng.integers(1, 6, size=2))
            c_in, c_out = rng.integers(1, 4, size=2)
            x = rng.normal(size=(h, w, c_in))
            filt = rng.normal(size=(k, k, c_in, c_out))
            bias = rng.normal(size=c_out)
            out = ops.conv_same(Tensor(x), Tensor(filt), Tensor(bias)).data
            np.testing.assert_allclose(out, naive_conv(x, filt, bias), rtol=0, atol=1e-12)

    def test_conv_same_batch_matches_single_maps(self):
        """A batched call equals convolving each map on its own."""
        rng = np.random.default_rng(104)
        x = rng.normal(size=(4, 3, 4, 2))
        filt, bias = rng.normal(size=(3, 3, 2, 3)), rng.normal(size=3)
        batched = ops.conv_same(Tensor(x), Tensor(filt), Tensor(bias)).data
        for n in range(4):
            np.testing.assert_allclose(batched[n], naive_conv(x[n], filt, bias), rtol=0, atol=1e-12)
