import numpy as np
import pytest

from fdfnet import autograd as ag
from fdfnet.autograd import GradientTape, Tensor, backward, is_recording, no_grad
from fdfnet.errors import UsageError
from tests.gradcheck import check_gradients


class TestTape:
    def test_simple_product(self):
        w = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
        x = np.array([4.0, 5.0, 6.0])
        with GradientTape() as tape:
            loss = (w * x).sum()
        grads = backward(loss, tape)
        np.testing.assert_array_equal(grads[w], x)
        np.testing.assert_array_equal(w.grad, x)

    def test_untouched_tensor_gets_zeros(self):
        w = Tensor(np.ones(2), requires_grad=True)
        other = Tensor(np.ones((3, 3)), requires_grad=True)
        with GradientTape() as tape:
            loss = ag.mean(w)
        grads = backward(loss, tape)
        np.testing.assert_array_equal(grads[other], np.zeros((3, 3)))
        assert other not in grads

    def test_tape_is_single_use(self):
        w = Tensor(np.ones(2), requires_grad=True)
        with GradientTape() as tape:
            loss = w.sum()
        backward(loss, tape)
        with pytest.raises(UsageError, match="already"):
            backward(loss, tape)

    def test_loss_must_be_scalar(self):
        w = Tensor(np.ones(2), requires_grad=True)
        with GradientTape() as tape:
            out = w * 2.0
        with pytest.raises(UsageError, match="scalar"):
            backward(out, tape)

    def test_no_grad_suspends_recording(self):
        w = Tensor(np.ones(2), requires_grad=True)
        with GradientTape() as tape:
            assert is_recording()
            with no_grad():
                assert not is_recording()
                w * 3.0
            assert len(tape) == 0
            w * 3.0
        assert len(tape) == 1
        assert not is_recording()

    def test_constants_are_not_recorded(self):
        with GradientTape() as tape:
            Tensor(np.ones(2)) + 1.0
        assert len(tape) == 0

    def test_reused_tensor_accumulates(self):
        w = Tensor(np.array([3.0]), requires_grad=True)
        with GradientTape() as tape:
            loss = (w * w + w).sum()
        np.testing.assert_allclose(backward(loss, tape)[w], [7.0])

    def test_frozen_tensor_gets_no_gradient(self):
        w = Tensor(np.ones(2), requires_grad=True)
        frozen = Tensor(np.ones(2), requires_grad=False)
        with GradientTape() as tape:
            loss = (w * frozen).sum()
        grads = backward(loss, tape)
        assert frozen not in grads
        assert frozen.grad is None

    def test_mean_accumulates_in_float64(self):
        w = Tensor(np.ones(4, dtype=np.float32), requires_grad=True)
        with GradientTape() as tape:
            loss = ag.mean(w)
        assert loss.dtype == np.float64
        grads = backward(loss, tape)
        assert grads[w].dtype == np.float32
        np.testing.assert_allclose(grads[w], 0.25)

    def test_tensor_hashes_by_identity(self):
        a, b = Tensor(np.zeros(1)), Tensor(np.zeros(1))
        assert len({a: 1, b: 2}) == 2


class TestOpGradients:
    def test_broadcast_add(self, rng):
        check_gradients(ag.add, [rng.standard_normal((3, 1)), rng.standard_normal(4)])

    def test_broadcast_sub_mul(self, rng):
        check_gradients(lambda a, b: ag.mul(ag.sub(a, b), b),
                        [rng.standard_normal((2, 3)), rng.standard_normal((1, 3))])

    def test_neg_square_absolute(self, rng):
        check_gradients(lambda a: ag.absolute(ag.neg(ag.square(a)) + 0.5), [rng.standard_normal((4, 3))])

    def test_sum_over_axis(self, rng):
        check_gradients(lambda a: ag.tsum(a, axis=1), [rng.standard_normal((3, 4, 2))])
        check_gradients(lambda a: ag.tsum(a, axis=0, keepdims=True), [rng.standard_normal((3, 4))])

    def test_mean(self, rng):
        check_gradients(lambda a: ag.mean(a), [rng.standard_normal((5, 2))])

    def test_reshape_transpose(self, rng):
        check_gradients(lambda a: ag.transpose(ag.reshape(a, (2, 3, 4)), (2, 0, 1)),
                        [rng.standard_normal((6, 4))])

    def test_concat(self, rng):
        check_gradients(lambda a, b: ag.concat([a, b, a], axis=1),
                        [rng.standard_normal((2, 3)), rng.standard_normal((2, 1))])

    def test_take_with_repeats(self, rng):
        index = (np.array([0, 2, 0]),)
        check_gradients(lambda a: ag.take(a, index), [rng.standard_normal((3, 2))])
