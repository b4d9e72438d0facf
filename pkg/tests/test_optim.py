import math

import numpy as np
import pytest

from tempalign.autodiff import Tensor
from tempalign.errors import NumericError, ParameterError
from tempalign.optim import SGD, AdamW


def param(values, name="p"):
    return Tensor(np.array(values, dtype=float), requires_grad=True, name=name)


def test_first_step_matches_hand_computation():
    # m1 = 0.1, v1 = 0.001; bias-corrected both are 1, so the step is lr / (1 + eps)
    theta = param(1.0)
    theta.grad = np.array(1.0)
    AdamW([theta], lr=0.1, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0).step()
    m_hat = (0.1 * 1.0) / (1 - 0.9)
    v_hat = (0.001 * 1.0) / (1 - 0.999)
    expected = 1.0 - 0.1 * m_hat / (math.sqrt(v_hat) + 1e-8)
    assert abs(theta.item() - expected) < 1e-12


def test_two_steps_match_reference_recursion():
    theta = param([0.5, -2.0])
    grads = [np.array([0.3, -1.0]), np.array([-0.2, 0.4])]
    opt = AdamW([theta], lr=0.01, weight_decay=0.0)
    m = v = np.zeros(2)
    ref = theta.data.copy()
    for t, g in enumerate(grads, 1):
        theta.grad = g
        opt.step()
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    assert np.allclose(theta.data, ref, rtol=0, atol=1e-14)
    assert opt.state.step == 2


def test_zero_gradient_without_decay_leaves_parameters():
    theta = param([1.0, 2.0])
    theta.grad = np.zeros(2)
    AdamW([theta], lr=0.1, weight_decay=0.0).step()
    assert theta.data.tolist() == [1.0, 2.0]


def test_decoupled_decay_shrinks_by_lr_times_decay():
    theta = param([2.0, -4.0])
    theta.grad = np.zeros(2)
    AdamW([theta], lr=0.1, weight_decay=0.01).step()
    assert np.allclose(theta.data, [2.0 - 0.1 * 0.01 * 2.0, -4.0 - 0.1 * 0.01 * -4.0],
                       rtol=0, atol=1e-15)


def test_no_decay_group_is_not_shrunk():
    a, b = param([1.0], "a"), param([1.0], "b")
    a.grad = b.grad = np.zeros(1)
    AdamW([a, b], lr=0.1, weight_decay=0.5, no_decay=[b]).step()
    assert a.item() < 1.0 and b.item() == 1.0


def test_step_counter_and_moment_shapes():
    theta = param(np.ones((3, 2)))
    opt = AdamW([theta], lr=0.1)
    for k in range(1, 4):
        theta.grad = np.full((3, 2), 0.5)
        opt.step()
        assert opt.state.step == k
    assert all(a.shape == (3, 2) for a in opt.state_arrays())


def test_parameters_without_gradient_are_untouched():
    a, b = param([1.0], "a"), param([1.0], "b")
    a.grad = np.array([1.0])
    opt = AdamW([a, b], lr=0.1, weight_decay=0.1)
    opt.step()
    assert b.item() == 1.0
    assert id(b) not in opt.state.exp_avg


@pytest.mark.parametrize("bad", [np.nan, np.inf])
def test_non_finite_gradient_names_the_parameter(bad):
    good, broken = param([1.0], "good"), param([1.0, 2.0], "emit.w")
    good.grad = np.array([1.0])
    broken.grad = np.array([0.0, bad])
    with pytest.raises(NumericError, match="emit.w"):
        AdamW([good, broken], lr=0.1).step()
    assert good.item() == 1.0  # checked before anything is updated


def test_invalid_hyperparameters():
    with pytest.raises(ParameterError):
        AdamW([], lr=-1.0)
    with pytest.raises(ParameterError):
        AdamW([], betas=(1.0, 0.999))


def test_sgd_is_plain_descent():
    theta = param([1.0, -1.0])
    theta.grad = np.array([0.5, 2.0])
    SGD([theta], lr=0.1).step()
    assert np.allclose(theta.data, [0.95, -1.2], rtol=0, atol=1e-15)
