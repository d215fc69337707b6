import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from fforge.attacks import AttackConfig, blackbox_transfer, pgd_attack, pgd_whitebox, project_linf
from fforge.detector import CompactCNN, DetectorModel, LinearScorer
from fforge.errors import NoGradientCapability

SIZE = 16


def _linear(seed=0):
    rng = np.random.default_rng(seed)
    w = rng.choice([-1.0, 1.0], size=(SIZE, SIZE, 3)) * rng.uniform(0.01, 0.1, size=(SIZE, SIZE, 3))
    return DetectorModel(LinearScorer(w, 0.0), "BL", SIZE), w


def _cnn(seed):
    torch.manual_seed(seed)
    return DetectorModel(CompactCNN(width=4), "BL", SIZE)


def _images(n, seed=0, lo=0.0, hi=1.0):
    rng = np.random.default_rng(seed)
    return [rng.uniform(lo, hi, size=(SIZE, SIZE, 3)) for _ in range(n)]


def test_zero_epsilon_identity():
    model = _cnn(0)
    x = _images(1)[0]
    out = pgd_whitebox(model, x, 1, AttackConfig(epsilon=0.0, alpha=0.0))
    np.testing.assert_array_equal(out, x)


def test_ball_and_range_exact():
    model = _cnn(1)
    imgs = _images(50, seed=2)
    labels = [i % 2 for i in range(50)]
    eps = 8 / 255
    out = pgd_attack(model, imgs, labels, AttackConfig())
    for x, y in zip(imgs, out):
        assert np.abs(y - x).max() <= eps
        assert y.min() >= 0 and y.max() <= 1


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 0.2))
def test_projection_property(seed, eps):
    rng = np.random.default_rng(seed)
    c = rng.random((4, 4, 3))
    x = c + rng.normal(0, 0.3, size=c.shape)
    p = project_linf(x, c, eps)
    assert np.all(np.abs(p - c) <= eps) and p.min() >= 0 and p.max() <= 1


@pytest.mark.parametrize("label,sign", [(1, -1.0), (0, 1.0)])
def test_linear_closed_form(label, sign):
    model, w = _linear()
    eps = 8 / 255
    x0 = _images(1, seed=5, lo=eps, hi=1 - eps)[0]
    out = pgd_whitebox(model, x0, label, AttackConfig())
    np.testing.assert_allclose(out, x0 + eps * sign * np.sign(w), rtol=0, atol=1e-6)


def test_linear_loss_monotone():
    model, _ = _linear(3)
    trace = []
    pgd_attack(model, _images(4, seed=6), [0, 1, 0, 1], AttackConfig(), trace=trace)
    losses = np.stack(trace)
    assert losses.shape == (11, 4)
    assert np.all(np.diff(losses, axis=0) >= -1e-6)


def test_attack_deterministic():
    model = _cnn(2)
    imgs = _images(3, seed=7)
    a = pgd_attack(model, imgs, [1, 0, 1], AttackConfig(seed=3))
    b = pgd_attack(model, imgs, [1, 0, 1], AttackConfig(seed=3))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_no_gradient_capability():
    model = _cnn(0)
    model.supports_gradients = False
    with pytest.raises(NoGradientCapability):
        pgd_whitebox(model, _images(1)[0], 1)


def test_transfer_never_queries_target():
    surrogate, target = _cnn(4), _cnn(5)
    target.supports_gradients = False
    imgs = _images(5, seed=8)
    out = blackbox_transfer(surrogate, target, imgs, [0, 1, 0, 1, 0])
    assert target.gradient_queries == 0 and surrogate.gradient_queries == 10
    assert all(np.abs(y - x).max() <= 8 / 255 for x, y in zip(imgs, out))


@pytest.mark.parametrize("kwargs", [dict(epsilon=-1), dict(steps=0), dict(alpha=0.1)])
def test_invalid_config(kwargs):
    with pytest.raises(ValueError):
        AttackConfig(**kwargs)
