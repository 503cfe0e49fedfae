import numpy as np
import pytest

from visioblend.schedule import make_schedule


def test_single_step_schedule():
    s = make_schedule(1, 0.5, 0.5)
    assert s.T == 1
    assert s.betas.tolist() == [0.5]
    assert s.alphas.tolist() == [0.5]
    assert s.alpha_bars.tolist() == [0.5]


def test_two_step_cumulative_product():
    s = make_schedule(2, 0.1, 0.2)
    np.testing.assert_allclose(s.alpha_bars, [0.9, 0.72], rtol=0, atol=1e-12)


def test_default_schedule_endpoint_and_decay():
    s = make_schedule(1000, 1e-4, 0.02)
    assert s.betas[0] == pytest.approx(1e-4)
    assert s.betas[-1] == pytest.approx(0.02)
    # oracle: recompute the cumulative product with a plain loop
    acc = 1.0
    for b in s.betas:
        acc *= 1.0 - float(b)
    assert s.alpha_bars[-1] == pytest.approx(acc, rel=1e-10)
    assert s.alpha_bars[-1] < 0.01


def test_invariants_hold_across_configs():
    for T, b0, b1 in [(1, 0.3, 0.3), (5, 1e-4, 0.9), (100, 1e-3, 0.05), (37, 0.2, 0.21)]:
        s = make_schedule(T, b0, b1)
        assert len(s.betas) == len(s.alphas) == len(s.alpha_bars) == T
        assert np.all(s.betas > 0) and np.all(s.betas < 1)
        assert np.array_equal(s.alphas, 1.0 - s.betas)
        assert np.all(np.diff(s.alpha_bars) < 0) or T == 1
        assert s.alpha_bars[0] == s.alphas[0]
        assert np.all(np.isfinite(s.alpha_bars))
        assert np.all(s.alpha_bars > 0) and np.all(s.alpha_bars < 1)


def test_betas_linear_inclusive():
    s = make_schedule(5, 0.1, 0.5)
    np.testing.assert_allclose(s.betas, [0.1, 0.2, 0.3, 0.4, 0.5], atol=1e-12)


def test_rejects_bad_arguments():
    with pytest.raises(ValueError):
        make_schedule(0, 0.1, 0.2)
    with pytest.raises(ValueError):
        make_schedule(-3, 0.1, 0.2)
    with pytest.raises(ValueError):
        make_schedule(10, 0.0, 0.2)
    with pytest.raises(ValueError):
        make_schedule(10, 0.1, 1.0)
    with pytest.raises(ValueError):
        make_schedule(10, 0.3, 0.2)
    with pytest.raises(ValueError):
        make_schedule(10, -0.1, 0.2)
