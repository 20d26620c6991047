"""
Unit tests for the variance-preserving noise schedule
"""
import pytest
import torch

from src.errors import InputValidationError
from src.scorer.schedule import make_schedule, schedule_from_dict


def test_variance_preserving(schedule):
    """Test alpha^2 + sigma^2 = 1 and a non-increasing alpha"""
    total = schedule.alpha**2 + schedule.sigma**2
    assert torch.allclose(total, torch.ones_like(total), atol=1e-6)
    assert (schedule.alpha[1:] <= schedule.alpha[:-1]).all()
    assert schedule.alpha[0] >= 0.999
    assert torch.equal(schedule.weight, torch.ones(1000, dtype=torch.float64))


def test_schedule_boundaries(schedule):
    """Test the first and last steps"""
    assert schedule.alpha[0].item() == pytest.approx(1.0, abs=1e-3)
    assert schedule.sigma[0].item() < 0.05
    assert schedule.sigma[-1].item() >= 0.99


def test_schedule_needs_ten_steps():
    """Test the minimum number of steps and the family name"""
    with pytest.raises(InputValidationError):
        make_schedule(9)
    with pytest.raises(InputValidationError):
        make_schedule(100, kind="linear")


def test_add_noise_boundaries(schedule):
    """Test that t = 0 keeps the sample and t = T-1 is almost pure noise"""
    gen = torch.Generator().manual_seed(0)
    x = torch.rand(2, 3, 8, 8, generator=gen) * 2 - 1
    eps = torch.randn(2, 3, 8, 8, generator=gen)
    assert torch.allclose(schedule.add_noise(x, 0, eps), x, atol=0.05)
    assert torch.allclose(schedule.add_noise(x, 999, eps), eps, atol=0.05)


def test_add_noise_is_linear(schedule):
    """Test linearity in the sample and in the noise"""
    gen = torch.Generator().manual_seed(1)
    x1, x2, e1, e2 = (torch.randn(1, 3, 4, 4, generator=gen, dtype=torch.float64) for _ in range(4))
    t = torch.tensor([400])
    combined = schedule.add_noise(x1 + 2 * x2, t, e1 + 2 * e2)
    separate = schedule.add_noise(x1, t, e1) + 2 * schedule.add_noise(x2, t, e2)
    assert torch.allclose(combined, separate, atol=1e-12)
    assert torch.equal(schedule.add_noise(x1, t, e1), schedule.add_noise(x1, t, e1))


def test_add_noise_per_element_steps(schedule):
    """Test that each batch element uses its own timestep"""
    x = torch.zeros(2, 3, 4, 4, dtype=torch.float64)
    eps = torch.ones_like(x)
    out = schedule.add_noise(x, torch.tensor([10, 900]), eps)
    assert torch.allclose(out[0], schedule.sigma[10].expand(3, 4, 4))
    assert torch.allclose(out[1], schedule.sigma[900].expand(3, 4, 4))


def test_add_noise_rejects_bad_input(schedule):
    """Test step range and noise shape checks"""
    x = torch.zeros(1, 3, 4, 4)
    with pytest.raises(InputValidationError):
        schedule.add_noise(x, 1000, torch.zeros_like(x))
    with pytest.raises(InputValidationError):
        schedule.add_noise(x, 10, torch.zeros(1, 3, 4, 5))


def test_schedule_round_trips_through_header(schedule):
    """Test rebuilding a schedule from its checkpoint description"""
    rebuilt = schedule_from_dict(schedule.to_dict())
    assert torch.equal(rebuilt.alpha_bar, schedule.alpha_bar)
