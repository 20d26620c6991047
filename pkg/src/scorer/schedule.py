"""
Variance-preserving noise schedule

x_t = alpha_t * x + sigma_t * eps with alpha_t^2 + sigma_t^2 = 1.
"""
import math
from typing import Any, Dict, Optional, Union

import torch

from src.errors import InputValidationError

MIN_STEPS = 10

# Offset of the cosine schedule; keeps alpha_0 just below 1
COSINE_OFFSET = 0.008
MAX_BETA = 0.999

Timestep = Union[int, torch.Tensor]


class DiffusionSchedule:
    """Per-timestep alpha, sigma and loss weight, stored in float64"""

    def __init__(self, alpha_bar: torch.Tensor, weight: Optional[torch.Tensor] = None, kind: str = "cosine"):
        """
        Args:
            alpha_bar: Cumulative signal fraction alpha_t^2, shape (T,), non-increasing
            weight: Optional w(t), shape (T,); defaults to ones
            kind: Schedule family name, kept for checkpoint headers
        """
        self.kind = kind
        self.alpha_bar = alpha_bar.to(torch.float64)
        self.alpha = self.alpha_bar.sqrt()
        self.sigma = (1.0 - self.alpha_bar).sqrt()
        self.weight = (
            torch.ones_like(self.alpha_bar) if weight is None else weight.to(torch.float64)
        )
        previous = torch.cat([torch.ones(1, dtype=torch.float64), self.alpha_bar[:-1]])
        self.beta = 1.0 - self.alpha_bar / previous

    @property
    def num_steps(self) -> int:
        return int(self.alpha_bar.shape[0])

    def _index(self, t: Timestep) -> torch.Tensor:
        t = torch.as_tensor(t, dtype=torch.long)
        if t.numel() and (t.min() < 0 or t.max() >= self.num_steps):
            raise InputValidationError(
                f"timestep out of range [0, {self.num_steps}): got {t.tolist()}"
            )
        return t

    def coefficients(self, t: Timestep, like: torch.Tensor):
        """
        alpha_t, sigma_t and w(t) broadcastable against a (B, C, H, W) tensor

        Args:
            t: Scalar step or (B,) steps
            like: Tensor whose dtype, device and rank the result follows
        """
        idx = self._index(t)
        shape = (-1,) + (1,) * (like.dim() - 1) if idx.dim() else ()

        def pick(values: torch.Tensor) -> torch.Tensor:
            return values[idx].reshape(shape).to(dtype=like.dtype, device=like.device)

        return pick(self.alpha), pick(self.sigma), pick(self.weight)

    def add_noise(self, x: torch.Tensor, t: Timestep, eps: torch.Tensor) -> torch.Tensor:
        """
        Diffuse a clean sample to step t

        Args:
            x: Clean sample (B, C, H, W) or (C, H, W)
            t: Scalar step or (B,) steps
            eps: Standard normal noise, shape of x

        Returns:
            alpha_t * x + sigma_t * eps
        """
        if eps.shape != x.shape:
            raise InputValidationError(
                f"noise shape {tuple(eps.shape)} does not match sample shape {tuple(x.shape)}"
            )
        alpha, sigma, _ = self.coefficients(t, x)
        return alpha * x + sigma * eps

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "num_steps": self.num_steps}


def make_schedule(num_steps: int = 1000, kind: str = "cosine") -> DiffusionSchedule:
    """
    Build a variance-preserving schedule

    The cosine family sets alpha_bar(t) = f(t + 1) / f(0) with
    f(u) = cos^2(((u / T) + s) / (1 + s) * pi / 2), per-step betas capped at 0.999.

    Args:
        num_steps: Number of diffusion steps T, at least 10
        kind: Schedule family; only "cosine" is provided

    Returns:
        DiffusionSchedule with w(t) = 1
    """
    if num_steps < MIN_STEPS:
        raise InputValidationError(f"schedule needs at least {MIN_STEPS} steps, got {num_steps}")
    if kind != "cosine":
        raise InputValidationError(f"unknown schedule kind '{kind}'")

    def f(u: torch.Tensor) -> torch.Tensor:
        return torch.cos((u / num_steps + COSINE_OFFSET) / (1 + COSINE_OFFSET) * math.pi / 2) ** 2

    steps = torch.arange(num_steps + 1, dtype=torch.float64)
    ratios = f(steps[1:]) / f(steps[:-1])
    betas = torch.clamp(1.0 - ratios, max=MAX_BETA)
    alpha_bar = torch.cumprod(1.0 - betas, dim=0)
    return DiffusionSchedule(alpha_bar, kind=kind)


def schedule_from_dict(payload: Dict[str, Any]) -> DiffusionSchedule:
    """Rebuild a schedule from the dict stored in checkpoint headers"""
    return make_schedule(int(payload["num_steps"]), payload.get("kind", "cosine"))
