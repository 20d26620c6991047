"""
Ancestral DDPM sampling with classifier-free guidance
"""
import logging
from typing import Optional

import torch

from src.errors import InputValidationError
from .adapter import ConditioningAdapter
from .conditioning import ConditionSpec, describe_condition
from .denoiser import Denoiser, from_model_space
from .guidance import cfg_predict
from .schedule import DiffusionSchedule

logger = logging.getLogger(__name__)


def sampling_timesteps(schedule: DiffusionSchedule, steps: int) -> torch.Tensor:
    """Evenly strided descending timesteps, T-1 first and 0 last"""
    if steps <= 0:
        return torch.zeros(0, dtype=torch.long)
    grid = torch.linspace(schedule.num_steps - 1, 0, steps, dtype=torch.float64)
    return torch.unique_consecutive(grid.round().long())


@torch.no_grad()
def sample(
    model: Denoiser,
    schedule: DiffusionSchedule,
    cond: ConditionSpec,
    steps: int = 100,
    seed: int = 0,
    adapter: Optional[ConditioningAdapter] = None,
    cond_image: Optional[torch.Tensor] = None,
    guidance_scale: float = 1.0,
    size: Optional[int] = None,
    batch: int = 1,
) -> torch.Tensor:
    """
    Draw images by ancestral sampling over a strided subset of the schedule

    Args:
        model: Trained denoiser
        schedule: Schedule the denoiser was trained with
        cond: Direction / category condition
        steps: Number of denoising steps; 0 returns the clamped initial noise
        seed: Noise seed
        adapter: Optional conditioning adapter
        cond_image: Condition image in [0, 1] for the adapter, (3, H, W)
        guidance_scale: Classifier-free guidance scale
        size: Image size; defaults to the condition image size
        batch: Number of images

    Returns:
        (batch, 3, H, W) images in [0, 1]
    """
    if size is None:
        if cond_image is None:
            raise InputValidationError("sample needs a size when no condition image is given")
        size = int(cond_image.shape[-1])
    device = next(model.parameters()).device
    generator = torch.Generator().manual_seed(seed)
    x = torch.randn((batch, 3, size, size), generator=generator).to(device)
    if cond_image is not None:
        cond_image = cond_image.to(device)

    timesteps = sampling_timesteps(schedule, steps)
    logger.info("Sampling '%s' with %d steps", describe_condition(cond), len(timesteps))

    alpha_bar = schedule.alpha_bar
    for i, t in enumerate(timesteps.tolist()):
        prev = int(timesteps[i + 1]) if i + 1 < len(timesteps) else -1
        ab_t = alpha_bar[t].item()
        ab_prev = alpha_bar[prev].item() if prev >= 0 else 1.0

        eps = cfg_predict(model, x, t, cond, cond_image=cond_image, scale=guidance_scale, adapter=adapter)
        x0 = ((x - (1.0 - ab_t) ** 0.5 * eps) / ab_t**0.5).clamp(-1.0, 1.0)

        alpha_step = ab_t / ab_prev
        beta_step = 1.0 - alpha_step
        mean = (
            (ab_prev**0.5 * beta_step / (1.0 - ab_t)) * x0
            + (alpha_step**0.5 * (1.0 - ab_prev) / (1.0 - ab_t)) * x
        )
        if prev >= 0:
            variance = beta_step * (1.0 - ab_prev) / (1.0 - ab_t)
            noise = torch.randn(x.shape, generator=generator).to(device)
            x = mean + variance**0.5 * noise
        else:
            x = mean

    return from_model_space(x)
