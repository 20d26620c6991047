"""
Noise prediction with optional adapter and classifier-free guidance
"""
from typing import Optional, Union

import torch

from .adapter import ConditioningAdapter, predict_with_adapter
from .conditioning import ConditionSpec
from .denoiser import Denoiser, to_model_space


def _timesteps(t: Union[int, torch.Tensor], batch: int, device: torch.device) -> torch.Tensor:
    t = torch.as_tensor(t, dtype=torch.long, device=device)
    return t.expand(batch) if t.dim() == 0 else t


def _hint(cond_image: torch.Tensor, batch: int) -> torch.Tensor:
    hint = cond_image if cond_image.dim() == 4 else cond_image.unsqueeze(0)
    return to_model_space(hint).expand(batch, -1, -1, -1)


def predict_noise(
    model: Denoiser,
    x_t: torch.Tensor,
    t: Union[int, torch.Tensor],
    cond: ConditionSpec,
    cond_image: Optional[torch.Tensor] = None,
    adapter: Optional[ConditioningAdapter] = None,
) -> torch.Tensor:
    """
    Single conditional noise estimate

    The adapter branch runs only when both an adapter and a condition image are given.

    Args:
        model: Denoiser
        x_t: Noised sample in model space (B, 3, H, W)
        t: Scalar step or (B,) steps
        cond: Direction / category condition, components may be null
        cond_image: Condition image in [0, 1], (3, H, W) or (B, 3, H, W)
        adapter: Optional conditioning adapter

    Returns:
        Noise estimate, shape of x_t
    """
    batch = x_t.shape[0]
    steps = _timesteps(t, batch, x_t.device)
    direction, category = cond.tokens(batch, device=x_t.device)
    if adapter is not None and cond_image is not None:
        return predict_with_adapter(
            model, adapter, x_t, steps, direction, category, _hint(cond_image, batch)
        )
    return model(x_t, steps, direction, category)


def cfg_predict(
    model: Denoiser,
    x_t: torch.Tensor,
    t: Union[int, torch.Tensor],
    cond: ConditionSpec,
    cond_image: Optional[torch.Tensor] = None,
    scale: float = 1.0,
    adapter: Optional[ConditioningAdapter] = None,
) -> torch.Tensor:
    """
    Classifier-free guided noise estimate

    eps = eps_null + scale * (eps_cond - eps_null), evaluated as
    (1 - scale) * eps_null + scale * eps_cond so that scale 0 and scale 1 return the
    unconditional and conditional estimates exactly. The unconditional pass nulls the
    direction and category tokens and skips the adapter.

    Args:
        model: Denoiser trained with condition dropout
        x_t: Noised sample in model space (B, 3, H, W)
        t: Scalar step or (B,) steps
        cond: Condition of the guided branch
        cond_image: Condition image for the adapter branch
        scale: Guidance scale
        adapter: Optional conditioning adapter

    Returns:
        Guided noise estimate, shape of x_t
    """
    eps_cond = predict_noise(model, x_t, t, cond, cond_image=cond_image, adapter=adapter)
    eps_null = predict_noise(model, x_t, t, ConditionSpec.null())
    return (1.0 - scale) * eps_null + scale * eps_cond
