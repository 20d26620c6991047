"""
Score distillation gradients and the layer regularizer

The distillation gradient is injected at the composed image in model space: the
scorer's Jacobian is never formed, and backpropagation runs only through the
composition function and the generator. `sds_surrogate` is the scalar whose autograd
gradient equals the injected one.
"""
from typing import Optional, Union

import torch

from src.errors import InputValidationError
from src.scorer.schedule import DiffusionSchedule


def _check_shapes(**tensors: torch.Tensor) -> None:
    shapes = {name: tuple(t.shape) for name, t in tensors.items()}
    if len(set(shapes.values())) != 1:
        raise InputValidationError(f"shape mismatch: {shapes}")


def sds_grad(
    edited: torch.Tensor,
    t: Union[int, torch.Tensor],
    eps: torch.Tensor,
    noise_estimate: torch.Tensor,
    schedule: DiffusionSchedule,
    weight: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """
    Score distillation gradient w(t) * (eps_hat - eps)

    Args:
        edited: Composed image in model space, (B, 3, H, W)
        t: Timesteps used to noise it
        eps: Noise that was added
        noise_estimate: Frozen scorer's (guided) estimate on the noised image
        schedule: Supplies w(t) unless `weight` is given
        weight: Optional explicit w(t), broadcastable to the image

    Returns:
        Detached gradient with respect to `edited`
    """
    _check_shapes(edited=edited, eps=eps, noise_estimate=noise_estimate)
    if weight is None:
        _, _, weight = schedule.coefficients(t, edited)
    return (weight * (noise_estimate - eps)).detach()


def vsd_grad(
    edited: torch.Tensor,
    t: Union[int, torch.Tensor],
    pretrained_estimate: torch.Tensor,
    learned_estimate: torch.Tensor,
    schedule: DiffusionSchedule,
    weight: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """
    Variational score distillation gradient w(t) * (eps_pretrained - eps_learned)

    The learned estimate comes from a score head co-trained on the current edits, and
    takes the place of the sampled noise in the SDS residual.
    """
    _check_shapes(edited=edited, pretrained=pretrained_estimate, learned=learned_estimate)
    if weight is None:
        _, _, weight = schedule.coefficients(t, edited)
    return (weight * (pretrained_estimate - learned_estimate)).detach()


def sds_surrogate(edited: torch.Tensor, grad: torch.Tensor, reduction: str = "mean") -> torch.Tensor:
    """
    Scalar whose gradient with respect to `edited` is `grad` (or grad / numel for "mean")

    sum(stopgrad(grad) * edited), divided by the element count when reduction is
    "mean" so that the distillation term and the mean-reduced regularizer stay
    comparable at every resolution.
    """
    if reduction not in ("sum", "mean"):
        raise InputValidationError(f"reduction must be 'sum' or 'mean', got '{reduction}'")
    total = (grad.detach() * edited).sum()
    return total / edited.numel() if reduction == "mean" else total


def reg_loss(layer: torch.Tensor) -> torch.Tensor:
    """L1 identity regularizer: mean |1 - layer|"""
    return (1.0 - layer).abs().mean()
