"""
Structure regularizers for colorization and sketch extraction

A structure regularizer is any callable (edited, reference) -> scalar tensor that is
differentiable in `edited`. The default compares Sobel edge-magnitude maps.
"""
from typing import Callable

import torch
import torch.nn.functional as F

from src.compose.layers import luminance, validate_image

StructureRegularizer = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]

_SOBEL_X = torch.tensor([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.t().contiguous()


def edge_map(img: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    """
    Sobel gradient magnitude of an image's luminance

    Args:
        img: Linear RGB image (3, H, W) or (B, 3, H, W)

    Returns:
        (H, W) or (B, H, W) edge magnitudes, borders replicate-padded
    """
    squeeze = img.dim() == 3
    luma = luminance(img.unsqueeze(0) if squeeze else img).unsqueeze(1)
    kernels = torch.stack([_SOBEL_X, _SOBEL_Y]).unsqueeze(1).to(dtype=luma.dtype, device=luma.device)
    grads = F.conv2d(F.pad(luma, (1, 1, 1, 1), mode="replicate"), kernels)
    magnitude = torch.sqrt((grads**2).sum(dim=1) + eps)
    return magnitude[0] if squeeze else magnitude


def edge_structure_loss(edited: torch.Tensor, reference: torch.Tensor) -> torch.Tensor:
    """Mean squared distance between the edge maps of `edited` and `reference`"""
    current = edge_map(edited)
    target = edge_map(reference).to(current.dtype)
    return F.mse_loss(current, target.expand_as(current))


def make_sketch(uniform: torch.Tensor) -> torch.Tensor:
    """
    Line drawing of a uniformly lit image: dark luminance contours on white

    Args:
        uniform: Linear RGB image (3, H, W)

    Returns:
        (3, H, W) gray sketch in [0, 1]
    """
    validate_image(uniform, "uniform image")
    edges = edge_map(uniform)
    peak = edges.max()
    strength = edges / peak if peak > 1e-4 else torch.zeros_like(edges)
    sketch = 1.0 - strength.clamp(0.0, 1.0)
    return sketch.unsqueeze(0).expand(3, -1, -1).contiguous()
