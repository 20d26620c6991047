"""
Layer composition functions

Images are torch tensors laid out (..., 3, H, W) in linear RGB; luminosity layers
are (..., 1, H, W). The composition functions are the only way an edit reaches the
output image, so they fix what an edit is able to change:

- compose_relight multiplies and divides every channel of a pixel by the same
  scalar, so hue and chroma of the base survive wherever nothing clamps.
- compose_alpha blends an RGB overlay in only where its alpha is non-zero.
"""
from typing import NamedTuple

import torch

from src.errors import InputValidationError

# Post-activation clip range of shading / lighting layers
LAYER_MIN = 0.1
LAYER_MAX = 1.0

# Rec.709 luma weights for linear RGB
LUMA_WEIGHTS = (0.2126, 0.7152, 0.0722)


def validate_image(img: torch.Tensor, name: str = "image", channels: int = 3) -> None:
    """
    Check layout, finiteness and [0, 1] range of an image tensor

    Raises:
        InputValidationError: on any violation
    """
    if img.dim() < 3 or img.shape[-3] != channels:
        raise InputValidationError(
            f"{name} must be laid out (..., {channels}, H, W), got shape {tuple(img.shape)}"
        )
    if img.shape[-1] <= 0 or img.shape[-2] <= 0:
        raise InputValidationError(f"{name} has empty spatial dimensions")
    with torch.no_grad():
        if not torch.isfinite(img).all():
            raise InputValidationError(f"{name} contains non-finite values")
        if img.min() < 0.0 or img.max() > 1.0:
            raise InputValidationError(
                f"{name} values must lie in [0, 1], got [{img.min().item():.6g}, {img.max().item():.6g}]"
            )


def validate_layer(layer: torch.Tensor, name: str = "layer") -> None:
    """
    Check that a luminosity layer is single-channel and within [LAYER_MIN, LAYER_MAX]

    Raises:
        InputValidationError: on any violation
    """
    if layer.dim() < 3 or layer.shape[-3] != 1:
        raise InputValidationError(
            f"{name} must be laid out (..., 1, H, W), got shape {tuple(layer.shape)}"
        )
    with torch.no_grad():
        # compare in the layer's own precision so a float32 clip at 0.1 passes
        low = torch.tensor(LAYER_MIN, dtype=layer.dtype)
        if not torch.isfinite(layer).all():
            raise InputValidationError(f"{name} contains non-finite values")
        if layer.min() < low or layer.max() > LAYER_MAX:
            raise InputValidationError(
                f"{name} values must lie in [{LAYER_MIN}, {LAYER_MAX}], "
                f"got [{layer.min().item():.6g}, {layer.max().item():.6g}]"
            )


def _check_spatial(base: torch.Tensor, other: torch.Tensor, name: str) -> None:
    if base.shape[-2:] != other.shape[-2:]:
        raise InputValidationError(
            f"{name} spatial size {tuple(other.shape[-2:])} does not match base {tuple(base.shape[-2:])}"
        )


def compose_relight(
    base: torch.Tensor, shade: torch.Tensor, light: torch.Tensor
) -> torch.Tensor:
    """
    Relight a base image with a multiply (shading) and a divide (lighting) layer

    out = clamp(base * shade / light, 0, 1), evaluated multiply, then divide, then clamp.

    Args:
        base: Linear RGB image (..., 3, H, W) in [0, 1]
        shade: Shading layer (..., 1, H, W) in [0.1, 1]
        light: Lighting layer (..., 1, H, W) in [0.1, 1]

    Returns:
        Relit image with the shape of base broadcast against the layers
    """
    validate_image(base, "base")
    validate_layer(shade, "shade layer")
    validate_layer(light, "light layer")
    _check_spatial(base, shade, "shade layer")
    _check_spatial(base, light, "light layer")

    return torch.clamp(base * shade / light, 0.0, 1.0)


class RGBALayer(NamedTuple):
    """Color overlay with per-pixel transparency"""

    rgb: torch.Tensor  # (..., 3, H, W) in [0, 1]
    alpha: torch.Tensor  # (..., 1, H, W) in [0, 1]


def compose_alpha(base: torch.Tensor, overlay: RGBALayer) -> torch.Tensor:
    """
    Alpha-over an RGB overlay onto a base image

    out = alpha * rgb + (1 - alpha) * base

    Args:
        base: Linear RGB image (..., 3, H, W) in [0, 1]
        overlay: RGBALayer with colors and transparency

    Returns:
        Blended image, within [0, 1] by convexity
    """
    rgb, alpha = overlay
    validate_image(base, "base")
    validate_image(rgb, "overlay rgb")
    validate_image(alpha, "overlay alpha", channels=1)
    _check_spatial(base, rgb, "overlay rgb")
    _check_spatial(base, alpha, "overlay alpha")

    return alpha * rgb + (1.0 - alpha) * base


def luminance(img: torch.Tensor) -> torch.Tensor:
    """
    Per-pixel Rec.709 luma of a linear RGB image

    Args:
        img: Linear RGB image (..., 3, H, W)

    Returns:
        Luma field (..., H, W)
    """
    validate_image(img, "image")
    weights = torch.tensor(LUMA_WEIGHTS, dtype=img.dtype, device=img.device)
    return torch.einsum("...chw,c->...hw", img, weights)
