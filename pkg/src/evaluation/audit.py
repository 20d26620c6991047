"""
Luminosity-preservation audit: does an edit only rescale each pixel?
"""
import torch

from src.errors import InputValidationError

# Pixels whose base has a channel at or below this are too dark for stable ratios
MIN_BASE_VALUE = 0.02


def preservation_audit(base: torch.Tensor, edited: torch.Tensor) -> float:
    """
    Largest spread of per-channel ratios edited / base over auditable pixels

    A pixel is audited when every base channel exceeds 0.02 and no edited channel sits
    at 0 or 1 (clamped). For a pure luminosity edit all three ratios of a pixel agree,
    so the spread max_c(ratio) - min_c(ratio) is zero up to rounding.

    Args:
        base: Linear RGB base (3, H, W)
        edited: Linear RGB edit of the same base (3, H, W)

    Returns:
        Maximum spread, 0.0 when no pixel is auditable
    """
    if base.shape != edited.shape:
        raise InputValidationError(f"shape mismatch: {tuple(base.shape)} vs {tuple(edited.shape)}")
    base = base.detach().cpu().double()
    edited = edited.detach().cpu().double()

    valid = (base > MIN_BASE_VALUE).all(dim=-3) & ((edited > 0.0) & (edited < 1.0)).all(dim=-3)
    if not valid.any():
        return 0.0
    ratio = edited / base.clamp_min(MIN_BASE_VALUE)
    spread = ratio.amax(dim=-3) - ratio.amin(dim=-3)
    return float(spread[valid].max())
