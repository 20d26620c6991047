"""
Image distances: pixel MSE and a learned feature distance from the scorer's encoder
"""
import torch

from src.distill.relight import check_trained
from src.errors import InputValidationError
from src.scorer.denoiser import Denoiser, to_model_space


def _check_same_shape(pred: torch.Tensor, gt: torch.Tensor) -> None:
    if pred.shape != gt.shape:
        raise InputValidationError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(gt.shape)}")


def mse(pred: torch.Tensor, gt: torch.Tensor) -> float:
    """Mean squared error over all pixels and channels, computed in float64 linear RGB"""
    _check_same_shape(pred, gt)
    return float(((pred.double() - gt.double()) ** 2).mean())


@torch.no_grad()
def feature_distance(pred: torch.Tensor, gt: torch.Tensor, scorer: Denoiser) -> float:
    """
    Mean squared distance between the scorer's mid-stage encoder activations at t = 0

    Args:
        pred: Linear RGB image (3, H, W) or (B, 3, H, W)
        gt: Reference image, shape of pred
        scorer: Trained denoiser

    Raises:
        UntrainedModelError: scorer has no recorded training steps
    """
    _check_same_shape(pred, gt)
    check_trained(scorer, "scorer")
    scorer.eval()
    param = next(scorer.parameters())

    def embed(img: torch.Tensor) -> torch.Tensor:
        img = img.unsqueeze(0) if img.dim() == 3 else img
        return scorer.features(to_model_space(img.to(device=param.device, dtype=param.dtype)))

    return float(((embed(pred) - embed(gt)) ** 2).mean())
