"""
Analytic direction oracle: which of the twelve ground-truth renders does an edit match?
"""
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
import torch

from src.compose.io import image_to_tensor
from src.compose.layers import luminance
from src.errors import InputValidationError
from src.minirelit.renderer import DEFAULT_AMBIENT, DEFAULT_INTENSITY, NUM_DIRECTIONS, LightSpec, render_relit
from src.minirelit.scene import SceneSpec


class OracleResult(NamedTuple):
    best_index: int
    rank: Optional[int]  # 1-based rank of the requested direction, None if none requested
    distances: List[float]


def rank_directions(distances: Sequence[float]) -> np.ndarray:
    """Direction indices sorted by distance; equal distances keep the lower index first"""
    return np.argsort(np.asarray(distances, dtype=np.float64), kind="stable")


def direction_oracle(
    edited: torch.Tensor,
    scene: SceneSpec,
    requested: Optional[int] = None,
    ambient: float = DEFAULT_AMBIENT,
    intensity: float = DEFAULT_INTENSITY,
) -> OracleResult:
    """
    Classify the light direction of an edited image against the scene's analytic renders

    Distances are luminance MSEs against render_relit(scene, i) for every i; the best
    index is the argmin, ties going to the lowest index.

    Args:
        edited: Linear RGB image (3, H, W)
        scene: Scene the edit was made from
        requested: Direction the edit was asked for; its rank is reported
        ambient: Ambient term the dataset was rendered with
        intensity: Light intensity the dataset was rendered with
    """
    if edited.dim() != 3 or tuple(edited.shape[-2:]) != (scene.size, scene.size):
        raise InputValidationError(
            f"edited image shape {tuple(edited.shape)} does not match a {scene.size}x{scene.size} scene"
        )
    if requested is not None and not 0 <= requested < NUM_DIRECTIONS:
        raise InputValidationError(f"requested direction must lie in [0, {NUM_DIRECTIONS}), got {requested}")

    target = luminance(edited.detach().cpu().double())
    distances = []
    for index in range(NUM_DIRECTIONS):
        render = render_relit(scene, LightSpec(direction_index=index, ambient=ambient, intensity=intensity))
        reference = luminance(image_to_tensor(render, dtype=torch.float64))
        distances.append(float(((target - reference) ** 2).mean()))

    order = rank_directions(distances)
    rank = None if requested is None else int(np.nonzero(order == requested)[0][0]) + 1
    return OracleResult(best_index=int(order[0]), rank=rank, distances=distances)
