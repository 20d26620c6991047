"""
Parametric 2.5D scenes: gaussian height bumps with per-object albedo
"""
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from src.errors import InputValidationError

SUPPORTED_SIZES = (32, 64, 128)

MAX_BLOBS = 4

# Shape families: blob count (1-4) x size class (small, large)
CATEGORY_NAMES = [
    "a small pebble",
    "two small pebbles",
    "three small pebbles",
    "four small pebbles",
    "a large dome",
    "two large domes",
    "three large domes",
    "four large domes",
]
NUM_CATEGORIES = len(CATEGORY_NAMES)

RGB = Tuple[float, float, float]


class Blob(BaseModel):
    """One gaussian bump, coordinates in pixels with x to the right and y up"""

    center: Tuple[float, float]
    radius: float = Field(gt=0)
    height: float = Field(gt=0)
    albedo: RGB

    @property
    def sigma(self) -> float:
        # the bump falls to exp(-2) of its peak at the object boundary
        return self.radius / 2.0


class SceneSpec(BaseModel):
    """Everything needed to re-render a scene analytically"""

    seed: int
    size: int
    blobs: List[Blob]
    background_albedo: RGB
    category_id: int = Field(ge=0, lt=NUM_CATEGORIES)

    @model_validator(mode="after")
    def _check_blobs(self) -> "SceneSpec":
        if not 1 <= len(self.blobs) <= MAX_BLOBS:
            raise ValueError(f"scene needs 1-{MAX_BLOBS} blobs, got {len(self.blobs)}")
        low, high = self.size / 8.0, self.size / 3.0
        for blob in self.blobs:
            if not low <= blob.radius <= high:
                raise ValueError(
                    f"blob radius {blob.radius:.3f} outside [{low:.3f}, {high:.3f}]"
                )
            if not all(0.05 <= c <= 0.95 for c in blob.albedo):
                raise ValueError(f"blob albedo {blob.albedo} outside [0.05, 0.95]")
        return self

    @property
    def category_name(self) -> str:
        return CATEGORY_NAMES[self.category_id]


def category_layout(category_id: int) -> Tuple[int, int]:
    """
    Map a category id to its (blob_count, size_class)

    size_class 0 draws radii from the lower half of [size/8, size/3], 1 from the upper half.
    """
    if not 0 <= category_id < NUM_CATEGORIES:
        raise InputValidationError(
            f"category_id must be in [0, {NUM_CATEGORIES}), got {category_id}"
        )
    return category_id % MAX_BLOBS + 1, category_id // MAX_BLOBS


def sample_scene(seed: int, size: int, category_id: int) -> SceneSpec:
    """
    Draw a scene deterministically from a seed

    Args:
        seed: Scene seed; equal seeds give identical scenes
        size: Square image size in pixels, one of 32, 64, 128
        category_id: Shape family in [0, NUM_CATEGORIES)

    Returns:
        SceneSpec with 1-4 blobs whose radii lie within [size/8, size/3]
    """
    if size not in SUPPORTED_SIZES:
        raise InputValidationError(f"size must be one of {SUPPORTED_SIZES}, got {size}")
    blob_count, size_class = category_layout(category_id)

    rng = np.random.default_rng(seed)
    r_min, r_max = size / 8.0, size / 3.0
    r_mid = 0.5 * (r_min + r_max)
    low, high = (r_min, r_mid) if size_class == 0 else (r_mid, r_max)

    blobs = []
    for _ in range(blob_count):
        radius = float(rng.uniform(low, high))
        center = rng.uniform(0.25 * size, 0.75 * size, size=2)
        blobs.append(
            Blob(
                center=(float(center[0]), float(center[1])),
                radius=radius,
                height=float(rng.uniform(0.5, 1.0)) * radius,
                albedo=tuple(float(c) for c in rng.uniform(0.05, 0.95, size=3)),
            )
        )
    background = tuple(float(c) for c in rng.uniform(0.2, 0.6, size=3))

    return SceneSpec(
        seed=seed,
        size=size,
        blobs=blobs,
        background_albedo=background,
        category_id=category_id,
    )
