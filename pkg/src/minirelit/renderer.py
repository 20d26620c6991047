"""
Lambertian renderer for height-field scenes

Pixel (row i, col j) sits at x = j + 0.5, y = size - (i + 0.5): x to the right, y up,
z out of the image toward the viewer. Only attached shading is modelled, no cast shadows.
"""
from typing import Tuple

import numpy as np
from pydantic import BaseModel, Field

from src.errors import InputValidationError
from .scene import SceneSpec

NUM_DIRECTIONS = 12
DEFAULT_ELEVATION_DEG = 45.0
DEFAULT_AMBIENT = 0.2
DEFAULT_INTENSITY = 1.0
DEFAULT_UNIFORM_LEVEL = 0.9


class LightSpec(BaseModel):
    """Directional light on the 12-position ring; azimuth follows from the index"""

    direction_index: int = Field(ge=0, lt=NUM_DIRECTIONS)
    elevation_deg: float = DEFAULT_ELEVATION_DEG
    intensity: float = Field(default=DEFAULT_INTENSITY, ge=0)
    ambient: float = Field(default=DEFAULT_AMBIENT, ge=0, le=1)

    @property
    def direction(self) -> np.ndarray:
        return light_direction(self.direction_index, self.elevation_deg)


def light_direction(index: int, elevation_deg: float = DEFAULT_ELEVATION_DEG) -> np.ndarray:
    """
    Unit vector pointing from the scene toward light number `index`

    Index 0 lights from the image top; indices advance counter-clockwise in 30 degree
    steps, so 3 lights from the left, 6 from the bottom and 9 from the right.

    Args:
        index: Direction index in [0, 12)
        elevation_deg: Elevation above the image plane

    Returns:
        (x, y, z) unit vector
    """
    if not 0 <= index < NUM_DIRECTIONS:
        raise InputValidationError(f"direction index must be in [0, {NUM_DIRECTIONS}), got {index}")
    azimuth = np.deg2rad(90.0 + 30.0 * index)
    elevation = np.deg2rad(elevation_deg)
    return np.array(
        [
            np.cos(azimuth) * np.cos(elevation),
            np.sin(azimuth) * np.cos(elevation),
            np.sin(elevation),
        ]
    )


def pixel_grid(size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Pixel-center coordinates (x, y), each size x size"""
    coords = np.arange(size, dtype=np.float64) + 0.5
    x = np.broadcast_to(coords[None, :], (size, size))
    y = np.broadcast_to((size - coords)[:, None], (size, size))
    return x, y


def height_at(scene: SceneSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Evaluate the height field at arbitrary points"""
    h = np.zeros(np.broadcast(x, y).shape)
    for blob in scene.blobs:
        r2 = (x - blob.center[0]) ** 2 + (y - blob.center[1]) ** 2
        h += blob.height * np.exp(-r2 / (2.0 * blob.sigma**2))
    return h


def height_and_normals(scene: SceneSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    Height field and unit surface normals on the pixel grid

    h(p) is a sum of gaussian bumps; n(p) = normalize(-dh/dx, -dh/dy, 1) with the
    gradient evaluated analytically.

    Returns:
        (height H x W, normals H x W x 3)
    """
    x, y = pixel_grid(scene.size)
    h = np.zeros((scene.size, scene.size))
    dh_dx = np.zeros_like(h)
    dh_dy = np.zeros_like(h)
    for blob in scene.blobs:
        dx = x - blob.center[0]
        dy = y - blob.center[1]
        s2 = blob.sigma**2
        bump = blob.height * np.exp(-(dx**2 + dy**2) / (2.0 * s2))
        h += bump
        dh_dx -= bump * dx / s2
        dh_dy -= bump * dy / s2

    normals = np.stack([-dh_dx, -dh_dy, np.ones_like(h)], axis=-1)
    normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
    return h, normals


def object_index_map(scene: SceneSpec) -> np.ndarray:
    """
    Which blob owns each pixel, -1 for background

    A pixel belongs to the blobs whose disc covers it; overlaps go to the blob that
    contributes most height there.
    """
    x, y = pixel_grid(scene.size)
    owner = np.full((scene.size, scene.size), -1, dtype=np.int64)
    best = np.full((scene.size, scene.size), -np.inf)
    for k, blob in enumerate(scene.blobs):
        r2 = (x - blob.center[0]) ** 2 + (y - blob.center[1]) ** 2
        contribution = blob.height * np.exp(-r2 / (2.0 * blob.sigma**2))
        take = (r2 <= blob.radius**2) & (contribution > best)
        owner[take] = k
        best[take] = contribution[take]
    return owner


def albedo_map(scene: SceneSpec) -> np.ndarray:
    """Per-pixel albedo, H x W x 3"""
    palette = np.array([scene.background_albedo] + [b.albedo for b in scene.blobs])
    return palette[object_index_map(scene) + 1]


def render_relit(scene: SceneSpec, light: LightSpec) -> np.ndarray:
    """
    Render a scene under one directional light

    out = albedo * (ambient + (1 - ambient) * intensity * max(0, n . l)), clipped to [0, 1]

    Returns:
        H x W x 3 linear RGB float64 image
    """
    _, normals = height_and_normals(scene)
    cosine = np.maximum(normals @ light.direction, 0.0)
    shading = light.ambient + (1.0 - light.ambient) * light.intensity * cosine
    return np.clip(albedo_map(scene) * shading[..., None], 0.0, 1.0)


def render_uniform(scene: SceneSpec, level: float = DEFAULT_UNIFORM_LEVEL) -> np.ndarray:
    """
    Render a scene under the shading-free panel light

    Returns:
        H x W x 3 linear RGB float64 image, albedo * level
    """
    if not 0.0 <= level <= 1.0:
        raise InputValidationError(f"uniform level must be in [0, 1], got {level}")
    return albedo_map(scene) * level
