"""Procedural relighting dataset with analytic ground truth"""
from .dataset import (
    Manifest,
    ManifestRow,
    MiniRelitDataset,
    generate_dataset,
    load_scene,
)
from .renderer import (
    NUM_DIRECTIONS,
    LightSpec,
    albedo_map,
    height_and_normals,
    light_direction,
    render_relit,
    render_uniform,
)
from .scene import CATEGORY_NAMES, NUM_CATEGORIES, Blob, SceneSpec, sample_scene

__all__ = [
    "Manifest",
    "ManifestRow",
    "MiniRelitDataset",
    "generate_dataset",
    "load_scene",
    "NUM_DIRECTIONS",
    "LightSpec",
    "albedo_map",
    "height_and_normals",
    "light_direction",
    "render_relit",
    "render_uniform",
    "CATEGORY_NAMES",
    "NUM_CATEGORIES",
    "Blob",
    "SceneSpec",
    "sample_scene",
]
