"""Color transfer and edit-restricting layer composition"""
from .color import srgb_to_linear, linear_to_srgb
from .io import (
    image_to_tensor,
    tensor_to_image,
    read_png,
    write_png,
    read_layer_png,
    write_layer_png,
)
from .layers import (
    LAYER_MIN,
    LAYER_MAX,
    LUMA_WEIGHTS,
    compose_relight,
    RGBALayer,
    compose_alpha,
    luminance,
    validate_image,
    validate_layer,
)

__all__ = [
    "srgb_to_linear",
    "linear_to_srgb",
    "image_to_tensor",
    "tensor_to_image",
    "read_png",
    "write_png",
    "read_layer_png",
    "write_layer_png",
    "LAYER_MIN",
    "LAYER_MAX",
    "LUMA_WEIGHTS",
    "compose_relight",
    "RGBALayer",
    "compose_alpha",
    "luminance",
    "validate_image",
    "validate_layer",
]
