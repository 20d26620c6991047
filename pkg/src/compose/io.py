"""
PNG persistence for images and luminosity layers

Images are stored as 8-bit sRGB PNGs and decoded to linear RGB on load. Layers are
stored as single-channel 16-bit PNGs with the fixed-point mapping
value = round(65535 * x).
"""
from pathlib import Path
from typing import Union

import numpy as np
import torch
from PIL import Image

from src.errors import InputValidationError
from .color import linear_to_srgb, srgb_to_linear

PathLike = Union[str, Path]

LAYER_SCALE = 65535


def image_to_tensor(img: np.ndarray, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Convert an H x W x 3 array to a 3 x H x W tensor"""
    if img.ndim != 3 or img.shape[2] != 3:
        raise InputValidationError(f"expected an H x W x 3 image, got shape {img.shape}")
    return torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1))).to(dtype)


def tensor_to_image(tensor: torch.Tensor) -> np.ndarray:
    """Convert a (1 x) 3 x H x W tensor to an H x W x 3 float64 array"""
    arr = tensor.detach().cpu().to(torch.float64)
    if arr.dim() == 4:
        if arr.shape[0] != 1:
            raise InputValidationError(f"cannot convert a batch of {arr.shape[0]} images")
        arr = arr[0]
    if arr.dim() != 3 or arr.shape[0] != 3:
        raise InputValidationError(f"expected a 3 x H x W tensor, got shape {tuple(arr.shape)}")
    return arr.numpy().transpose(1, 2, 0)


def encode_srgb8(linear: np.ndarray) -> np.ndarray:
    """Quantize a linear image to 8-bit sRGB codes"""
    return np.round(linear_to_srgb(linear) * 255.0).astype(np.uint8)


def write_png(path: PathLike, linear: np.ndarray) -> None:
    """
    Write a linear RGB image as an 8-bit sRGB PNG

    Args:
        path: Destination file
        linear: H x W x 3 array of linear values in [0, 1]
    """
    if linear.ndim != 3 or linear.shape[2] != 3:
        raise InputValidationError(f"expected an H x W x 3 image, got shape {linear.shape}")
    Image.fromarray(encode_srgb8(linear)).save(path, format="PNG")


def read_png(path: PathLike) -> np.ndarray:
    """
    Read an 8-bit sRGB PNG as a linear RGB image

    Returns:
        H x W x 3 float64 array in [0, 1]
    """
    with Image.open(path) as im:
        codes = np.asarray(im.convert("RGB"), dtype=np.float64)
    return srgb_to_linear(codes / 255.0)


def write_layer_png(path: PathLike, layer: np.ndarray) -> None:
    """
    Write a luminosity layer as a single-channel 16-bit PNG

    Args:
        path: Destination file
        layer: H x W (or H x W x 1) array in [0, 1]
    """
    arr = np.asarray(layer, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise InputValidationError(f"expected an H x W layer, got shape {arr.shape}")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise InputValidationError("layer values must lie in [0, 1]")
    codes = np.round(arr * LAYER_SCALE).astype(np.uint16)
    Image.fromarray(codes).save(path, format="PNG")


def read_layer_png(path: PathLike) -> np.ndarray:
    """
    Read a 16-bit single-channel layer PNG

    Returns:
        H x W float64 array, value = code / 65535
    """
    with Image.open(path) as im:
        codes = np.asarray(im).astype(np.float64)
    if codes.ndim != 2:
        raise InputValidationError(f"{path} is not a single-channel layer image")
    return codes / LAYER_SCALE
