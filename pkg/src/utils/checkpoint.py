"""
Checkpoint container: a flat binary file of named tensors behind a JSON header

    bytes 0-7    magic b"LYRLGHT\\0"
    bytes 8-15   header length N, unsigned little-endian
    bytes 16..   N bytes of UTF-8 JSON header
    then         tensor payloads, concatenated, offsets relative to the payload start

The header holds format_version, the model kind and constructor config, a
name -> {shape, dtype, offset, nbytes} table, plus training config, schedule
parameters and seed. See FORMAT.md.
"""
import importlib
import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import torch

from src.errors import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"LYRLGHT\0"
FORMAT_VERSION = 1

_DTYPES = {
    "float32": (torch.float32, np.float32),
    "float64": (torch.float64, np.float64),
    "int64": (torch.int64, np.int64),
}

# kind -> "module:Class"; classes take their `config` dict as keyword arguments
MODEL_KINDS = {
    "denoiser": "src.scorer.denoiser:Denoiser",
    "adapter": "src.scorer.adapter:ConditioningAdapter",
    "relight_generator": "src.distill.generator:LayerGenerator",
    "color_generator": "src.distill.generator:ColorLayerGenerator",
}


def _model_class(kind: str):
    if kind not in MODEL_KINDS:
        raise CheckpointError(f"unknown model kind '{kind}' in checkpoint header")
    module_name, class_name = MODEL_KINDS[kind].split(":")
    return getattr(importlib.import_module(module_name), class_name)


def _kind_of(model: torch.nn.Module) -> str:
    for kind, target in MODEL_KINDS.items():
        module_name, class_name = target.split(":")
        if type(model).__name__ == class_name and type(model).__module__ == module_name:
            return kind
    raise CheckpointError(f"cannot checkpoint a {type(model).__name__}")


def save_checkpoint(
    model: torch.nn.Module,
    path: Union[str, Path],
    training_config: Optional[Dict[str, Any]] = None,
    schedule: Optional[Dict[str, Any]] = None,
    seed: Optional[int] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    """
    Write a model's state_dict with a self-describing header

    Args:
        model: Any registered model kind
        path: Destination file
        training_config: Resolved hyperparameters of the run that produced the model
        schedule: Schedule parameters (DiffusionSchedule.to_dict)
        seed: Seed of the producing run
        extra: Additional JSON-serializable metadata (e.g. loss curve)

    Returns:
        The header that was written
    """
    tensors = {}
    table = {}
    offset = 0
    for name, tensor in model.state_dict().items():
        array = tensor.detach().cpu().contiguous().numpy()
        dtype_name = str(array.dtype)
        if dtype_name not in _DTYPES:
            raise CheckpointError(f"tensor '{name}' has unsupported dtype {dtype_name}")
        payload = array.tobytes()
        table[name] = {
            "shape": list(array.shape),
            "dtype": dtype_name,
            "offset": offset,
            "nbytes": len(payload),
        }
        tensors[name] = payload
        offset += len(payload)

    header = {
        "format_version": FORMAT_VERSION,
        "kind": _kind_of(model),
        "model_config": model.config,
        "tensors": table,
        "training_config": training_config or {},
        "schedule": schedule,
        "seed": seed,
        "extra": extra or {},
    }
    encoded = json.dumps(header, sort_keys=True).encode("utf-8")

    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(encoded)))
        f.write(encoded)
        for name in table:
            f.write(tensors[name])
    logger.info("Saved %s checkpoint (%d tensors, %d bytes) to %s", header["kind"], len(table), offset, path)
    return header


def _read(path: Union[str, Path]):
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:8] != MAGIC:
        raise CheckpointError(f"{path} is not a layerlight checkpoint")
    (header_len,) = struct.unpack("<Q", data[8:16])
    if 16 + header_len > len(data):
        raise CheckpointError(f"{path} is truncated inside the header")
    try:
        header = json.loads(data[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path} has a corrupt header: {e}") from e
    if not isinstance(header, dict) or "format_version" not in header:
        raise CheckpointError(f"{path} header has no format_version")
    if header["format_version"] != FORMAT_VERSION:
        raise CheckpointError(
            f"{path} has format_version {header['format_version']}, this build reads version {FORMAT_VERSION}"
        )
    return header, memoryview(data)[16 + header_len :]


def read_checkpoint_header(path: Union[str, Path]) -> Dict[str, Any]:
    """Validate a checkpoint's framing and return its header"""
    header, _ = _read(path)
    return header


def load_checkpoint(
    path: Union[str, Path], device: str = "cpu", expected_kind: Optional[str] = None
) -> torch.nn.Module:
    """
    Rebuild a model from a checkpoint, every tensor bit-exact

    Args:
        path: Checkpoint file
        device: Torch device for the rebuilt model
        expected_kind: If given, the header kind must match (e.g. "denoiser")

    Raises:
        CheckpointError: bad magic, corrupt header, version mismatch, unknown kind,
            missing / unexpected tensors or truncated payload
    """
    header, payload = _read(path)
    if expected_kind is not None and header.get("kind") != expected_kind:
        raise CheckpointError(f"{path} holds a {header.get('kind')} checkpoint, expected {expected_kind}")
    try:
        model = _model_class(header["kind"])(**header["model_config"])
        table = header["tensors"]
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"{path} header is incomplete: {e}") from e

    state = {}
    for name, entry in table.items():
        end = entry["offset"] + entry["nbytes"]
        if end > len(payload):
            raise CheckpointError(f"{path} is truncated: tensor '{name}' needs bytes up to {end}, file has {len(payload)}")
        if entry.get("dtype") not in _DTYPES:
            raise CheckpointError(f"{path} tensor '{name}' has unsupported dtype {entry.get('dtype')}")
        torch_dtype, np_dtype = _DTYPES[entry["dtype"]]
        try:
            array = np.frombuffer(payload[entry["offset"] : end], dtype=np_dtype).reshape(entry["shape"])
        except ValueError as e:
            raise CheckpointError(f"{path} tensor '{name}' does not match its declared shape: {e}") from e
        state[name] = torch.from_numpy(array.copy()).to(torch_dtype)

    expected = set(model.state_dict().keys())
    if set(state) != expected:
        missing = sorted(expected - set(state))
        unexpected = sorted(set(state) - expected)
        raise CheckpointError(f"{path} tensors do not match the model: missing {missing}, unexpected {unexpected}")
    model.load_state_dict(state)
    return model.to(device).eval()
