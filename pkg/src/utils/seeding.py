"""
Seed handling for reproducible runs
"""
import hashlib
import random

import numpy as np
import torch


def seed_everything(seed: int) -> torch.Generator:
    """
    Seed python, numpy and torch, and return a dedicated torch generator

    Loops draw their noise, timesteps and shuffles from the returned generator so
    a fixed seed reproduces a run bit-for-bit on one device.
    """
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    generator = torch.Generator()
    generator.manual_seed(seed)
    return generator


def parameter_checksum(module: torch.nn.Module) -> str:
    """SHA-256 over every parameter and buffer, in state_dict order"""
    digest = hashlib.sha256()
    for name, tensor in module.state_dict().items():
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()
