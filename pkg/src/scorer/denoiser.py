"""
Convolutional encoder-decoder noise predictor

Images enter in model space, 2 * x - 1 for x in [0, 1]. The decoder accepts optional
residuals that are added to its skip features and to the middle features; the
conditioning adapter uses this hook.
"""
import logging
import math
from typing import List, Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from src.minirelit.renderer import NUM_DIRECTIONS
from src.minirelit.scene import NUM_CATEGORIES

logger = logging.getLogger(__name__)

DEFAULT_CHANNELS = (32, 64, 128, 128)


def to_model_space(img: torch.Tensor) -> torch.Tensor:
    """[0, 1] image -> [-1, 1]"""
    return img * 2.0 - 1.0


def from_model_space(z: torch.Tensor) -> torch.Tensor:
    """[-1, 1] -> [0, 1] image, clamped"""
    return ((z + 1.0) / 2.0).clamp(0.0, 1.0)


def group_norm(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(8 if channels % 8 == 0 else 1, channels)


def timestep_embedding(t: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """Sinusoidal embedding of integer timesteps, shape (B, dim)"""
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float32, device=t.device) / half)
    args = t.float()[:, None] * freqs[None, :]
    return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)


class ResBlock(nn.Module):
    """Two 3x3 convolutions with an additive embedding and a 1x1 skip"""

    def __init__(self, in_channels: int, out_channels: int, emb_dim: int):
        super().__init__()
        self.norm1 = group_norm(in_channels)
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.emb_proj = nn.Linear(emb_dim, out_channels)
        self.norm2 = group_norm(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1)
        self.skip = (
            nn.Identity() if in_channels == out_channels else nn.Conv2d(in_channels, out_channels, 1)
        )

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.emb_proj(F.silu(emb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class Denoiser(nn.Module):
    """
    Noise predictor eps_phi(x_t, t, direction, category)

    Four encoder stages (default 32/64/128/128 channels), a middle block and a mirrored
    decoder with skip connections. Direction and category embedding tables each carry
    one extra row used as the null token.
    """

    def __init__(
        self,
        channels: Sequence[int] = DEFAULT_CHANNELS,
        emb_dim: int = 128,
        num_directions: int = NUM_DIRECTIONS,
        num_categories: int = NUM_CATEGORIES,
    ):
        super().__init__()
        self.config = {
            "channels": list(channels),
            "emb_dim": emb_dim,
            "num_directions": num_directions,
            "num_categories": num_categories,
        }
        self.emb_dim = emb_dim
        self.time_mlp = nn.Sequential(
            nn.Linear(emb_dim, emb_dim), nn.SiLU(), nn.Linear(emb_dim, emb_dim)
        )
        self.direction_embedding = nn.Embedding(num_directions + 1, emb_dim)
        self.category_embedding = nn.Embedding(num_categories + 1, emb_dim)

        self.conv_in = nn.Conv2d(3, channels[0], 3, padding=1)
        self.encoder = nn.ModuleList()
        self.downsample = nn.ModuleList()
        previous = channels[0]
        for i, ch in enumerate(channels):
            self.encoder.append(ResBlock(previous, ch, emb_dim))
            previous = ch
            if i < len(channels) - 1:
                self.downsample.append(nn.Conv2d(ch, ch, 3, stride=2, padding=1))
        self.middle = ResBlock(previous, previous, emb_dim)

        self.decoder = nn.ModuleList()
        self.upsample = nn.ModuleList()
        for i in reversed(range(len(channels))):
            self.decoder.append(ResBlock(previous + channels[i], channels[i], emb_dim))
            previous = channels[i]
            if i > 0:
                self.upsample.append(nn.ConvTranspose2d(previous, previous, 2, stride=2))
        self.norm_out = group_norm(previous)
        self.conv_out = nn.Conv2d(previous, 3, 3, padding=1)

        # Optimizer steps taken so far; persisted with the weights
        self.register_buffer("train_steps", torch.zeros((), dtype=torch.long))

    @property
    def channels(self) -> List[int]:
        return list(self.config["channels"])

    @property
    def injection_channels(self) -> List[int]:
        """Channel count of each residual the decoder accepts: skips, then middle"""
        return self.channels + [self.channels[-1]]

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def embed(self, t: torch.Tensor, direction: torch.Tensor, category: torch.Tensor) -> torch.Tensor:
        """Joint timestep + condition embedding, shape (B, emb_dim)"""
        emb = self.time_mlp(timestep_embedding(t, self.emb_dim))
        return emb + self.direction_embedding(direction) + self.category_embedding(category)

    def encode(self, x: torch.Tensor, emb: torch.Tensor) -> List[torch.Tensor]:
        """Encoder stage outputs, highest resolution first"""
        h = self.conv_in(x)
        skips = []
        for i, block in enumerate(self.encoder):
            h = block(h, emb)
            skips.append(h)
            if i < len(self.downsample):
                h = self.downsample[i](h)
        return skips

    def forward(
        self,
        x_t: torch.Tensor,
        t: torch.Tensor,
        direction: torch.Tensor,
        category: torch.Tensor,
        residuals: Optional[List[torch.Tensor]] = None,
    ) -> torch.Tensor:
        """
        Predict the noise in x_t

        Args:
            x_t: Noised sample in model space (B, 3, H, W)
            t: Timesteps (B,)
            direction: Direction token ids (B,), NUM_DIRECTIONS for null
            category: Category token ids (B,), NUM_CATEGORIES for null
            residuals: Optional features added to each skip and to the middle block
                output, ordered as `injection_channels`

        Returns:
            Noise estimate, shape of x_t
        """
        emb = self.embed(t, direction, category)
        skips = self.encode(x_t, emb)
        h = self.middle(skips[-1], emb)
        if residuals is not None:
            skips = [s + r for s, r in zip(skips, residuals[:-1])]
            h = h + residuals[-1]

        for i, block in enumerate(self.decoder):
            h = block(torch.cat([h, skips[-1 - i]], dim=1), emb)
            if i < len(self.upsample):
                h = self.upsample[i](h)
        return self.conv_out(F.silu(self.norm_out(h)))

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """
        Mid-stage encoder activations of a clean image in model space, at t = 0 with null condition

        Used as a learned perceptual feature space for image distances.
        """
        batch = x.shape[0]
        device = x.device
        emb = self.embed(
            torch.zeros(batch, dtype=torch.long, device=device),
            torch.full((batch,), self.config["num_directions"], dtype=torch.long, device=device),
            torch.full((batch,), self.config["num_categories"], dtype=torch.long, device=device),
        )
        skips = self.encode(x, emb)
        return skips[len(skips) // 2]
