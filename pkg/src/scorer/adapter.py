"""
Image-conditioning adapter for a frozen denoiser

A small trainable encoder reads the noised sample together with the condition image
and produces one residual per decoder injection point of the frozen denoiser. Every
residual passes through a zero-initialized 1x1 convolution, so an untrained adapter
returns exact zeros and the combined model equals the frozen denoiser.
"""
from typing import List, Sequence

import torch
import torch.nn as nn

from .denoiser import Denoiser, ResBlock


def zero_module(module: nn.Module) -> nn.Module:
    """Zero every parameter of a module in place"""
    for p in module.parameters():
        nn.init.zeros_(p)
    return module


def zero_conv(in_channels: int, out_channels: int) -> nn.Conv2d:
    return zero_module(nn.Conv2d(in_channels, out_channels, 1))


class ConditioningAdapter(nn.Module):
    """
    Residual generator eps_c(x_t | t, c, x_cond) attached to a frozen Denoiser

    The adapter reuses the denoiser's timestep + condition embedding and mirrors its
    stage layout at a fraction of the width.
    """

    def __init__(
        self,
        injection_channels: Sequence[int],
        emb_dim: int = 128,
        width_divisor: int = 4,
        hint_channels: int = 3,
    ):
        """
        Args:
            injection_channels: Residual channel counts, one per encoder stage plus the middle
            emb_dim: Embedding width of the host denoiser
            width_divisor: Adapter stage width = host stage width // width_divisor
            hint_channels: Channels of the condition image
        """
        super().__init__()
        self.config = {
            "injection_channels": list(injection_channels),
            "emb_dim": emb_dim,
            "width_divisor": width_divisor,
            "hint_channels": hint_channels,
        }
        stage_channels = [max(ch // width_divisor, 8) for ch in injection_channels[:-1]]

        self.conv_in = nn.Conv2d(3 + hint_channels, stage_channels[0], 3, padding=1)
        self.blocks = nn.ModuleList()
        self.downsample = nn.ModuleList()
        previous = stage_channels[0]
        for i, ch in enumerate(stage_channels):
            self.blocks.append(ResBlock(previous, ch, emb_dim))
            previous = ch
            if i < len(stage_channels) - 1:
                self.downsample.append(nn.Conv2d(ch, ch, 3, stride=2, padding=1))
        self.middle = ResBlock(previous, previous, emb_dim)

        self.zero_convs = nn.ModuleList(
            zero_conv(ch, out) for ch, out in zip(stage_channels, injection_channels[:-1])
        )
        self.middle_zero_conv = zero_conv(previous, injection_channels[-1])

        self.register_buffer("train_steps", torch.zeros((), dtype=torch.long))

    @classmethod
    def for_denoiser(cls, denoiser: Denoiser, width_divisor: int = 4) -> "ConditioningAdapter":
        return cls(denoiser.injection_channels, emb_dim=denoiser.emb_dim, width_divisor=width_divisor)

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def forward(self, x_t: torch.Tensor, emb: torch.Tensor, hint: torch.Tensor) -> List[torch.Tensor]:
        """
        Residuals for the host decoder

        Args:
            x_t: Noised sample in model space (B, 3, H, W)
            emb: Host embedding from Denoiser.embed (B, emb_dim)
            hint: Condition image in model space (B, hint_channels, H, W)

        Returns:
            One tensor per injection point, skips first, middle last
        """
        h = self.conv_in(torch.cat([x_t, hint], dim=1))
        residuals = []
        for i, block in enumerate(self.blocks):
            h = block(h, emb)
            residuals.append(self.zero_convs[i](h))
            if i < len(self.downsample):
                h = self.downsample[i](h)
        h = self.middle(h, emb)
        residuals.append(self.middle_zero_conv(h))
        return residuals


def predict_with_adapter(
    denoiser: Denoiser,
    adapter: ConditioningAdapter,
    x_t: torch.Tensor,
    t: torch.Tensor,
    direction: torch.Tensor,
    category: torch.Tensor,
    hint: torch.Tensor,
) -> torch.Tensor:
    """Noise estimate of the denoiser with adapter residuals injected"""
    emb = denoiser.embed(t, direction, category)
    residuals = adapter(x_t, emb, hint)
    return denoiser(x_t, t, direction, category, residuals=residuals)
