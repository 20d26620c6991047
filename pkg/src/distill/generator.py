"""
Layer generators: a convolutional encoder shared by one or two decoder branches

The relighting generator emits a shading (multiply) and a lighting (divide) layer, each
through a sigmoid clipped to [0.1, 1]. The colorization generator emits one RGBA layer.
Final convolutions start with zero weights, so at initialization every pixel of a
layer holds the same value and the shading and lighting layers are equal.
"""
from typing import List, Sequence, Tuple

import torch
import torch.nn as nn

from src.compose.layers import LAYER_MAX, LAYER_MIN, RGBALayer

DEFAULT_CHANNELS = (16, 32, 64, 128)


def conv_block(in_channels: int, out_channels: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1),
        nn.ReLU(inplace=True),
        nn.Conv2d(out_channels, out_channels, kernel_size=3, padding=1),
        nn.ReLU(inplace=True),
    )


class Encoder(nn.Module):
    """Four conv blocks separated by 2x max-pooling"""

    def __init__(self, in_channels: int, channels: Sequence[int]):
        super().__init__()
        self.blocks = nn.ModuleList()
        previous = in_channels
        for ch in channels:
            self.blocks.append(conv_block(previous, ch))
            previous = ch
        self.pool = nn.MaxPool2d(2)

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        features = []
        for i, block in enumerate(self.blocks):
            x = block(x if i == 0 else self.pool(x))
            features.append(x)
        return features


class DecoderBranch(nn.Module):
    """Upsampling path with skip connections ending in a 1x1 projection to raw logits"""

    def __init__(self, channels: Sequence[int], out_channels: int, init_bias: Sequence[float]):
        super().__init__()
        self.upconvs = nn.ModuleList()
        self.blocks = nn.ModuleList()
        for i in reversed(range(1, len(channels))):
            self.upconvs.append(nn.ConvTranspose2d(channels[i], channels[i - 1], kernel_size=2, stride=2))
            self.blocks.append(conv_block(2 * channels[i - 1], channels[i - 1]))
        self.final_conv = nn.Conv2d(channels[0], out_channels, kernel_size=1)
        nn.init.zeros_(self.final_conv.weight)
        with torch.no_grad():
            self.final_conv.bias.copy_(torch.tensor(list(init_bias), dtype=torch.float32))

    def forward(self, features: List[torch.Tensor]) -> torch.Tensor:
        x = features[-1]
        for i, (upconv, block) in enumerate(zip(self.upconvs, self.blocks)):
            skip = features[-2 - i]
            x = block(torch.cat((upconv(x), skip), dim=1))
        return self.final_conv(x)


class LayerGenerator(nn.Module):
    """g_theta for relighting: base image -> (shade, light), both (B, 1, H, W) in [0.1, 1]"""

    def __init__(self, channels: Sequence[int] = DEFAULT_CHANNELS, init_logit: float = 2.0):
        """
        Args:
            channels: Encoder widths, default 16/32/64/128
            init_logit: Pre-sigmoid value both layers start at
        """
        super().__init__()
        self.config = {"channels": list(channels), "init_logit": init_logit}
        self.encoder = Encoder(3, channels)
        self.shade_branch = DecoderBranch(channels, 1, [init_logit])
        self.light_branch = DecoderBranch(channels, 1, [init_logit])

    def forward(self, base: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        features = self.encoder(base)
        shade = torch.sigmoid(self.shade_branch(features)).clamp(LAYER_MIN, LAYER_MAX)
        light = torch.sigmoid(self.light_branch(features)).clamp(LAYER_MIN, LAYER_MAX)
        return shade, light


class ColorLayerGenerator(nn.Module):
    """g_theta for colorization: sketch -> RGBA overlay, all channels in [0, 1]"""

    def __init__(self, channels: Sequence[int] = DEFAULT_CHANNELS, init_alpha_logit: float = -3.0):
        """
        Args:
            channels: Encoder widths, default 16/32/64/128
            init_alpha_logit: Pre-sigmoid alpha at initialization; the overlay starts nearly transparent
        """
        super().__init__()
        self.config = {"channels": list(channels), "init_alpha_logit": init_alpha_logit}
        self.encoder = Encoder(3, channels)
        self.branch = DecoderBranch(channels, 4, [0.0, 0.0, 0.0, init_alpha_logit])

    def forward(self, sketch: torch.Tensor) -> RGBALayer:
        raw = torch.sigmoid(self.branch(self.encoder(sketch)))
        return RGBALayer(rgb=raw[:, :3], alpha=raw[:, 3:])
