# U-shaped decoder
from typing import List

import torch
import torch.nn as nn
import torch.nn.functional as F

from src.model.exchange import ConvBlock
from src.utils.errors import GeometryError


class UpStage(nn.Module):
    def __init__(self, in_channels: int, skip_channels: int, out_channels: int, dropout: float = 0.0):
        super().__init__()
        self.conv = ConvBlock(in_channels + skip_channels, out_channels)
        self.dropout = nn.Dropout(dropout) if dropout > 0 else nn.Identity()

    def forward(self, x: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        if x.shape[2:] != skip.shape[2:]:
            raise GeometryError(f"upsampled {tuple(x.shape[2:])} does not match skip {tuple(skip.shape[2:])}")
        return self.dropout(self.conv(torch.cat([x, skip], dim=1)))


class Decoder(nn.Module):
    """Four 2x up-stages with skip concatenation, then a 1x1 conv to class logits."""

    def __init__(self, widths: List[int], in_channels: int, num_classes: int, dropout: float = 0.0):
        super().__init__()
        stages = []
        channels = in_channels
        for skip_channels in reversed(widths[:-1]):
            stages.append(UpStage(channels, skip_channels, skip_channels, dropout))
            channels = skip_channels
        self.stages = nn.ModuleList(stages)
        self.head = nn.Conv2d(channels, num_classes, 1)

    def forward(self, fused: torch.Tensor, skips: List[torch.Tensor]) -> torch.Tensor:
        """`skips` ordered from stage 0 (full resolution) to stage 3."""
        if len(skips) != len(self.stages):
            raise GeometryError(f"decoder needs {len(self.stages)} skips, got {len(skips)}")
        x = fused
        for stage, skip in zip(self.stages, reversed(skips)):
            x = stage(x, skip)
        return self.head(x)
