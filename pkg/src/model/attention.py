# Attention primitives: SimAM, ECA and spatial attention
import math

import torch
import torch.nn as nn


def simam(x: torch.Tensor, e_lambda: float = 1e-4, per_channel: bool = False) -> torch.Tensor:
    """Parameter-free SimAM coefficients, same shape as x (B, C, H, W), values in (0, 1).

    1/e(t) = (t - mu)^2 / (4 (var + lambda)) + 1/2 with mu, var taken per channel
    over spatial positions. `per_channel` averages the energies over positions.
    """
    if e_lambda <= 0:
        raise ValueError(f"SimAM lambda must be positive, got {e_lambda}")
    n = max(x.shape[2] * x.shape[3] - 1, 1)
    deviation = (x - x.mean(dim=(2, 3), keepdim=True)).pow(2)
    variance = deviation.sum(dim=(2, 3), keepdim=True) / n
    inverse_energy = deviation / (4 * (variance + e_lambda)) + 0.5
    if per_channel:
        inverse_energy = inverse_energy.mean(dim=(2, 3), keepdim=True).expand_as(x)
    return torch.sigmoid(inverse_energy)


def eca_kernel_size(channels: int, gamma: int = 2, b: int = 1) -> int:
    """Largest odd integer <= |log2(C)/gamma + b/gamma|, at least 1."""
    t = int(abs(math.log2(channels) / gamma + b / gamma))
    k = t if t % 2 else t - 1
    return max(k, 1)


class ECA(nn.Module):
    """Efficient channel attention: pooled descriptors -> 1-D conv across channels -> sigmoid."""

    def __init__(self, channels: int, gamma: int = 2, b: int = 1):
        super().__init__()
        self.kernel_size = eca_kernel_size(channels, gamma, b)
        self.avg_pool = nn.AdaptiveAvgPool2d(1)
        # replicate padding keeps edge channels on the same footing as interior ones
        self.conv = nn.Conv1d(1, 1, self.kernel_size, padding=self.kernel_size // 2,
                              padding_mode="replicate", bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Coefficients of shape (B, C, 1, 1)."""
        y = self.avg_pool(x).squeeze(-1).transpose(-1, -2)
        y = self.conv(y).transpose(-1, -2).unsqueeze(-1)
        return torch.sigmoid(y)


class SpatialAttention(nn.Module):
    """Channel max and mean maps -> k x k conv -> sigmoid, shape (B, 1, H, W)."""

    def __init__(self, kernel_size: int = 7):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel_size, padding=kernel_size // 2, padding_mode="replicate", bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        max_map, _ = torch.max(x, dim=1, keepdim=True)
        mean_map = torch.mean(x, dim=1, keepdim=True)
        return torch.sigmoid(self.conv(torch.cat([max_map, mean_map], dim=1)))
