# Modality-adaptive encoder: fixed (FEM) and adaptive (AEM) exchange stages
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import torch
import torch.nn as nn

from src.model.attention import ECA, SpatialAttention, simam
from src.utils.config import ModelConfig
from src.utils.errors import GeometryError


class ConvBlock(nn.Module):
    """Two 3x3 convolutions, each followed by batch normalization and ReLU."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(in_channels, out_channels, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_channels),
            nn.ReLU(inplace=True),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.block(x)


def exchange_mixture(coefficients: torch.Tensor, x_t1w: torch.Tensor, x_fa: torch.Tensor) -> torch.Tensor:
    """coefficients * x_t1w + (1 - coefficients) * x_fa.

    Written as x_fa + c * (x_t1w - x_fa) so equal inputs come back bit-exact.
    """
    return x_fa + coefficients * (x_t1w - x_fa)


def _check_pair(x_t1w: torch.Tensor, x_fa: torch.Tensor):
    if x_t1w.shape != x_fa.shape:
        raise GeometryError(f"modality features differ in shape: {tuple(x_t1w.shape)} vs {tuple(x_fa.shape)}")


class FixedExchange(nn.Module):
    """FEM: SimAM coefficients from the summed features weight the T1w branch."""

    def __init__(self, in_channels: int, out_channels: int, e_lambda: float = 1e-4, per_channel: bool = False):
        super().__init__()
        self.e_lambda = e_lambda
        self.per_channel = per_channel
        self.pool = nn.MaxPool2d(2)
        self.conv = ConvBlock(in_channels, out_channels)

    def coefficients(self, x_t1w: torch.Tensor, x_fa: torch.Tensor) -> torch.Tensor:
        return simam(x_t1w + x_fa, self.e_lambda, self.per_channel)

    def forward(self, x_t1w: torch.Tensor, x_fa: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        _check_pair(x_t1w, x_fa)
        s = self.coefficients(x_t1w, x_fa)
        return self.conv(self.pool(exchange_mixture(s, x_t1w, x_fa))), s


class AdaptiveExchange(nn.Module):
    """AEM: spatial attention over ECA-reweighted summed features drives the FA branch."""

    def __init__(self, in_channels: int, out_channels: int, gamma: int = 2, b: int = 1,
                 sa_kernel: int = 7, swap_mixture: bool = False):
        super().__init__()
        self.eca = ECA(in_channels, gamma, b)
        self.sa = SpatialAttention(sa_kernel)
        self.swap_mixture = swap_mixture
        self.pool = nn.MaxPool2d(2)
        self.conv = ConvBlock(in_channels, out_channels)

    def coefficients(self, x_t1w: torch.Tensor, x_fa: torch.Tensor) -> torch.Tensor:
        x_input = x_t1w + x_fa
        return self.sa(self.eca(x_input) * x_input)

    def forward(self, x_t1w: torch.Tensor, x_fa: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        _check_pair(x_t1w, x_fa)
        e = self.coefficients(x_t1w, x_fa)
        if self.swap_mixture:
            mixed = exchange_mixture(e, x_fa, x_t1w)
        else:
            mixed = exchange_mixture(e, x_t1w, x_fa)
        return self.conv(self.pool(mixed)), e


class PlainStage(nn.Module):
    """No exchange: ConvBlock(MaxPool(x)) on a single branch."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.pool = nn.MaxPool2d(2)
        self.conv = ConvBlock(in_channels, out_channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(self.pool(x))


@dataclass
class EncoderState:
    """Per-stage feature pairs (stage 0 = stem) and the exchange coefficients of stages 0..3."""

    features: List[Tuple[torch.Tensor, torch.Tensor]] = field(default_factory=list)
    s_coefficients: List[Optional[torch.Tensor]] = field(default_factory=list)
    e_coefficients: List[Optional[torch.Tensor]] = field(default_factory=list)

    @property
    def exchange_pairs(self) -> List[Tuple[Optional[torch.Tensor], Optional[torch.Tensor]]]:
        return list(zip(self.s_coefficients, self.e_coefficients))

    def skips(self) -> List[torch.Tensor]:
        """Skip features Xi_T1w + Xi_FA for stages 0..3, shared by both decoders."""
        return [t1w + fa for t1w, fa in self.features[:-1]]


class ModalityEncoder(nn.Module):
    """Stem ConvBlock per modality followed by four exchange stages."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        widths = config.widths
        self.stem_t1w = ConvBlock(config.in_channels, widths[0])
        self.stem_fa = ConvBlock(config.in_channels, widths[0])
        self.t1w_stages = nn.ModuleList()
        self.fa_stages = nn.ModuleList()
        for c_in, c_out in zip(widths[:-1], widths[1:]):
            if config.use_fem:
                self.t1w_stages.append(FixedExchange(c_in, c_out, config.simam_lambda, config.simam_per_channel))
            else:
                self.t1w_stages.append(PlainStage(c_in, c_out))
            if config.use_aem:
                self.fa_stages.append(AdaptiveExchange(c_in, c_out, config.eca_gamma, config.eca_b,
                                                       config.sa_kernel, config.swap_aem_mixture))
            else:
                self.fa_stages.append(PlainStage(c_in, c_out))

    def forward(self, x_t1w: torch.Tensor, x_fa: torch.Tensor) -> EncoderState:
        _, _, state = mem_forward(self, self.stem_t1w(x_t1w), self.stem_fa(x_fa))
        return state


def mem_forward(encoder: ModalityEncoder, x0_t1w: torch.Tensor, x0_fa: torch.Tensor):
    """Run the four exchange stages from stem features: returns (X4_T1w, X4_FA, state)."""
    state = EncoderState(features=[(x0_t1w, x0_fa)])
    t1w, fa = x0_t1w, x0_fa
    for t1w_stage, fa_stage in zip(encoder.t1w_stages, encoder.fa_stages):
        s = e = None
        if isinstance(t1w_stage, FixedExchange):
            next_t1w, s = t1w_stage(t1w, fa)
        else:
            next_t1w = t1w_stage(t1w)
        if isinstance(fa_stage, AdaptiveExchange):
            next_fa, e = fa_stage(t1w, fa)
        else:
            next_fa = fa_stage(fa)
        state.s_coefficients.append(s)
        state.e_coefficients.append(e)
        t1w, fa = next_t1w, next_fa
        state.features.append((t1w, fa))
    return t1w, fa, state
