# Cross-fusion of the deepest modality features
from typing import Tuple, Union

import torch
import torch.nn as nn

from src.utils.errors import GeometryError

Attention = Tuple[torch.Tensor, torch.Tensor]


class CrossFusion(nn.Module):
    """Bidirectional cross-attention over spatial positions, concatenation, 1x1 mix.

    T1w queries attend to FA keys/values and vice versa; each result is added
    back to its source before the two are concatenated channel-wise. The module
    keeps no per-call state.
    """

    def __init__(self, channels: int, out_channels: int, heads: int = 1):
        super().__init__()
        self.t1w_to_fa = nn.MultiheadAttention(channels, heads, batch_first=True)
        self.fa_to_t1w = nn.MultiheadAttention(channels, heads, batch_first=True)
        self.mix = nn.Conv2d(2 * channels, out_channels, 1)

    def concatenated(self, x_t1w: torch.Tensor, x_fa: torch.Tensor, return_attention: bool = False
                     ) -> Union[torch.Tensor, Tuple[torch.Tensor, Attention]]:
        """Residual cross-attended features, (B, 2C, H, W) before the 1x1 mix.

        With `return_attention` the (T1w->FA, FA->T1w) weight maps, each
        (B, HW, HW), come back alongside the features.
        """
        if x_t1w.shape != x_fa.shape:
            raise GeometryError(f"fusion inputs differ in shape: {tuple(x_t1w.shape)} vs {tuple(x_fa.shape)}")
        b, c, h, w = x_t1w.shape
        t1w = x_t1w.flatten(2).transpose(1, 2)
        fa = x_fa.flatten(2).transpose(1, 2)
        t1w_att, t1w_weights = self.t1w_to_fa(t1w, fa, fa, need_weights=return_attention)
        fa_att, fa_weights = self.fa_to_t1w(fa, t1w, t1w, need_weights=return_attention)
        t1w = (t1w + t1w_att).transpose(1, 2).reshape(b, c, h, w)
        fa = (fa + fa_att).transpose(1, 2).reshape(b, c, h, w)
        fused = torch.cat([t1w, fa], dim=1)
        if return_attention:
            return fused, (t1w_weights, fa_weights)
        return fused

    def forward(self, x_t1w: torch.Tensor, x_fa: torch.Tensor, return_attention: bool = False
                ) -> Union[torch.Tensor, Tuple[torch.Tensor, Attention]]:
        if return_attention:
            fused, weights = self.concatenated(x_t1w, x_fa, return_attention=True)
            return self.mix(fused), weights
        return self.mix(self.concatenated(x_t1w, x_fa))
