"""Building blocks shared by the U-Net family variants.

Dropout here is always *seeded* channel dropout: a mask is drawn from an
explicit generator passed through the forward call, never from the global
RNG. Passing ``generator=None`` disables dropout entirely, which is how
deterministic inference works; training and Monte-Carlo inference pass a
seeded generator per step or per sample.
"""

from __future__ import annotations

import torch
import torch.nn as nn


def make_norm(kind: str, channels: int) -> nn.Module:
    """Normalization layer by name; group counts adapt to the channel count.

    Groups stay strictly below the channel count so per-channel offsets
    survive normalization; degenerating to instance norm would turn every
    preceding conv bias into an exact null direction.
    """
    if kind == "batch":
        return nn.BatchNorm2d(channels)
    if kind == "group":
        for groups in (8, 4, 2):
            if groups < channels and channels % groups == 0:
                return nn.GroupNorm(groups, channels)
        return nn.GroupNorm(1, channels)
    raise ValueError(f"unknown norm kind {kind!r}")


def channel_dropout(
    x: torch.Tensor,
    rate: float,
    generator: torch.Generator | None,
    token_layout: bool = False,
) -> torch.Tensor:
    """Spatial (channel-wise) dropout driven by an explicit generator.

    ``token_layout`` selects (B, L, C) tensors; default is (B, C, H, W).
    Identity when the generator is absent or the rate is zero.
    """
    if generator is None or rate <= 0.0:
        return x
    keep = 1.0 - rate
    if token_layout:
        shape = (x.shape[0], 1, x.shape[-1])
    else:
        shape = (x.shape[0], x.shape[1], 1, 1)
    mask = torch.rand(shape, generator=generator, dtype=x.dtype, device=x.device) < keep
    return x * mask.to(x.dtype) / keep


class ConvBlock(nn.Module):
    """``n`` times (3x3 conv, norm, ReLU)."""

    def __init__(self, ch_in: int, ch_out: int, n_convs: int = 2, norm: str = "group"):
        super().__init__()
        layers = []
        for i in range(n_convs):
            layers += [
                nn.Conv2d(ch_in if i == 0 else ch_out, ch_out, 3, padding=1),
                make_norm(norm, ch_out),
                nn.ReLU(inplace=True),
            ]
        self.body = nn.Sequential(*layers)

    def forward(self, x):
        return self.body(x)


class UpConv(nn.Module):
    """2x transposed-conv upsampling."""

    def __init__(self, ch_in: int, ch_out: int):
        super().__init__()
        self.up = nn.ConvTranspose2d(ch_in, ch_out, kernel_size=2, stride=2)

    def forward(self, x):
        return self.up(x)


class AttentionGate(nn.Module):
    """Additive attention gate rescaling skip features.

    The gating signal comes from the coarser decoder level (already
    upsampled to the skip resolution); the sigmoid output ``psi`` is the
    per-pixel attention coefficient in [0, 1].
    """

    def __init__(self, skip_channels: int, gate_channels: int, inter_channels: int):
        super().__init__()
        self.theta_x = nn.Conv2d(skip_channels, inter_channels, 1)
        self.phi_g = nn.Conv2d(gate_channels, inter_channels, 1)
        self.relu = nn.ReLU(inplace=True)
        self.psi = nn.Sequential(nn.Conv2d(inter_channels, 1, 1), nn.Sigmoid())

    def forward(self, skip, gate):
        alpha = self.psi(self.relu(self.theta_x(skip) + self.phi_g(gate)))
        return skip * alpha


class RecurrentConv(nn.Module):
    """One 3x3 conv applied recurrently: step i feeds x + state back in.

    ``steps=1`` degenerates to a single convolution pass.
    """

    def __init__(self, channels: int, steps: int, norm: str = "group"):
        super().__init__()
        if steps < 1:
            raise ValueError("recurrence steps must be >= 1")
        self.steps = steps
        self.conv = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1),
            make_norm(norm, channels),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        state = self.conv(x)
        for _ in range(self.steps - 1):
            state = self.conv(x + state)
        return state


class RRBlock(nn.Module):
    """Recurrent-residual block: 1x1 projection, two recurrent convs, shortcut."""

    def __init__(self, ch_in: int, ch_out: int, steps: int = 2, norm: str = "group"):
        super().__init__()
        self.project = nn.Conv2d(ch_in, ch_out, 1)
        self.body = nn.Sequential(
            RecurrentConv(ch_out, steps, norm), RecurrentConv(ch_out, steps, norm)
        )

    def forward(self, x):
        x = self.project(x)
        return x + self.body(x)


class DenseBlock(nn.Module):
    """Dense block: each layer sees the concat of all previous feature maps.

    Output channel count is exactly ``ch_in + n_layers * growth``.
    """

    def __init__(self, ch_in: int, growth: int, n_layers: int, norm: str = "group"):
        super().__init__()
        self.layers = nn.ModuleList()
        ch = ch_in
        for _ in range(n_layers):
            self.layers.append(
                nn.Sequential(
                    make_norm(norm, ch),
                    nn.ReLU(inplace=True),
                    nn.Conv2d(ch, growth, 3, padding=1),
                )
            )
            ch += growth
        self.out_channels = ch

    def forward(self, x):
        for layer in self.layers:
            x = torch.cat([x, layer(x)], dim=1)
        return x


class DenseStage(nn.Module):
    """Dense block followed by a 1x1 transition to the stage width."""

    def __init__(self, ch_in: int, ch_out: int, growth: int, n_layers: int, norm: str = "group"):
        super().__init__()
        self.dense = DenseBlock(ch_in, growth, n_layers, norm)
        self.transition = nn.Sequential(
            nn.Conv2d(self.dense.out_channels, ch_out, 1),
            make_norm(norm, ch_out),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.transition(self.dense(x))
