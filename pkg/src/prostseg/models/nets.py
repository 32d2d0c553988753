"""The six convolutional U-Net variants behind one parametric encoder-decoder.

Stage widths follow ``base * channel_growth ** level`` with the bottleneck
one level deeper than the encoder. The block kind (plain conv, dense,
recurrent-residual) and the presence of attention gates on the skip paths
are what distinguish the families. Dropout sites sit at the bottleneck
entry and at each decoder block entry, matching common Monte-Carlo dropout
placement for segmentation nets.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .blocks import AttentionGate, ConvBlock, DenseStage, RRBlock, UpConv, channel_dropout


class ConvUNet(nn.Module):
    def __init__(
        self,
        num_classes: int,
        depth: int = 4,
        base_channels: int = 32,
        channel_growth: int = 2,
        block_kind: str = "conv",
        attention: bool = False,
        dropout_rate: float = 0.3,
        dropout_sites: tuple[str, ...] = ("bottleneck", "decoder"),
        convs_per_block: int = 2,
        recurrence_steps: int = 2,
        growth_rate: int = 16,
        dense_layers: int = 4,
        norm: str = "group",
    ):
        super().__init__()
        if depth < 1:
            raise ValueError("depth must be >= 1")
        self.depth = depth
        self.attention = attention
        self.dropout_rate = dropout_rate
        self.drop_bottleneck = "bottleneck" in dropout_sites
        self.drop_decoder = "decoder" in dropout_sites

        def make_block(ch_in: int, ch_out: int) -> nn.Module:
            if block_kind == "conv":
                return ConvBlock(ch_in, ch_out, convs_per_block, norm)
            if block_kind == "dense":
                return DenseStage(ch_in, ch_out, growth_rate, dense_layers, norm)
            if block_kind == "r2":
                return RRBlock(ch_in, ch_out, recurrence_steps, norm)
            raise ValueError(f"unknown block kind {block_kind!r}")

        widths = [base_channels * channel_growth**i for i in range(depth + 1)]

        self.pool = nn.MaxPool2d(2)
        self.encoder = nn.ModuleList()
        ch = 1
        for w in widths[:-1]:
            self.encoder.append(make_block(ch, w))
            ch = w
        self.bottleneck = make_block(ch, widths[-1])

        self.ups = nn.ModuleList()
        self.gates = nn.ModuleList()
        self.decoder = nn.ModuleList()
        ch = widths[-1]
        for w in reversed(widths[:-1]):
            self.ups.append(UpConv(ch, w))
            if attention:
                self.gates.append(AttentionGate(w, w, max(w // 2, 1)))
            self.decoder.append(make_block(2 * w, w))
            ch = w
        self.head = nn.Conv2d(widths[0], num_classes, 1)

    def forward(self, x, generator: torch.Generator | None = None):
        skips = []
        for block in self.encoder:
            x = block(x)
            skips.append(x)
            x = self.pool(x)

        if self.drop_bottleneck:
            x = channel_dropout(x, self.dropout_rate, generator)
        x = self.bottleneck(x)

        for i, (up, block) in enumerate(zip(self.ups, self.decoder)):
            skip = skips[-(i + 1)]
            x = up(x)
            if self.attention:
                skip = self.gates[i](skip, x)
            x = torch.cat([skip, x], dim=1)
            if self.drop_decoder:
                x = channel_dropout(x, self.dropout_rate, generator)
            x = block(x)
        return self.head(x)
