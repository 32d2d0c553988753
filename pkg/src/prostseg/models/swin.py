"""Swin U-Net: windowed self-attention encoder-decoder over 4x4 patches.

Each stage runs two transformer blocks, the second with shifted windows;
patch merging halves resolution between encoder stages and patch expanding
mirrors it in the decoder. Attention masks for shifted windows are built
on the fly from the actual feature size, so the same module serves any
input whose bottleneck the window size divides.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .blocks import channel_dropout


def window_partition(x: torch.Tensor, window: int) -> torch.Tensor:
    """(B, H, W, C) -> (num_windows * B, window, window, C)."""
    B, H, W, C = x.shape
    x = x.view(B, H // window, window, W // window, window, C)
    return x.permute(0, 1, 3, 2, 4, 5).contiguous().view(-1, window, window, C)


def window_reverse(windows: torch.Tensor, window: int, H: int, W: int) -> torch.Tensor:
    """Inverse of ``window_partition``."""
    B = windows.shape[0] // (H * W // window // window)
    x = windows.view(B, H // window, W // window, window, window, -1)
    return x.permute(0, 1, 3, 2, 4, 5).contiguous().view(B, H, W, -1)


def _shifted_window_mask(H: int, W: int, window: int, shift: int, device, dtype):
    """Additive attention mask separating the wrapped regions of a shifted grid."""
    img = torch.zeros((1, H, W, 1), device=device)
    bounds = (slice(0, -window), slice(-window, -shift), slice(-shift, None))
    region = 0
    for hs in bounds:
        for ws in bounds:
            img[:, hs, ws, :] = region
            region += 1
    windows = window_partition(img, window).view(-1, window * window)
    diff = windows.unsqueeze(1) - windows.unsqueeze(2)
    mask = torch.zeros_like(diff, dtype=dtype)
    mask.masked_fill_(diff != 0, -100.0)
    return mask


class WindowAttention(nn.Module):
    """Multi-head self-attention within one window, with relative position bias."""

    def __init__(self, dim: int, window: int, num_heads: int):
        super().__init__()
        self.dim = dim
        self.window = window
        self.num_heads = num_heads
        self.scale = (dim // num_heads) ** -0.5

        self.relative_position_bias_table = nn.Parameter(
            torch.zeros((2 * window - 1) ** 2, num_heads)
        )
        coords = torch.stack(
            torch.meshgrid(torch.arange(window), torch.arange(window), indexing="ij")
        ).flatten(1)
        rel = coords[:, :, None] - coords[:, None, :]
        rel = rel.permute(1, 2, 0).contiguous()
        rel[:, :, 0] += window - 1
        rel[:, :, 1] += window - 1
        rel[:, :, 0] *= 2 * window - 1
        self.register_buffer("relative_position_index", rel.sum(-1), persistent=False)

        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)
        self.softmax = nn.Softmax(dim=-1)

    def forward(self, x, mask=None):
        B_, N, C = x.shape
        qkv = (
            self.qkv(x)
            .reshape(B_, N, 3, self.num_heads, C // self.num_heads)
            .permute(2, 0, 3, 1, 4)
        )
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q * self.scale) @ k.transpose(-2, -1)

        bias = self.relative_position_bias_table[
            self.relative_position_index.view(-1)
        ].view(N, N, -1)
        attn = attn + bias.permute(2, 0, 1).unsqueeze(0)

        if mask is not None:
            nW = mask.shape[0]
            attn = attn.view(B_ // nW, nW, self.num_heads, N, N) + mask.unsqueeze(1).unsqueeze(0)
            attn = attn.view(-1, self.num_heads, N, N)
        attn = self.softmax(attn)
        out = (attn @ v).transpose(1, 2).reshape(B_, N, C)
        return self.proj(out)


class SwinBlock(nn.Module):
    """LN -> (shifted) window attention -> LN -> MLP, both with residuals."""

    def __init__(self, dim: int, window: int, num_heads: int, shifted: bool, mlp_ratio: float = 2.0):
        super().__init__()
        self.window = window
        self.shifted = shifted
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, window, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x, size: tuple[int, int]):
        H, W = size
        B, L, C = x.shape
        shift = self.window // 2 if (self.shifted and H > self.window) else 0

        shortcut = x
        x = self.norm1(x).view(B, H, W, C)
        if shift:
            x = torch.roll(x, shifts=(-shift, -shift), dims=(1, 2))
            mask = _shifted_window_mask(H, W, self.window, shift, x.device, x.dtype)
        else:
            mask = None
        windows = window_partition(x, self.window).view(-1, self.window * self.window, C)
        windows = self.attn(windows, mask=mask)
        x = window_reverse(windows.view(-1, self.window, self.window, C), self.window, H, W)
        if shift:
            x = torch.roll(x, shifts=(shift, shift), dims=(1, 2))
        x = shortcut + x.view(B, L, C)
        return x + self.mlp(self.norm2(x))


class PatchMerging(nn.Module):
    """Halve resolution, double channels: concat 2x2 neighborhoods + linear."""

    def __init__(self, dim: int):
        super().__init__()
        self.norm = nn.LayerNorm(4 * dim)
        self.reduction = nn.Linear(4 * dim, 2 * dim, bias=False)

    def forward(self, x, size: tuple[int, int]):
        H, W = size
        B, L, C = x.shape
        x = x.view(B, H, W, C)
        parts = [x[:, i::2, j::2, :] for i, j in ((0, 0), (1, 0), (0, 1), (1, 1))]
        x = torch.cat(parts, dim=-1).view(B, (H // 2) * (W // 2), 4 * C)
        return self.reduction(self.norm(x)), (H // 2, W // 2)


class PatchExpand(nn.Module):
    """Double resolution, halve channels."""

    def __init__(self, dim: int):
        super().__init__()
        self.expand = nn.Linear(dim, 2 * dim, bias=False)
        self.norm = nn.LayerNorm(dim // 2)

    def forward(self, x, size: tuple[int, int]):
        H, W = size
        B, L, C = x.shape
        x = self.expand(x).view(B, H, W, 2, 2, C // 2)
        x = x.permute(0, 1, 3, 2, 4, 5).contiguous().view(B, (2 * H) * (2 * W), C // 2)
        return self.norm(x), (2 * H, 2 * W)


class FinalPatchExpand(nn.Module):
    """Expand by the patch size back to pixel resolution, keeping channels."""

    def __init__(self, dim: int, patch: int):
        super().__init__()
        self.patch = patch
        self.expand = nn.Linear(dim, patch * patch * dim, bias=False)
        self.norm = nn.LayerNorm(dim)

    def forward(self, x, size: tuple[int, int]):
        H, W = size
        p = self.patch
        B, L, C = x.shape
        x = self.expand(x).view(B, H, W, p, p, C)
        x = x.permute(0, 1, 3, 2, 4, 5).contiguous().view(B, (p * H) * (p * W), C)
        return self.norm(x), (p * H, p * W)


class SwinUNet(nn.Module):
    def __init__(
        self,
        num_classes: int,
        depth: int = 4,
        base_channels: int = 32,
        window: int = 8,
        patch: int = 4,
        dropout_rate: float = 0.3,
        dropout_sites: tuple[str, ...] = ("bottleneck", "decoder"),
        blocks_per_stage: int = 2,
    ):
        super().__init__()
        self.patch = patch
        self.window = window
        self.depth = depth
        self.dropout_rate = dropout_rate
        self.drop_bottleneck = "bottleneck" in dropout_sites
        self.drop_decoder = "decoder" in dropout_sites

        dims = [base_channels * 2**i for i in range(depth)]
        heads = [max(1, d // 32) for d in dims]

        self.embed = nn.Conv2d(1, dims[0], kernel_size=patch, stride=patch)
        self.embed_norm = nn.LayerNorm(dims[0])

        def stage(dim, nh):
            return nn.ModuleList(
                [SwinBlock(dim, window, nh, shifted=(b % 2 == 1)) for b in range(blocks_per_stage)]
            )

        self.enc_stages = nn.ModuleList(stage(d, h) for d, h in zip(dims[:-1], heads[:-1]))
        self.merges = nn.ModuleList(PatchMerging(d) for d in dims[:-1])
        self.bottleneck = stage(dims[-1], heads[-1])

        self.expands = nn.ModuleList(PatchExpand(d) for d in reversed(dims[1:]))
        self.fuses = nn.ModuleList(
            nn.Linear(2 * d, d, bias=False) for d in reversed(dims[:-1])
        )
        self.dec_stages = nn.ModuleList(stage(d, h) for d, h in zip(reversed(dims[:-1]), reversed(heads[:-1])))

        self.final_expand = FinalPatchExpand(dims[0], patch)
        self.head = nn.Conv2d(dims[0], num_classes, 1)

    def forward(self, x, generator: torch.Generator | None = None):
        B = x.shape[0]
        x = self.embed(x)
        C, H, W = x.shape[1], x.shape[2], x.shape[3]
        x = x.flatten(2).transpose(1, 2)
        x = self.embed_norm(x)
        size = (H, W)

        skips: list[tuple[torch.Tensor, tuple[int, int]]] = []
        for stage_blocks, merge in zip(self.enc_stages, self.merges):
            for block in stage_blocks:
                x = block(x, size)
            skips.append((x, size))
            x, size = merge(x, size)

        if self.drop_bottleneck:
            x = channel_dropout(x, self.dropout_rate, generator, token_layout=True)
        for block in self.bottleneck:
            x = block(x, size)

        for expand, fuse, stage_blocks, (skip, skip_size) in zip(
            self.expands, self.fuses, self.dec_stages, reversed(skips)
        ):
            x, size = expand(x, size)
            x = fuse(torch.cat([x, skip], dim=-1))
            if self.drop_decoder:
                x = channel_dropout(x, self.dropout_rate, generator, token_layout=True)
            for block in stage_blocks:
                x = block(x, size)

        x, size = self.final_expand(x, size)
        x = x.transpose(1, 2).view(B, -1, size[0], size[1])
        return self.head(x)
