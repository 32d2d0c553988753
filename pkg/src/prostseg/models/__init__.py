"""Declarative builders and a uniform forward contract for seven networks.

All families map a (B, 1, 256, 256) batch to per-pixel distributions over
the five classes. Randomness is explicit everywhere: building with the
same seed reproduces the same initial weights, and a stochastic forward is
a pure function of (weights, input, rng_seed).
"""

from __future__ import annotations

import hashlib
import io
import math
import json
import zipfile
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from ..domain import CANONICAL_SIZE, NUM_CLASSES, MriSlice, ProbabilityMap
from ..errors import ChecksumError, InvalidSpec, ParseError, ShapeError, SpecMismatch
from .nets import ConvUNet
from .swin import SwinUNet


class Family(str, Enum):
    UNET = "UNET"
    ATT_UNET = "ATT_UNET"
    DENSE_UNET = "DENSE_UNET"
    ATT_DENSE_UNET = "ATT_DENSE_UNET"
    R2_UNET = "R2_UNET"
    ATT_R2_UNET = "ATT_R2_UNET"
    SWIN_UNET = "SWIN_UNET"


ALL_FAMILIES: tuple[Family, ...] = tuple(Family)

_CONV_KIND = {
    Family.UNET: ("conv", False),
    Family.ATT_UNET: ("conv", True),
    Family.DENSE_UNET: ("dense", False),
    Family.ATT_DENSE_UNET: ("dense", True),
    Family.R2_UNET: ("r2", False),
    Family.ATT_R2_UNET: ("r2", True),
}


@dataclass(frozen=True)
class ArchitectureSpec:
    """Declarative description of one network variant.

    ``recurrence_steps`` applies to the R2 families, ``growth_rate`` and
    ``dense_layers`` to the dense families, ``window_size`` and
    ``patch_size`` to Swin; the rest ignore them. ``channel_growth`` and
    ``convs_per_block`` exist mainly to build tiny test miniatures.
    """

    family: Family
    depth: int = 4
    base_channels: int = 32
    dropout_rate: float = 0.3
    dropout_sites: tuple[str, ...] = ("bottleneck", "decoder")
    recurrence_steps: int = 2
    growth_rate: int = 16
    window_size: int = 8
    num_classes: int = NUM_CLASSES
    channel_growth: int = 2
    convs_per_block: int = 2
    dense_layers: int = 4
    patch_size: int = 4
    norm: str = "group"

    def __post_init__(self):
        if not isinstance(self.family, Family):
            object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "dropout_sites", tuple(self.dropout_sites))

    def validate(self) -> "ArchitectureSpec":
        if self.depth < 1:
            raise InvalidSpec("depth must be >= 1")
        if self.base_channels < 1:
            raise InvalidSpec("base_channels must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidSpec("dropout_rate must lie in [0, 1)")
        bad_sites = set(self.dropout_sites) - {"bottleneck", "decoder"}
        if bad_sites:
            raise InvalidSpec(f"unknown dropout sites {sorted(bad_sites)}")
        if self.recurrence_steps < 1:
            raise InvalidSpec("recurrence_steps must be >= 1")
        if self.channel_growth < 1:
            raise InvalidSpec("channel_growth must be >= 1")
        if self.norm not in ("group", "batch"):
            raise InvalidSpec(f"unknown norm {self.norm!r}")
        if self.family is Family.SWIN_UNET:
            if self.depth < 2:
                raise InvalidSpec("Swin needs at least 2 stages")
            if CANONICAL_SIZE % self.patch_size:
                raise InvalidSpec(f"patch_size must divide {CANONICAL_SIZE}")
            tokens = CANONICAL_SIZE // self.patch_size
            if tokens % (2 ** (self.depth - 1)):
                raise InvalidSpec("token grid must halve cleanly at every stage")
            bottleneck = self.bottleneck_size()
            if self.window_size < 1 or bottleneck % self.window_size:
                raise InvalidSpec(
                    f"window_size {self.window_size} must divide the bottleneck "
                    f"size {bottleneck}"
                )
        return self

    def bottleneck_size(self, input_size: int = CANONICAL_SIZE) -> int:
        """Spatial side length of the deepest feature grid."""
        if self.family is Family.SWIN_UNET:
            return input_size // self.patch_size // (2 ** (self.depth - 1))
        return input_size // (2**self.depth)

    def to_json(self) -> dict:
        return {
            "family": self.family.value,
            "depth": self.depth,
            "base_channels": self.base_channels,
            "dropout_rate": self.dropout_rate,
            "dropout_sites": list(self.dropout_sites),
            "recurrence_steps": self.recurrence_steps,
            "growth_rate": self.growth_rate,
            "window_size": self.window_size,
            "num_classes": self.num_classes,
            "channel_growth": self.channel_growth,
            "convs_per_block": self.convs_per_block,
            "dense_layers": self.dense_layers,
            "patch_size": self.patch_size,
            "norm": self.norm,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ArchitectureSpec":
        try:
            kwargs = dict(data)
            kwargs["family"] = Family(kwargs["family"])
            kwargs["dropout_sites"] = tuple(kwargs.get("dropout_sites", ()))
            return cls(**kwargs)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed architecture spec: {exc}") from exc


@dataclass
class ModelHandle:
    """A built network plus its spec and inference-time dropout switch.

    The module is shared between handles produced by ``set_stochastic``;
    weights are only mutated by training, which takes exclusive ownership.
    """

    spec: ArchitectureSpec
    module: nn.Module
    stochastic_mode: bool = False

    @property
    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.module.parameters())

    @property
    def version(self) -> str:
        return parameter_checksum(self)[:12]


def _init_weights(module: nn.Module, generator: torch.Generator) -> None:
    """He-uniform convs with fan-in uniform biases, truncated-normal linears.

    Zero conv biases stall convergence badly at small learning rates (whole
    channels sit exactly on the ReLU kink), so biases draw from the usual
    +-1/sqrt(fan_in) range instead.
    """
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.kaiming_uniform_(m.weight, a=math.sqrt(5), generator=generator)
            if m.bias is not None:
                fan_in = nn.init._calculate_fan_in_and_fan_out(m.weight)[0]
                bound = 1.0 / math.sqrt(fan_in) if fan_in > 0 else 0.0
                nn.init.uniform_(m.bias, -bound, bound, generator=generator)
        elif isinstance(m, nn.Linear):
            nn.init.trunc_normal_(m.weight, std=0.02, generator=generator)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, (nn.BatchNorm2d, nn.GroupNorm, nn.LayerNorm)):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)
    for name, param in module.named_parameters():
        if name.endswith("relative_position_bias_table"):
            nn.init.trunc_normal_(param, std=0.02, generator=generator)


def build_module(spec: ArchitectureSpec) -> nn.Module:
    if spec.family is Family.SWIN_UNET:
        return SwinUNet(
            num_classes=spec.num_classes,
            depth=spec.depth,
            base_channels=spec.base_channels,
            window=spec.window_size,
            patch=spec.patch_size,
            dropout_rate=spec.dropout_rate,
            dropout_sites=spec.dropout_sites,
        )
    kind, attention = _CONV_KIND[spec.family]
    return ConvUNet(
        num_classes=spec.num_classes,
        depth=spec.depth,
        base_channels=spec.base_channels,
        channel_growth=spec.channel_growth,
        block_kind=kind,
        attention=attention,
        dropout_rate=spec.dropout_rate,
        dropout_sites=spec.dropout_sites,
        convs_per_block=spec.convs_per_block,
        recurrence_steps=spec.recurrence_steps,
        growth_rate=spec.growth_rate,
        dense_layers=spec.dense_layers,
        norm=spec.norm,
    )


def build(spec: ArchitectureSpec, seed: int = 0) -> ModelHandle:
    """Construct and deterministically initialize a model.

    The same (spec, seed) always yields bitwise-identical weights.
    """
    spec.validate()
    module = build_module(spec)
    generator = torch.Generator().manual_seed(int(seed) & 0x7FFFFFFFFFFFFFFF)
    _init_weights(module, generator)
    module.eval()
    return ModelHandle(spec=spec, module=module, stochastic_mode=False)


def set_stochastic(handle: ModelHandle, flag: bool) -> ModelHandle:
    """Toggle dropout-at-inference; weights are untouched and shared."""
    return ModelHandle(spec=handle.spec, module=handle.module, stochastic_mode=bool(flag))


def _to_input_tensor(batch) -> torch.Tensor:
    if isinstance(batch, MriSlice):
        batch = [batch]
    if isinstance(batch, (list, tuple)) and batch and isinstance(batch[0], MriSlice):
        arr = np.stack([s.pixels for s in batch])
    else:
        arr = np.asarray(batch, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim == 4 and arr.shape[1] == 1:
            arr = arr[:, 0]
    if arr.ndim != 3 or arr.shape[1] != CANONICAL_SIZE or arr.shape[2] != CANONICAL_SIZE:
        raise ShapeError(
            f"expected (B, {CANONICAL_SIZE}, {CANONICAL_SIZE}) input, got {arr.shape}"
        )
    return torch.from_numpy(np.ascontiguousarray(arr, dtype=np.float32)).unsqueeze(1)


def forward(handle: ModelHandle, batch, rng_seed: int | None = None) -> list[ProbabilityMap]:
    """Run the network and return softmax-normalized per-pixel distributions.

    With ``stochastic_mode`` off the output depends only on (weights,
    input); with it on, also on ``rng_seed``, which is then required.
    """
    x = _to_input_tensor(batch)
    generator = None
    if handle.stochastic_mode:
        if rng_seed is None:
            raise ValueError("rng_seed is required when stochastic_mode is enabled")
        generator = torch.Generator().manual_seed(int(rng_seed) & 0x7FFFFFFFFFFFFFFF)
    handle.module.eval()
    with torch.no_grad():
        logits = handle.module(x, generator=generator)
        probs = torch.softmax(logits, dim=1)
    arr = probs.numpy()
    return [ProbabilityMap(probs=np.moveaxis(arr[i], 0, -1)) for i in range(arr.shape[0])]


def parameter_checksum(handle: ModelHandle) -> str:
    """Stable digest over all parameters and buffers, in definition order."""
    h = hashlib.sha256()
    state = handle.module.state_dict()
    for name in sorted(state):
        h.update(name.encode())
        h.update(state[name].numpy().tobytes())
    return h.hexdigest()


_ARCHIVE_SPEC = "spec.json"
_ARCHIVE_WEIGHTS = "weights.pt"
_ARCHIVE_CHECKSUM = "checksum.txt"


def save_weights(handle: ModelHandle, path: Path | str) -> Path:
    """Write a single archive of {spec JSON, parameter blob, checksum}."""
    path = Path(path)
    spec_bytes = json.dumps(handle.spec.to_json(), indent=2).encode()
    buf = io.BytesIO()
    torch.save(handle.module.state_dict(), buf)
    weight_bytes = buf.getvalue()
    digest = hashlib.sha256(spec_bytes + weight_bytes).hexdigest()

    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name, payload in (
            (_ARCHIVE_SPEC, spec_bytes),
            (_ARCHIVE_WEIGHTS, weight_bytes),
            (_ARCHIVE_CHECKSUM, digest.encode()),
        ):
            info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, payload)
    return path


def load_weights(path: Path | str, spec: ArchitectureSpec | None = None) -> ModelHandle:
    """Load an archive; verifies integrity and (optionally) the expected spec."""
    path = Path(path)
    try:
        with zipfile.ZipFile(path) as zf:
            spec_bytes = zf.read(_ARCHIVE_SPEC)
            weight_bytes = zf.read(_ARCHIVE_WEIGHTS)
            stored_digest = zf.read(_ARCHIVE_CHECKSUM).decode().strip()
    except (zipfile.BadZipFile, KeyError, OSError) as exc:
        raise ChecksumError(f"weight archive unreadable: {path} ({exc})") from exc

    actual = hashlib.sha256(spec_bytes + weight_bytes).hexdigest()
    if actual != stored_digest:
        raise ChecksumError(f"weight archive failed its integrity check: {path}")

    try:
        stored_spec = ArchitectureSpec.from_json(json.loads(spec_bytes))
    except json.JSONDecodeError as exc:
        raise ChecksumError(f"weight archive spec is corrupt: {exc}") from exc
    if spec is not None and stored_spec != spec:
        raise SpecMismatch(
            f"archive was built for {stored_spec.family.value}, requested "
            f"{spec.family.value} (or other fields differ)"
        )

    module = build_module(stored_spec)
    state = torch.load(io.BytesIO(weight_bytes), weights_only=True)
    module.load_state_dict(state)
    module.eval()
    return ModelHandle(spec=stored_spec, module=module, stochastic_mode=False)


__all__ = [
    "Family",
    "ALL_FAMILIES",
    "ArchitectureSpec",
    "ModelHandle",
    "build",
    "build_module",
    "forward",
    "set_stochastic",
    "save_weights",
    "load_weights",
    "parameter_checksum",
]
