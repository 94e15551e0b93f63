"""Network definitions: a small 2-D U-Net and a slice-region classifier."""

from __future__ import annotations

import torch
from torch import nn

N_SEG_CLASSES = 4
N_REGIONS = 4
MAX_CHANNELS = 256


def _conv_block(in_ch: int, out_ch: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, 3, padding=1),
        nn.InstanceNorm2d(out_ch, affine=True),
        nn.LeakyReLU(0.01),
        nn.Conv2d(out_ch, out_ch, 3, padding=1),
        nn.InstanceNorm2d(out_ch, affine=True),
        nn.LeakyReLU(0.01),
    )


class UNet2D(nn.Module):
    """Encoder-decoder with skip connections; ``depth`` counts resolution levels."""

    def __init__(self, depth: int = 4, base_channels: int = 16, in_channels: int = 1,
                 n_classes: int = N_SEG_CLASSES):
        super().__init__()
        if depth < 2:
            raise ValueError("depth must be >= 2")
        chans = [min(base_channels * 2**i, MAX_CHANNELS) for i in range(depth)]
        self.depth = depth
        self.encoders = nn.ModuleList()
        prev = in_channels
        for c in chans:
            self.encoders.append(_conv_block(prev, c))
            prev = c
        self.pool = nn.MaxPool2d(2)
        self.ups = nn.ModuleList()
        self.decoders = nn.ModuleList()
        for lo, hi in zip(reversed(chans[:-1]), reversed(chans[1:])):
            self.ups.append(nn.ConvTranspose2d(hi, lo, 2, stride=2))
            self.decoders.append(_conv_block(2 * lo, lo))
        self.head = nn.Conv2d(chans[0], n_classes, 1)

    @property
    def size_multiple(self) -> int:
        return 2 ** (self.depth - 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        skips = []
        for i, enc in enumerate(self.encoders):
            x = enc(x)
            if i < self.depth - 1:
                skips.append(x)
                x = self.pool(x)
        for up, dec in zip(self.ups, self.decoders):
            x = up(x)
            x = dec(torch.cat([x, skips.pop()], dim=1))
        return self.head(x)


class RegionClassifier(nn.Module):
    """Stacked conv/pool blocks over a fixed 64x64 input, linear head over 4 regions."""

    input_size = 64

    def __init__(self, conv_blocks: int = 4, channels: int = 16, n_classes: int = N_REGIONS):
        super().__init__()
        if conv_blocks < 2:
            raise ValueError("conv_blocks must be >= 2")
        layers: list[nn.Module] = []
        prev = 1
        for i in range(conv_blocks):
            c = min(channels * 2**i, MAX_CHANNELS)
            layers += [
                nn.Conv2d(prev, c, 3, padding=1),
                nn.InstanceNorm2d(c, affine=True),
                nn.ReLU(),
                nn.MaxPool2d(2),
            ]
            prev = c
        self.features = nn.Sequential(*layers)
        side = self.input_size // 2**conv_blocks
        self.head = nn.Linear(prev * side * side, n_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(torch.flatten(self.features(x), 1))
