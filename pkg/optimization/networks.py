"""
Two-stream U-Net generator and 70x70 patch discriminator.

The generator shares one encoder between two decoders: one emits normal +
roughness, the other diffuse + specular. Both decoders climb back to the
input resolution, so every predicted map is the size of the input tile.
"""

import logging
from typing import Dict, List, Tuple

import torch
import torch.nn as nn

from core.models import ALPHA_MIN, LdrImage, SvbrdfMaps
from rendering.renderer import normalize_normals

logger = logging.getLogger(__name__)

ENCODER_DEPTH = 5
MIN_TILE_SIDE = 64
INIT_STD = 0.02


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _channel_plan(base_channels: int, max_channels: int, depth: int) -> List[int]:
    return [min(base_channels * 2 ** i, max_channels) for i in range(depth)]


def _down_block(in_channels: int, out_channels: int, stride: int = 2, normalize: bool = True) -> nn.Sequential:
    layers = [nn.Conv2d(in_channels, out_channels, 4, stride=stride, padding=1)]
    if normalize:
        layers.append(nn.InstanceNorm2d(out_channels))
    layers.append(nn.LeakyReLU(0.2))
    return nn.Sequential(*layers)


def _up_block(in_channels: int, out_channels: int) -> nn.Sequential:
    return nn.Sequential(
        nn.ConvTranspose2d(in_channels, out_channels, 4, stride=2, padding=1),
        nn.InstanceNorm2d(out_channels),
        nn.LeakyReLU(0.2),
    )


def init_weights(module: nn.Module, rng: torch.Generator, std: float = INIT_STD):
    """Normal(0, std) conv weights and zero biases, drawn from rng only."""
    for layer in module.modules():
        if isinstance(layer, (nn.Conv2d, nn.ConvTranspose2d)):
            with torch.no_grad():
                layer.weight.normal_(0.0, std, generator=rng)
                if layer.bias is not None:
                    layer.bias.zero_()


class _Decoder(nn.Module):
    """Mirrors the encoder with stride-2 up-convolutions and skip connections."""

    def __init__(self, channels: List[int], out_channels: int):
        super().__init__()
        blocks = [_up_block(channels[-1], channels[-2])]
        for level in range(len(channels) - 2, 0, -1):
            blocks.append(_up_block(channels[level] * 2, channels[level - 1]))
        self.blocks = nn.ModuleList(blocks)
        self.head = nn.ConvTranspose2d(channels[0] * 2, out_channels, 4, stride=2, padding=1)

    def forward(self, skips: List[torch.Tensor]) -> torch.Tensor:
        x = skips[-1]
        for block, skip in zip(self.blocks, reversed(skips[:-1])):
            x = torch.cat((block(x), skip), dim=1)
        return self.head(x)


class Generator(nn.Module):
    """
    Photo tile -> SVBRDF maps at the same resolution.

    Args:
        base_channels: Width of the first encoder block.
        max_channels: Width cap for deeper blocks (64 -> 512 by default).
    """

    def __init__(self, base_channels: int = 64, max_channels: int = 512):
        super().__init__()
        self.base_channels = base_channels
        self.max_channels = max_channels
        channels = _channel_plan(base_channels, max_channels, ENCODER_DEPTH)

        encoder = [_down_block(3, channels[0], normalize=False)]
        for level in range(1, ENCODER_DEPTH):
            encoder.append(_down_block(channels[level - 1], channels[level]))
        self.encoder = nn.ModuleList(encoder)
        self.decoder_nr = _Decoder(channels, out_channels=4)
        self.decoder_ds = _Decoder(channels, out_channels=4)

    def architecture(self) -> Dict[str, object]:
        return {'kind': 'generator', 'depth': ENCODER_DEPTH,
                'base_channels': self.base_channels, 'max_channels': self.max_channels}

    def forward(self, tile: LdrImage) -> SvbrdfMaps:
        batched = tile.dim() == 4
        x = (tile if batched else tile.unsqueeze(0)).permute(0, 3, 1, 2) * 2.0 - 1.0

        skips = []
        for block in self.encoder:
            x = block(x)
            skips.append(x)

        nr = self.decoder_nr(skips).permute(0, 2, 3, 1)
        ds = self.decoder_ds(skips).permute(0, 2, 3, 1)

        # +1 on z so an all-zero decoder output faces straight up.
        raw_normal = torch.cat((nr[..., :2], nr[..., 2:3] + 1.0), dim=-1)
        normal, degenerate = normalize_normals(raw_normal)
        if degenerate:
            logger.warning(f"Generator emitted {degenerate} zero normals, replaced with (0, 0, 1)")

        maps = SvbrdfMaps(
            diffuse=torch.sigmoid(ds[..., :3]),
            specular=torch.sigmoid(ds[..., 3:4]),
            roughness=ALPHA_MIN + (1.0 - ALPHA_MIN) * torch.sigmoid(nr[..., 3:4]),
            normal=normal,
            validate=False,
        )
        return maps if batched else maps.select(0)


def logit_grid_side(side: int) -> int:
    """Discriminator output side for a square input: three k4/s2 blocks then two k4/s1 convs."""
    for _ in range(3):
        side = (side + 2 - 4) // 2 + 1
    for _ in range(2):
        side = side + 2 - 4 + 1
    return side


def receptive_field() -> int:
    """Receptive field of one discriminator logit, walked back through the layers."""
    field = 1
    for kernel, stride in reversed([(4, 2), (4, 2), (4, 2), (4, 1), (4, 1)]):
        field = (field - 1) * stride + kernel
    return field


class Discriminator(nn.Module):
    """
    Patch discriminator emitting one real/fake logit per 70x70 receptive field.

    A 256 tile gives a 30x30 grid, a 64 tile a 6x6 grid.
    """

    def __init__(self, tile_size: int = 256, base_channels: int = 64, max_channels: int = 512):
        super().__init__()
        self.tile_size = tile_size
        self.base_channels = base_channels
        self.max_channels = max_channels
        channels = _channel_plan(base_channels, max_channels, 4)
        self.model = nn.Sequential(
            _down_block(3, channels[0], normalize=False),
            _down_block(channels[0], channels[1]),
            _down_block(channels[1], channels[2]),
            _down_block(channels[2], channels[3], stride=1),
            nn.Conv2d(channels[3], 1, 4, stride=1, padding=1),
        )

    def architecture(self) -> Dict[str, object]:
        return {'kind': 'patch_discriminator', 'tile_size': self.tile_size,
                'base_channels': self.base_channels, 'max_channels': self.max_channels}

    def forward(self, img: LdrImage) -> torch.Tensor:
        batched = img.dim() == 4
        x = (img if batched else img.unsqueeze(0)).permute(0, 3, 1, 2) * 2.0 - 1.0
        logits = self.model(x)[:, 0]
        return logits if batched else logits[0]


def architecture_spec(tile_size: int, base_channels: int = 64, max_channels: int = 512) -> Dict[str, Dict]:
    """The architecture dict init_params would produce, without building the networks."""
    return {
        'generator': {'kind': 'generator', 'depth': ENCODER_DEPTH,
                      'base_channels': base_channels, 'max_channels': max_channels},
        'discriminator': {'kind': 'patch_discriminator', 'tile_size': tile_size,
                          'base_channels': base_channels, 'max_channels': max_channels},
    }


def _check_square(img: torch.Tensor, what: str) -> int:
    height, width = img.shape[-3:-1]
    if height != width:
        raise ValueError(f"{what} must be square, got {height}x{width}")
    return height


def generator_forward(tile: LdrImage, generator: Generator) -> SvbrdfMaps:
    """
    Predict maps for a (H, W, 3) or (B, H, W, 3) tile.

    Raises:
        ValueError: Tile not square, or side not a power of two >= 64.
    """
    side = _check_square(tile, "tile")
    if not is_power_of_two(side) or side < MIN_TILE_SIDE:
        raise ValueError(f"tile side must be a power of two >= {MIN_TILE_SIDE}, got {side}")
    return generator(tile)


def discriminator_forward(img: LdrImage, discriminator: Discriminator) -> torch.Tensor:
    """
    Patch logits, (h, w) or (B, h, w), for images of the configured tile size.

    Raises:
        ValueError: Image side differs from the discriminator's tile size.
    """
    side = _check_square(img, "discriminator input")
    if side != discriminator.tile_size:
        raise ValueError(f"discriminator expects {discriminator.tile_size}px tiles, got {side}px")
    return discriminator(img)


def init_params(seed: int, tile_size: int = 256, base_channels: int = 64,
                max_channels: int = 512) -> Tuple[Generator, Discriminator]:
    """Build both networks with weights that depend only on seed and the architecture."""
    rng = torch.Generator().manual_seed(seed)
    generator = Generator(base_channels=base_channels, max_channels=max_channels)
    discriminator = Discriminator(tile_size=tile_size, base_channels=base_channels, max_channels=max_channels)
    init_weights(generator, rng)
    init_weights(discriminator, rng)
    logger.debug(f"Initialized networks from seed {seed}: "
                 f"{sum(p.numel() for p in generator.parameters()):,} generator parameters, "
                 f"{sum(p.numel() for p in discriminator.parameters()):,} discriminator parameters")
    return generator, discriminator
