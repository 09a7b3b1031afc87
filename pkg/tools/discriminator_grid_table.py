#!/usr/bin/env python3
"""
Discriminator Logit Grid Table
Prints the patch-discriminator output grid for each tile side, computed from
the layer arithmetic and confirmed with a real forward pass.
"""

import os
import sys
from typing import Dict, List, Sequence

import torch

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from optimization.networks import Discriminator, discriminator_forward, logit_grid_side, receptive_field

DEFAULT_SIDES = (64, 128, 256, 512, 1024)


def grid_table(sides: Sequence[int] = DEFAULT_SIDES, base_channels: int = 8) -> List[Dict[str, int]]:
    """One row per side: predicted grid, measured grid and receptive field."""
    rows = []
    for side in sides:
        discriminator = Discriminator(tile_size=side, base_channels=base_channels, max_channels=base_channels * 8)
        with torch.no_grad():
            logits = discriminator_forward(torch.zeros(side, side, 3), discriminator)
        rows.append({
            'side': side,
            'predicted': logit_grid_side(side),
            'measured': int(logits.shape[-1]),
            'receptive_field': receptive_field(),
        })
    return rows


def main():
    print("🔎 Patch discriminator logit grid")
    print("=" * 60)
    print(f"{'tile side':>10} {'grid':>10} {'measured':>10} {'receptive field':>16}")
    mismatches = 0
    for row in grid_table():
        marker = "" if row['predicted'] == row['measured'] else "  ❌ mismatch"
        mismatches += bool(marker)
        grid = f"{row['predicted']}x{row['predicted']}"
        measured = f"{row['measured']}x{row['measured']}"
        print(f"{row['side']:>10} {grid:>10} {measured:>10} {row['receptive_field']:>16}{marker}")
    print("=" * 60)
    if mismatches:
        print(f"❌ {mismatches} sides disagree with the layer arithmetic")
        return 1
    print("✅ Layer arithmetic matches the network for every side")
    return 0


if __name__ == "__main__":
    sys.exit(main())
