"""
Chart Generator for Material Recovery

Creates the loss-curve chart of a training run, the side-by-side comparison
grid of recovered maps, and the spot-ratio heatmap of an ablation.
"""

import logging
import os
from typing import List, Sequence, Tuple

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns
import torch
from matplotlib.figure import Figure

from core.models import MAP_NAMES, SvbrdfMaps
from rendering.renderer import DEFAULT_GAMMA, tonemap

logger = logging.getLogger(__name__)

PANEL_TITLES = ('Diffuse', 'Specular', 'Roughness', 'Normal', 'Input', 'Re-render')
LOSS_COLUMNS = ('diffuse', 'adv_g', 'adv_d', 'fourier', 'perceptual', 'total')


def _save_chart(fig: Figure, path: str, dpi: int = 150) -> str:
    """Save and close a figure; the figure is closed even if saving fails."""
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    try:
        fig.savefig(path, dpi=dpi, facecolor='white', edgecolor='none')
        logger.info(f"Saved chart: {path}")
        return path
    except Exception as e:
        logger.error(f"Failed to save chart {path}: {e}")
        raise
    finally:
        plt.close(fig)


def plot_loss_curve(losses_df: pd.DataFrame, path: str) -> str:
    """One subplot per loss term against the iteration counter."""
    columns = [c for c in LOSS_COLUMNS if c in losses_df.columns]
    fig, axes = plt.subplots(len(columns), 1, figsize=(10, 2.2 * len(columns)), sharex=True)
    axes = np.atleast_1d(axes)
    for ax, column in zip(axes, columns):
        ax.plot(losses_df['iter'], losses_df[column], linewidth=0.8)
        ax.set_ylabel(column)
        ax.grid(True, alpha=0.3)
    axes[-1].set_xlabel('iteration')
    fig.suptitle('Training losses')
    plt.tight_layout()
    return _save_chart(fig, path)


def _display(img: torch.Tensor) -> np.ndarray:
    img = img.detach().cpu().float().clamp(0.0, 1.0).numpy()
    if img.shape[-1] == 1:
        img = np.repeat(img, 3, axis=-1)
    return img


def comparison_panels(maps: SvbrdfMaps, input_photo: torch.Tensor, rerender: torch.Tensor,
                      gamma: float = DEFAULT_GAMMA) -> List[Tuple[str, np.ndarray]]:
    """The six panels of one grid row: four maps, the input photo and the re-render."""
    return list(zip(PANEL_TITLES, [
        _display(tonemap(maps.diffuse, gamma)),
        _display(maps.specular),
        _display(maps.roughness),
        _display(maps.encoded_normal()),
        _display(input_photo),
        _display(rerender),
    ]))


def create_comparison_grid(rows: Sequence[Tuple[str, List[Tuple[str, np.ndarray]]]], path: str) -> str:
    """
    Save a (len(rows) x 6) image grid.

    Args:
        rows: (label, comparison_panels(...)) per variant.
    """
    n_rows = max(len(rows), 1)
    fig, axes = plt.subplots(n_rows, len(PANEL_TITLES), figsize=(2.4 * len(PANEL_TITLES), 2.4 * n_rows),
                             squeeze=False)
    for r, (label, panels) in enumerate(rows):
        for c, (title, image) in enumerate(panels):
            ax = axes[r][c]
            ax.imshow(image, interpolation='nearest')
            ax.set_xticks([])
            ax.set_yticks([])
            if r == 0:
                ax.set_title(title, fontsize=9)
            if c == 0:
                ax.set_ylabel(label, fontsize=8)
    plt.tight_layout()
    return _save_chart(fig, path)


def create_spot_ratio_heatmap(results_df: pd.DataFrame, path: str) -> str:
    """Heatmap of spot ratios, one row per ablation variant, one column per map."""
    columns = [f"spot_{name}" for name in MAP_NAMES]
    data = results_df.set_index('variant')[columns]
    data.columns = list(MAP_NAMES)

    fig, ax = plt.subplots(figsize=(8, 1 + 0.6 * len(data)))
    sns.heatmap(data, annot=True, fmt='.3f', cmap='RdYlGn_r', center=1.0, ax=ax,
                cbar_kws={'label': 'center / ring mean'})
    ax.set_title('Spot ratio per recovered map (1.0 = no residual highlight)')
    ax.set_ylabel('')
    plt.tight_layout()
    return _save_chart(fig, path)
