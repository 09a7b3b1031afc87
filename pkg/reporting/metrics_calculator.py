"""
Metrics Calculator for Recovered Materials

Per-map errors against a reference material, re-render error against the
input photo and the spot ratio, which turns "a highlight leaked into this
map" into a number: ~1 for a stationary map, > 1 with a residual center spot.
"""

import logging
from typing import Dict, Optional

import numpy as np
import torch

from core.models import MAP_NAMES, LdrImage, SceneConfig, SvbrdfMaps
from rendering.renderer import DEFAULT_GAMMA, render, tonemap

logger = logging.getLogger(__name__)

LUMA_WEIGHTS = (0.2126, 0.7152, 0.0722)
DISK_RADIUS_FRACTION = 1.0 / 8.0
RING_INNER_FRACTION = 3.0 / 8.0
RING_OUTER_FRACTION = 1.0 / 2.0


def _map_luminance(values: np.ndarray) -> np.ndarray:
    if values.shape[-1] == 3:
        return values @ np.asarray(LUMA_WEIGHTS)
    return values.mean(axis=-1)


def _radius_grid(height: int, width: int) -> np.ndarray:
    rows = np.arange(height) + 0.5 - height / 2.0
    cols = np.arange(width) + 0.5 - width / 2.0
    return np.sqrt(rows[:, None] ** 2 + cols[None, :] ** 2)


def spot_ratio(map_values) -> float:
    """
    Center-disk mean over outer-ring mean of a map's luminance.

    Disk radius H/8, ring radii [3H/8, H/2], measured from the image center.
    Returns 1.0 when both means vanish and inf when only the ring does.
    """
    if isinstance(map_values, torch.Tensor):
        map_values = map_values.detach().cpu().numpy()
    values = np.asarray(map_values, dtype=np.float64)
    if values.ndim == 2:
        values = values[:, :, None]
    lum = _map_luminance(values)
    height = lum.shape[0]
    radius = _radius_grid(*lum.shape)

    disk_mean = lum[radius < height * DISK_RADIUS_FRACTION].mean()
    ring = (radius >= height * RING_INNER_FRACTION) & (radius <= height * RING_OUTER_FRACTION)
    ring_mean = lum[ring].mean()
    if abs(ring_mean) < 1e-12:
        return 1.0 if abs(disk_mean) < 1e-12 else float('inf')
    return float(disk_mean / ring_mean)


def spot_ratios(maps: SvbrdfMaps) -> Dict[str, float]:
    """spot_ratio of every map; normals measured in their encoded RGB form."""
    ratios = {}
    for name, tensor in maps.items():
        ratios[name] = spot_ratio(maps.encoded_normal() if name == 'normal' else tensor)
    return ratios


def rmse(a: torch.Tensor, b: torch.Tensor) -> float:
    diff = a.detach().double() - b.detach().double()
    return float(torch.sqrt((diff * diff).mean()).item())


def _cross_norm(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    # Component-wise so that a x a is exactly zero.
    cx = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    cy = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    cz = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return torch.sqrt(cx * cx + cy * cy + cz * cz)


def normal_angular_rmse(a: torch.Tensor, b: torch.Tensor) -> float:
    """RMS angle in degrees between two normal fields."""
    a = a.detach().double()
    b = b.detach().double()
    # atan2 keeps identical normals at exactly 0 degrees.
    cross = _cross_norm(a, b)
    angle = torch.rad2deg(torch.atan2(cross, (a * b).sum(dim=-1)))
    return float(torch.sqrt((angle * angle).mean()).item())


class EvalReport:
    """Recovery quality of one material: errors, re-render error, spot ratios and runtime."""

    def __init__(self, rmse: Dict[str, float], rerender_l1: float, spot_ratio: Dict[str, float],
                 runtime_seconds: float = 0.0):
        self.rmse = rmse
        self.rerender_l1 = float(rerender_l1)
        self.spot_ratio = spot_ratio
        self.runtime_seconds = float(runtime_seconds)

    def to_row(self) -> Dict[str, float]:
        row = {f"rmse_{name}": self.rmse[name] for name in MAP_NAMES}
        row['rerender_l1'] = self.rerender_l1
        row.update({f"spot_{name}": self.spot_ratio[name] for name in MAP_NAMES})
        row['runtime_seconds'] = self.runtime_seconds
        return row

    def __repr__(self) -> str:
        errors = ", ".join(f"{k}={v:.4f}" for k, v in self.rmse.items())
        return f"EvalReport({errors}, rerender_l1={self.rerender_l1:.4f})"


def evaluate(recovered: SvbrdfMaps, reference: Optional[SvbrdfMaps], input_photo: LdrImage,
             scene: Optional[SceneConfig] = None, gamma: float = DEFAULT_GAMMA,
             runtime_seconds: float = 0.0) -> EvalReport:
    """
    Compare recovered maps with the reference and re-render them against the photo.

    Normals are scored as angular RMSE in degrees, the other maps as value RMSE.
    The re-render uses the scene the photo was taken under. Without a
    reference (real photos) every RMSE entry is NaN.

    Raises:
        ValueError: Resolutions of recovered, reference and photo differ.
    """
    scene = scene or SceneConfig()
    reference_resolution = reference.resolution if reference is not None else recovered.resolution
    if reference_resolution != recovered.resolution or tuple(input_photo.shape[:2]) != recovered.resolution:
        raise ValueError(f"evaluate: shape mismatch, recovered {recovered.resolution}, "
                         f"reference {reference_resolution}, photo {tuple(input_photo.shape[:2])}")

    if reference is None:
        errors = {name: float("nan") for name in MAP_NAMES}
    else:
        errors = {
            'diffuse': rmse(recovered.diffuse, reference.diffuse),
            'specular': rmse(recovered.specular, reference.specular),
            'roughness': rmse(recovered.roughness, reference.roughness),
            'normal': normal_angular_rmse(recovered.normal, reference.normal),
        }
    with torch.no_grad():
        rendered = tonemap(render(recovered, scene), gamma)
    rerender_l1 = float((rendered.double() - input_photo.detach().double()).abs().mean().item())

    report = EvalReport(errors, rerender_l1, spot_ratios(recovered), runtime_seconds)
    logger.info(f"Evaluation: {report}")
    return report
