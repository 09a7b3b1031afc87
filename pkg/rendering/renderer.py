"""
Differentiable point-light renderer for a flat material patch.

The camera sits at the light, looking straight down, so light and view
directions coincide at every pixel. Used both to synthesize inputs and to
re-render predicted maps inside the training loss.
"""

import logging
import math
from typing import Tuple

import torch

from core.models import LdrImage, LinearImage, SceneConfig, SvbrdfMaps
from rendering.brdf import dot, eval_brdf

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = 2.2
NORMAL_Z_FLOOR = 1e-4


def pixel_positions(resolution: Tuple[int, int], plane_extent: float,
                    dtype: torch.dtype = torch.float32, device=None) -> torch.Tensor:
    """World positions (H, W, 3) of pixel centers on the z = 0 plane."""
    height, width = resolution
    xs = ((torch.arange(width, dtype=dtype, device=device) + 0.5) / width - 0.5) * 2 * plane_extent
    ys = -((torch.arange(height, dtype=dtype, device=device) + 0.5) / height - 0.5) * 2 * plane_extent
    grid_y, grid_x = torch.meshgrid(ys, xs, indexing='ij')
    return torch.stack((grid_x, grid_y, torch.zeros_like(grid_x)), dim=-1)


def render(maps: SvbrdfMaps, scene: SceneConfig) -> LinearImage:
    """
    Render the linear radiance image of the maps under the scene's point light.

    radiance = f * intensity / d^2 * max(n.l, 0), with l the unit vector from
    the surface point to the light and d its distance.
    """
    positions = pixel_positions(maps.resolution, scene.plane_extent, maps.dtype, maps.diffuse.device)
    light = torch.tensor([scene.light_offset[0], scene.light_offset[1], scene.light_height],
                         dtype=maps.dtype, device=maps.diffuse.device)
    to_light = light - positions
    dist2 = dot(to_light, to_light)
    light_dir = to_light / torch.sqrt(dist2)

    reflectance = eval_brdf(light_dir, light_dir, maps.normal, maps.diffuse, maps.specular, maps.roughness)
    cos_light = dot(maps.normal, light_dir).clamp(min=0.0)
    return reflectance * cos_light / dist2 * scene.light_intensity


def tonemap(img: LinearImage, gamma: float = DEFAULT_GAMMA) -> LdrImage:
    """clamp(img, 0, 1) ** (1 / gamma); overexposed highlights clip to 1."""
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    clipped = img.clamp(0.0, 1.0)
    # Keep the pow away from 0 so its gradient stays finite.
    encoded = clipped.clamp(min=1e-12) ** (1.0 / gamma)
    return torch.where(clipped > 0, encoded, torch.zeros_like(encoded))


def normalize_normals(raw: torch.Tensor) -> Tuple[torch.Tensor, int]:
    """
    Turn unconstrained (..., 3) vectors into unit normals with positive z.

    Returns:
        (normals, degenerate_count): zero vectors become (0, 0, 1) and are counted.
    """
    raw = torch.cat((raw[..., :2], raw[..., 2:3].abs()), dim=-1)
    norm = raw.norm(dim=-1, keepdim=True)
    degenerate = norm < 1e-12
    unit = raw / norm.clamp(min=1e-12)
    # Grazing vectors get a tiny positive z, then renormalize.
    unit = torch.cat((unit[..., :2], unit[..., 2:3].clamp(min=NORMAL_Z_FLOOR)), dim=-1)
    unit = unit / unit.norm(dim=-1, keepdim=True)

    up = torch.zeros_like(unit)
    up[..., 2] = 1.0
    normals = torch.where(degenerate, up, unit)
    degenerate_count = int(degenerate.sum().item())
    if degenerate_count:
        logger.debug(f"normalize_normals replaced {degenerate_count} zero vectors with (0, 0, 1)")
    return normals, degenerate_count


def relight(maps: SvbrdfMaps, scene: SceneConfig, light_offset: Tuple[float, float],
            gamma: float = DEFAULT_GAMMA) -> LdrImage:
    """Novel-light render: move the colocated light/camera to (x, y, light_height)."""
    return tonemap(render(maps, scene.with_changes(light_offset=light_offset)), gamma)


def calibrate_light_intensity(albedo: float = 0.5, light_height: float = 2.0,
                              target_ldr: float = 0.5, gamma: float = DEFAULT_GAMMA) -> float:
    """Intensity at which a flat Lambertian plane renders to target_ldr at its center."""
    center_linear = target_ldr ** gamma
    return center_linear * math.pi * light_height ** 2 / albedo
