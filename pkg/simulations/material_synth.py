"""
Synthetic Stationary Materials

Procedural SVBRDF maps (checker, stripes, noise-tile, bricks) whose pattern
period divides the image side, so every map is stationary by construction,
plus the flash-photo rendering used as benchmark input.
"""

import logging
from typing import Any, Dict, Optional, Tuple

import numpy as np
import torch

from core.models import ALPHA_MIN, LdrImage, SceneConfig, SvbrdfMaps
from rendering.renderer import DEFAULT_GAMMA, render, tonemap

logger = logging.getLogger(__name__)

PATTERNS = ('checker', 'stripes', 'noise-tile', 'bricks')
OVEREXPOSURE_BOOST = 2.0


class MaterialSpec:
    """
    Recipe for one synthetic material.

    Each map interpolates between two values with the same pattern mask; the
    mask also serves as height field for the normals.
    """

    def __init__(self, pattern: str = 'checker', period: int = 32, side: int = 128,
                 diffuse: Tuple[Tuple[float, float, float], Tuple[float, float, float]] = (
                     (0.65, 0.35, 0.25), (0.25, 0.35, 0.55)),
                 specular: Tuple[float, float] = (0.04, 0.25),
                 roughness: Tuple[float, float] = (0.6, 0.25),
                 normal_strength: float = 1.0, seed: int = 0):
        if pattern not in PATTERNS:
            raise ValueError(f"Unknown pattern '{pattern}', expected one of {PATTERNS}")
        if period < 2 or period % 2:
            raise ValueError(f"period must be an even number >= 2, got {period}")
        if side % period:
            raise ValueError(f"period {period} does not divide side {side}")
        self.pattern = pattern
        self.period = int(period)
        self.side = int(side)
        self.diffuse = diffuse
        self.specular = specular
        self.roughness = roughness
        self.normal_strength = float(normal_strength)
        self.seed = int(seed)

    @classmethod
    def from_config(cls, config: Optional[Dict[str, Any]], **overrides) -> 'MaterialSpec':
        """Defaults from the `benchmark.material` config section, then keyword overrides."""
        values = dict((config or {}).get('benchmark', {}).get('material', {}))
        values.update({k: v for k, v in overrides.items() if v is not None})
        for key in ('diffuse', 'specular', 'roughness'):
            if key in values:
                values[key] = tuple(tuple(v) if isinstance(v, list) else v for v in values[key])
        return cls(**values)

    def __repr__(self) -> str:
        return f"MaterialSpec({self.pattern}, period={self.period}, side={self.side}, seed={self.seed})"


def _checker(side: int, period: int) -> np.ndarray:
    half = period // 2
    idx = np.arange(side) // half
    return ((idx[:, None] + idx[None, :]) % 2).astype(np.float64)


def _stripes(side: int, period: int) -> np.ndarray:
    cols = (np.arange(side) // (period // 2)) % 2
    return np.tile(cols[None, :], (side, 1)).astype(np.float64)


def _noise_tile(side: int, period: int, seed: int) -> np.ndarray:
    # Rank transform gives every seed the same uniform marginal.
    rng = np.random.default_rng(seed)
    values = rng.random(period * period)
    ranks = np.argsort(np.argsort(values)).reshape(period, period)
    tile = ranks / (period * period - 1)
    return np.tile(tile, (side // period, side // period))


def _bricks(side: int, period: int) -> np.ndarray:
    """Bricks period wide and period/2 tall, alternate rows shifted half a brick."""
    half = period // 2
    mortar = max(1, period // 16)
    rows = np.arange(side)
    cols = np.arange(side)
    course = (rows // half) % 2
    shifted = (cols[None, :] + course[:, None] * half) % period
    in_row = (rows % half) >= mortar
    in_col = shifted >= mortar
    return (in_row[:, None] & in_col).astype(np.float64)


def pattern_mask(spec: MaterialSpec) -> np.ndarray:
    if spec.pattern == 'checker':
        return _checker(spec.side, spec.period)
    if spec.pattern == 'stripes':
        return _stripes(spec.side, spec.period)
    if spec.pattern == 'noise-tile':
        return _noise_tile(spec.side, spec.period, spec.seed)
    return _bricks(spec.side, spec.period)


def height_to_normals(height: np.ndarray, strength: float) -> np.ndarray:
    """Unit normals of a periodic height field (central differences with wraparound)."""
    dh_dcol = (np.roll(height, -1, axis=1) - np.roll(height, 1, axis=1)) * 0.5 * strength
    dh_drow = (np.roll(height, -1, axis=0) - np.roll(height, 1, axis=0)) * 0.5 * strength
    # Rows run downward while world y runs upward.
    normals = np.stack((-dh_dcol, dh_drow, np.ones_like(height)), axis=-1)
    return normals / np.linalg.norm(normals, axis=-1, keepdims=True)


def _lerp(mask: np.ndarray, a, b) -> np.ndarray:
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    return a + (b - a) * mask[:, :, None]


def synth_material(spec: MaterialSpec, dtype: torch.dtype = torch.float32) -> SvbrdfMaps:
    """Generate the four maps for spec; identical output for identical specs."""
    mask = pattern_mask(spec)
    arrays = {
        'diffuse': _lerp(mask, *spec.diffuse),
        'specular': _lerp(mask, *spec.specular),
        'roughness': np.clip(_lerp(mask, *spec.roughness), ALPHA_MIN, 1.0),
        'normal': height_to_normals(mask, spec.normal_strength),
    }
    logger.debug(f"Synthesized {spec}")
    return SvbrdfMaps(**{name: torch.from_numpy(arr).to(dtype) for name, arr in arrays.items()})


def uniform_material(side: int, diffuse=(0.5, 0.5, 0.5), specular: float = 0.0, roughness: float = 0.5,
                     dtype: torch.dtype = torch.float32) -> SvbrdfMaps:
    """Flat homogeneous material, the reference case for symmetry and highlight checks."""
    def fill(value, channels):
        return torch.tensor(value, dtype=dtype).reshape(1, 1, channels).expand(side, side, channels).clone()

    return SvbrdfMaps(
        diffuse=fill(diffuse, 3),
        specular=fill(specular, 1),
        roughness=fill(roughness, 1),
        normal=fill((0.0, 0.0, 1.0), 3),
    )


def render_input(maps: SvbrdfMaps, scene: SceneConfig, overexpose: bool = False,
                 gamma: float = DEFAULT_GAMMA) -> LdrImage:
    """Flash photo of maps; overexpose doubles the light so highlights clip."""
    if overexpose:
        scene = scene.scaled_intensity(OVEREXPOSURE_BOOST)
    return tonemap(render(maps, scene), gamma)
