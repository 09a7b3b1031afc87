from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
import torch

from core.exceptions import MapValidationError

# Roughness floor; the GGX distribution diverges as roughness goes to zero.
ALPHA_MIN = 0.01

MAP_NAMES = ('diffuse', 'specular', 'roughness', 'normal')
MAP_CHANNELS = {'diffuse': 3, 'specular': 1, 'roughness': 1, 'normal': 3}

# Images are plain tensors shaped (..., H, W, 3).
# LinearImage: nonnegative HDR radiance. LdrImage: gamma-encoded values in [0, 1].
LinearImage = torch.Tensor
LdrImage = torch.Tensor


class SvbrdfMaps:
    """The four per-pixel parameter maps of a planar material.

    Every map is channels-last, (..., H, W, C), optionally with leading batch
    dimensions. Diffuse and specular are linear reflectances in [0, 1],
    roughness lives in [ALPHA_MIN, 1] and normals are unit vectors with z > 0.
    """

    def __init__(self, diffuse: torch.Tensor, specular: torch.Tensor,
                 roughness: torch.Tensor, normal: torch.Tensor, validate: bool = True):
        self.diffuse = diffuse
        self.specular = specular
        self.roughness = roughness
        self.normal = normal
        if validate:
            errors = self.get_validation_errors()
            if errors:
                raise MapValidationError(errors)

    @property
    def resolution(self) -> Tuple[int, int]:
        return tuple(self.diffuse.shape[-3:-1])

    @property
    def dtype(self) -> torch.dtype:
        return self.diffuse.dtype

    def items(self) -> Iterator[Tuple[str, torch.Tensor]]:
        for name in MAP_NAMES:
            yield name, getattr(self, name)

    def get_validation_errors(self) -> List[str]:
        """Get the list of invariant violations for this bundle."""
        errors = []
        resolutions = set()
        for name, tensor in self.items():
            if tensor.dim() < 3:
                errors.append(f"{name} must be (..., H, W, C), got shape {tuple(tensor.shape)}")
                continue
            if tensor.shape[-1] != MAP_CHANNELS[name]:
                errors.append(f"{name} must have {MAP_CHANNELS[name]} channels, got {tensor.shape[-1]}")
            resolutions.add(tuple(tensor.shape[-3:-1]))
            if not torch.isfinite(tensor).all():
                errors.append(f"{name} contains non-finite values")
        if len(resolutions) > 1:
            errors.append(f"maps disagree on resolution: {sorted(resolutions)}")
        if errors:
            return errors

        tol = 1e-6
        if self.diffuse.min() < -tol or self.diffuse.max() > 1 + tol:
            errors.append("diffuse outside [0, 1]")
        if self.specular.min() < -tol or self.specular.max() > 1 + tol:
            errors.append("specular outside [0, 1]")
        if self.roughness.min() < ALPHA_MIN - tol or self.roughness.max() > 1 + tol:
            errors.append(f"roughness outside [{ALPHA_MIN}, 1]")
        lengths = self.normal.norm(dim=-1)
        if (lengths - 1).abs().max() > 1e-5:
            errors.append("normals are not unit length")
        if (self.normal[..., 2] <= 0).any():
            errors.append("normals must have positive z")
        return errors

    def encoded_normal(self) -> torch.Tensor:
        """Normals in their RGB storage form, n * 0.5 + 0.5."""
        return self.normal * 0.5 + 0.5

    def map_fn(self, fn) -> 'SvbrdfMaps':
        """Apply fn to every map; the result is not re-validated."""
        return SvbrdfMaps(*(fn(tensor) for _, tensor in self.items()), validate=False)

    def detach(self) -> 'SvbrdfMaps':
        return self.map_fn(lambda t: t.detach())

    def clone(self) -> 'SvbrdfMaps':
        return self.map_fn(lambda t: t.clone())

    def to(self, *args, **kwargs) -> 'SvbrdfMaps':
        return self.map_fn(lambda t: t.to(*args, **kwargs))

    def crop(self, top: int, left: int, size: int) -> 'SvbrdfMaps':
        return self.map_fn(lambda t: t[..., top:top + size, left:left + size, :])

    def select(self, index: int) -> 'SvbrdfMaps':
        """Drop a leading batch dimension."""
        return self.map_fn(lambda t: t[index])

    def to_numpy(self) -> Dict[str, np.ndarray]:
        return {name: tensor.detach().cpu().numpy() for name, tensor in self.items()}

    def __repr__(self) -> str:
        h, w = self.resolution
        return f"SvbrdfMaps({h}x{w}, dtype={self.dtype})"


class SceneConfig:
    """Colocated point light and camera above a square plane at z = 0.

    The plane spans [-plane_extent, plane_extent]^2. The light (and camera)
    sits at (light_offset[0], light_offset[1], light_height); the offset
    stays (0, 0) for capture and is only moved for novel-light renders.
    """

    def __init__(self, plane_extent: float = 1.0, light_height: float = 2.0,
                 light_intensity: float = 5.47, colocated: bool = True,
                 light_offset: Tuple[float, float] = (0.0, 0.0)):
        self.plane_extent = float(plane_extent)
        self.light_height = float(light_height)
        self.light_intensity = float(light_intensity)
        self.colocated = bool(colocated)
        self.light_offset = (float(light_offset[0]), float(light_offset[1]))

        errors = self.get_validation_errors()
        if errors:
            raise ValueError("Invalid scene: " + "; ".join(errors))

    def get_validation_errors(self) -> List[str]:
        errors = []
        if self.plane_extent <= 0:
            errors.append("plane_extent must be > 0")
        if self.light_height <= 0:
            errors.append("light_height must be > 0")
        if self.light_intensity <= 0:
            errors.append("light_intensity must be > 0")
        if not self.colocated:
            errors.append("only colocated light/camera is supported")
        return errors

    def with_changes(self, **changes) -> 'SceneConfig':
        values = self.to_dict()
        values.update(changes)
        return SceneConfig(**values)

    def scaled_intensity(self, factor: float) -> 'SceneConfig':
        return self.with_changes(light_intensity=self.light_intensity * factor)

    def to_dict(self) -> Dict[str, object]:
        return {
            'plane_extent': self.plane_extent,
            'light_height': self.light_height,
            'light_intensity': self.light_intensity,
            'colocated': self.colocated,
            'light_offset': self.light_offset,
        }

    @classmethod
    def from_config(cls, config: Optional[Dict]) -> 'SceneConfig':
        """Build from the `scene` section of the main YAML config."""
        scene = (config or {}).get('scene', {})
        return cls(
            plane_extent=scene.get('plane_extent', 1.0),
            light_height=scene.get('light_height', 2.0),
            light_intensity=scene.get('light_intensity', 5.47),
            light_offset=tuple(scene.get('light_offset', (0.0, 0.0))),
        )

    def __repr__(self) -> str:
        return (f"SceneConfig(extent={self.plane_extent}, height={self.light_height}, "
                f"intensity={self.light_intensity}, offset={self.light_offset})")
