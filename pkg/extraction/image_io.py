"""
Photo and SVBRDF map file I/O.

Map directories hold `diffuse.png`, `specular.png`, `roughness.png` and
`normal.png` as 16-bit PNGs in linear encoding; normals are stored as
n * 0.5 + 0.5. Input photos are 8-bit sRGB PNGs.
"""

import logging
import os
from typing import Dict

import cv2
import numpy as np
import torch

from core.models import ALPHA_MIN, MAP_NAMES, LdrImage, SvbrdfMaps
from rendering.renderer import normalize_normals

logger = logging.getLogger(__name__)

MAP_EXTENSION = '.png'
UINT16_MAX = 65535.0


def map_paths(directory: str) -> Dict[str, str]:
    return {name: os.path.join(directory, name + MAP_EXTENSION) for name in MAP_NAMES}


def _read_image(path: str) -> np.ndarray:
    """Read any 8/16-bit PNG into float64 RGB (or single-channel) in [0, 1]."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Image not found: {path}")
    raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ValueError(f"Could not decode image: {path}")

    if raw.dtype == np.uint16:
        scale = UINT16_MAX
    elif raw.dtype == np.uint8:
        scale = 255.0
    else:
        raise ValueError(f"Unsupported pixel type {raw.dtype} in {path}")

    img = raw.astype(np.float64) / scale
    if img.ndim == 3:
        if img.shape[2] == 4:
            img = img[:, :, :3]
        img = img[:, :, ::-1]  # BGR -> RGB
    return np.ascontiguousarray(img)


def _write_image(path: str, img: np.ndarray, bits: int):
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim == 3:
        img = img[:, :, ::-1]  # RGB -> BGR
    if bits == 16:
        encoded = np.round(img * UINT16_MAX).astype(np.uint16)
    else:
        encoded = np.round(img * 255.0).astype(np.uint8)

    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    if not cv2.imwrite(path, np.ascontiguousarray(encoded)):
        raise IOError(f"Failed to write image: {path}")


def load_photo(path: str) -> LdrImage:
    """Load an input photograph as an (H, W, 3) float32 tensor in [0, 1]."""
    img = _read_image(path)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    logger.info(f"Loaded photo {path} ({img.shape[0]}x{img.shape[1]})")
    return torch.from_numpy(img.astype(np.float32))


def save_ldr(path: str, img: LdrImage):
    """Save an (H, W, 3) LDR tensor as an 8-bit PNG."""
    _write_image(path, img.detach().cpu().numpy(), bits=8)


def save_maps(directory: str, maps: SvbrdfMaps):
    """Write the four maps of a single material (no batch dimension)."""
    paths = map_paths(directory)
    arrays = maps.to_numpy()
    arrays['normal'] = maps.encoded_normal().detach().cpu().numpy()
    for name in MAP_NAMES:
        _write_image(paths[name], arrays[name], bits=16)
    logger.info(f"Saved SVBRDF maps to {directory}")


def load_maps(directory: str, dtype: torch.dtype = torch.float32) -> SvbrdfMaps:
    """Read a map directory back into validated SvbrdfMaps."""
    paths = map_paths(directory)
    missing = [path for path in paths.values() if not os.path.exists(path)]
    if missing:
        raise FileNotFoundError(f"Missing map files in {directory}: {missing}")

    arrays = {name: _read_image(path) for name, path in paths.items()}
    for name in ('specular', 'roughness'):
        img = arrays[name]
        arrays[name] = (img.mean(axis=2) if img.ndim == 3 else img)[:, :, None]
    for name in ('diffuse', 'normal'):
        if arrays[name].ndim == 2:
            arrays[name] = np.repeat(arrays[name][:, :, None], 3, axis=2)

    tensors = {name: torch.from_numpy(arr).to(dtype) for name, arr in arrays.items()}
    normal, degenerate = normalize_normals(tensors['normal'] * 2.0 - 1.0)
    if degenerate:
        logger.warning(f"{degenerate} zero normals in {paths['normal']} replaced by (0, 0, 1)")

    return SvbrdfMaps(
        diffuse=tensors['diffuse'],
        specular=tensors['specular'],
        roughness=tensors['roughness'].clamp(min=ALPHA_MIN),
        normal=normal,
    )
