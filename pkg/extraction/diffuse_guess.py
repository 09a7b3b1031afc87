"""
Guessed Diffuse Map Extraction

Builds the pseudo-ground-truth diffuse map from a single flash photo by
dividing out a low-pass illumination estimate, restoring the photo's robust
mean brightness and soft-clipping the brightest percentile. The result
supervises the diffuse loss and anchors the Fourier loss.

All work happens in display (gamma) space, the space the photo arrives in.
"""

import logging
from typing import Optional, Union

import numpy as np
import torch
from scipy.ndimage import gaussian_filter

from core.exceptions import DegenerateInputError
from core.models import LdrImage

logger = logging.getLogger(__name__)

LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])
ILLUMINATION_FLOOR = 1e-4
DEFAULT_SIGMA_FRACTION = 1.0 / 8.0
SOFT_CLIP_PERCENTILE = 99.0
SOFT_CLIP_SLOPE = 0.25
# Fraction of the spectrum (per axis, in cycles/pixel) treated as "low frequency".
LOW_FREQUENCY_CUTOFF = 1.0 / 8.0


class GuessedDiffuse:
    """Guessed diffuse map plus the diagnostics computed alongside it."""

    def __init__(self, map: torch.Tensor, stationarity_score: float, saturated_fraction: float = 0.0):
        self.map = map
        self.stationarity_score = float(stationarity_score)
        self.saturated_fraction = float(saturated_fraction)

    def __repr__(self) -> str:
        h, w = self.map.shape[:2]
        return (f"GuessedDiffuse({h}x{w}, stationarity_score={self.stationarity_score:.4f}, "
                f"saturated_fraction={self.saturated_fraction:.4f})")


def _as_numpy(img: Union[torch.Tensor, np.ndarray]) -> np.ndarray:
    if isinstance(img, torch.Tensor):
        img = img.detach().cpu().numpy()
    return np.asarray(img, dtype=np.float64)


def luminance(img: Union[torch.Tensor, np.ndarray]) -> np.ndarray:
    """Rec. 709 luminance of an (H, W, 3) image, shape (H, W)."""
    return _as_numpy(img) @ LUMA_WEIGHTS


def estimate_illumination(photo: Union[LdrImage, np.ndarray], sigma: float) -> np.ndarray:
    """
    Smooth illumination field (H, W, 1): Gaussian low-pass of the luminance.

    Args:
        photo: (H, W, 3) image.
        sigma: Standard deviation in pixels; borders are mirror-padded.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    field = gaussian_filter(luminance(photo), sigma=sigma, mode='mirror')
    return np.maximum(field, ILLUMINATION_FLOOR)[:, :, None]


def stationarity_score(img: Union[torch.Tensor, np.ndarray]) -> float:
    """
    Share of non-DC spectral energy sitting in the lowest 1/16 of frequencies.

    Illumination gradients live at low frequencies, so a smaller score means a
    more stationary image. An image with no non-DC energy scores 0.
    """
    lum = luminance(img) if _as_numpy(img).ndim == 3 else _as_numpy(img)
    energy = np.abs(np.fft.fft2(lum)) ** 2
    dc_energy = energy[0, 0]
    energy[0, 0] = 0.0
    total = energy.sum()
    if total <= 1e-12 * max(dc_energy, 1.0):
        return 0.0

    fy = np.abs(np.fft.fftfreq(lum.shape[0]))[:, None]
    fx = np.abs(np.fft.fftfreq(lum.shape[1]))[None, :]
    low_band = (fy < LOW_FREQUENCY_CUTOFF) & (fx < LOW_FREQUENCY_CUTOFF)
    return float(energy[low_band].sum() / total)


def _soft_clip(img: np.ndarray, percentile: float, slope: float) -> np.ndarray:
    lum = luminance(img)
    knee = np.percentile(lum, percentile)
    above = lum > knee
    if not above.any():
        return img
    target = knee + (lum[above] - knee) * slope
    out = img.copy()
    out[above] *= (target / lum[above])[:, None]
    return out


def guess_diffuse(photo: LdrImage, sigma: Optional[float] = None,
                  sigma_fraction: float = DEFAULT_SIGMA_FRACTION,
                  saturation_warning: float = 0.02) -> GuessedDiffuse:
    """
    Construct the guessed diffuse map of a flash photograph.

    out = clamp(photo * m / illum, 0, 1), with m chosen so the output's median
    luminance equals the input's, then values above the 99th luminance
    percentile are pulled toward it with slope 0.25.

    Args:
        photo: (H, W, 3) LDR photo in [0, 1].
        sigma: Illumination blur in pixels; defaults to sigma_fraction * H.
        saturation_warning: Clipped-pixel fraction above which a warning is logged.

    Raises:
        DegenerateInputError: The photo is fully black.
    """
    img = _as_numpy(photo)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"photo must be (H, W, 3), got {img.shape}")

    lum = luminance(img)
    if lum.max() <= 0:
        raise DegenerateInputError("degenerate input: zero luminance")

    if sigma is None:
        sigma = img.shape[0] * sigma_fraction
    illumination = estimate_illumination(img, sigma)
    ratio = img / illumination

    ratio_lum = luminance(ratio)
    ratio_median = np.median(ratio_lum)
    if ratio_median > 0:
        scale = np.median(lum) / ratio_median
    else:
        scale = lum.mean() / ratio_lum.mean()

    out = np.clip(ratio * scale, 0.0, 1.0)
    out = np.clip(_soft_clip(out, SOFT_CLIP_PERCENTILE, SOFT_CLIP_SLOPE), 0.0, 1.0)

    saturated_fraction = float((img >= 1.0).any(axis=2).mean())
    if saturated_fraction > saturation_warning:
        logger.warning(
            f"{saturated_fraction:.1%} of the photo is clipped; the guessed diffuse map "
            f"may keep highlight structure and mislead the Fourier loss"
        )

    score = stationarity_score(out)
    logger.debug(f"Guessed diffuse map: sigma={sigma:.1f}px, scale={scale:.4f}, stationarity={score:.4f}")

    dtype = photo.dtype if isinstance(photo, torch.Tensor) else torch.float32
    return GuessedDiffuse(torch.from_numpy(out).to(dtype), score, saturated_fraction)
