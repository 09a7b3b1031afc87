"""
Training losses for per-image SVBRDF recovery.

Terms:
- diffuse: L1 between the predicted diffuse map and the guessed diffuse map
- adversarial: patch-discriminator logistic loss (non-saturating generator form)
- fourier: log of the mean L1 between magnitude spectra of each predicted
  map and the guessed diffuse map, DC excluded
- perceptual: L1 between VGG-19 activations of the photo and the re-render
"""

import logging
import math
import os
from typing import Dict, List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F
from torchvision.models import vgg19

from core.exceptions import FeatureExtractorUnavailableError
from core.models import MAP_NAMES, SvbrdfMaps

logger = logging.getLogger(__name__)

LOG_EPS = 1e-8
PROB_EPS = 1e-7
WEIGHTS_ENV_VAR = 'SVBRDF_FORGE_WEIGHTS'

# First ReLU of each VGG-19 conv block: relu1_1, relu2_1, relu3_1, relu4_1, relu5_1.
VGG_LAYER_INDICES = (1, 6, 11, 20, 29)
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

CSV_COLUMNS = ['iter', 'diffuse', 'adv_g', 'adv_d', 'fourier', 'perceptual', 'total']


class LossWeights:
    """Weights of the adversarial (lambda), Fourier (lambda1) and perceptual (lambda2) terms."""

    def __init__(self, lambda_gan: float = 0.1, lambda_fourier: float = 0.1, lambda_perceptual: float = 0.2):
        self.lambda_gan = float(lambda_gan)
        self.lambda_fourier = float(lambda_fourier)
        self.lambda_perceptual = float(lambda_perceptual)
        for name, value in self.to_dict().items():
            if value < 0:
                raise ValueError(f"{name} must be >= 0, got {value}")

    def with_changes(self, **changes) -> 'LossWeights':
        values = self.to_dict()
        values.update(changes)
        return LossWeights(**values)

    def to_dict(self) -> Dict[str, float]:
        return {
            'lambda_gan': self.lambda_gan,
            'lambda_fourier': self.lambda_fourier,
            'lambda_perceptual': self.lambda_perceptual,
        }

    @classmethod
    def from_config(cls, config: Optional[Dict]) -> 'LossWeights':
        losses = (config or {}).get('losses', {})
        return cls(
            lambda_gan=losses.get('lambda_gan', 0.1),
            lambda_fourier=losses.get('lambda_fourier', 0.1),
            lambda_perceptual=losses.get('lambda_perceptual', 0.2),
        )

    def __repr__(self) -> str:
        return (f"LossWeights(gan={self.lambda_gan}, fourier={self.lambda_fourier}, "
                f"perceptual={self.lambda_perceptual})")


class LossReport:
    """Scalar value of every loss term for one training step."""

    def __init__(self, diffuse: float, adversarial_g: float, adversarial_d: float,
                 fourier: float, perceptual: float, total_generator: float):
        self.diffuse = float(diffuse)
        self.adversarial_g = float(adversarial_g)
        self.adversarial_d = float(adversarial_d)
        self.fourier = float(fourier)
        self.perceptual = float(perceptual)
        self.total_generator = float(total_generator)

    def values(self) -> List[float]:
        return [self.diffuse, self.adversarial_g, self.adversarial_d,
                self.fourier, self.perceptual, self.total_generator]

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self.values())

    def to_row(self, iteration: int) -> Dict[str, float]:
        """One loss-curve CSV row keyed by CSV_COLUMNS."""
        return dict(zip(CSV_COLUMNS, [iteration] + self.values()))

    def __eq__(self, other) -> bool:
        return isinstance(other, LossReport) and self.values() == other.values()

    def __repr__(self) -> str:
        return (f"LossReport(diffuse={self.diffuse:.5f}, adv_g={self.adversarial_g:.5f}, "
                f"adv_d={self.adversarial_d:.5f}, fourier={self.fourier:.5f}, "
                f"perceptual={self.perceptual:.5f}, total={self.total_generator:.5f})")


def _check_shapes(a: torch.Tensor, b: torch.Tensor, what: str):
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def diffuse_loss(pred_diffuse: torch.Tensor, guessed: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference between predicted and guessed diffuse maps."""
    _check_shapes(pred_diffuse, guessed, "diffuse_loss")
    return (pred_diffuse - guessed).abs().mean()


def adversarial_losses(disc_real: torch.Tensor, disc_fake: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Logistic patch-GAN losses from raw logits.

    Returns:
        (d_loss, g_loss) with
        d_loss = -mean log sigmoid(real) - mean log(1 - sigmoid(fake)) and
        g_loss = -mean log sigmoid(fake).
    """
    p_real = torch.sigmoid(disc_real)
    p_fake = torch.sigmoid(disc_fake)
    d_loss = -torch.log(p_real.clamp(min=PROB_EPS)).mean() - torch.log((1.0 - p_fake).clamp(min=PROB_EPS)).mean()
    g_loss = -torch.log(p_fake.clamp(min=PROB_EPS)).mean()
    return d_loss, g_loss


def _spectrum(single_channel: torch.Tensor) -> torch.Tensor:
    """Orthonormal 2-D FFT over the last two dims with the DC bin zeroed."""
    spectrum = torch.fft.fft2(single_channel, dim=(-2, -1), norm='ortho')
    dc_mask = torch.ones(spectrum.shape[-2:], dtype=single_channel.dtype, device=single_channel.device)
    dc_mask[0, 0] = 0.0
    return spectrum * dc_mask


def _fourier_inputs(maps: SvbrdfMaps) -> Dict[str, torch.Tensor]:
    """Channel-mean single-channel view of each map; normals in encoded form."""
    return {
        'diffuse': maps.diffuse.mean(dim=-1),
        'specular': maps.specular.mean(dim=-1),
        'roughness': maps.roughness.mean(dim=-1),
        'normal': maps.encoded_normal().mean(dim=-1),
    }


def fourier_loss(maps: SvbrdfMaps, guessed: torch.Tensor,
                 enabled: Sequence[bool] = (True, True, True, True),
                 complex_difference: bool = False) -> torch.Tensor:
    """
    Log-domain spectral distance between the predicted maps and the guessed diffuse map.

    Args:
        maps: Predicted maps, (..., H, W, C).
        guessed: Guessed diffuse map, (..., H, W, 3), broadcastable to the maps.
        enabled: Per-map flags in MAP_NAMES order (diffuse, specular, roughness, normal).
        complex_difference: Compare raw complex coefficients instead of magnitudes.
            The magnitude form is invariant to circular shifts of the maps.

    Returns:
        log(mean over enabled maps of mean |S(map) - S(guessed)| + 1e-8). A zero
        tensor when no map is enabled.
    """
    if len(enabled) != len(MAP_NAMES):
        raise ValueError(f"enabled needs {len(MAP_NAMES)} flags, got {len(enabled)}")
    if tuple(guessed.shape[-3:-1]) != tuple(maps.resolution):
        raise ValueError(f"fourier_loss: shape mismatch {tuple(maps.diffuse.shape)} vs {tuple(guessed.shape)}")

    reference = _spectrum(guessed.mean(dim=-1))
    if not complex_difference:
        reference = reference.abs()

    distances = []
    inputs = _fourier_inputs(maps)
    for name, flag in zip(MAP_NAMES, enabled):
        if not flag:
            continue
        spectrum = _spectrum(inputs[name])
        if complex_difference:
            distances.append((spectrum - reference).abs().mean())
        else:
            distances.append((spectrum.abs() - reference).abs().mean())

    if not distances:
        return torch.zeros((), dtype=maps.dtype, device=maps.diffuse.device)
    return torch.log(torch.stack(distances).mean() + LOG_EPS)


class VggFeatureExtractor(nn.Module):
    """
    Frozen VGG-19 trunk returning the activations at VGG_LAYER_INDICES.

    Takes channels-last images in [0, 1]; ImageNet normalization is applied
    internally. The module never trains.
    """

    def __init__(self, state_dict: Optional[Dict[str, torch.Tensor]] = None,
                 layer_indices: Sequence[int] = VGG_LAYER_INDICES):
        super().__init__()
        self.layer_indices = tuple(sorted(layer_indices))
        self.features = vgg19(weights=None).features[:self.layer_indices[-1] + 1]
        if state_dict is not None:
            self.features.load_state_dict(self._trunk_state(state_dict))

        self.register_buffer('mean', torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer('std', torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))
        self.eval()
        for param in self.parameters():
            param.requires_grad_(False)

    def _trunk_state(self, state_dict: Dict[str, torch.Tensor]) -> Dict[str, torch.Tensor]:
        """Accept either a full torchvision VGG-19 state dict or a bare `features` one."""
        if any(key.startswith('features.') for key in state_dict):
            state_dict = {key[len('features.'):]: value for key, value in state_dict.items()
                          if key.startswith('features.')}
        return {key: value for key, value in state_dict.items()
                if int(key.split('.')[0]) <= self.layer_indices[-1]}

    def train(self, mode: bool = True) -> 'VggFeatureExtractor':
        return super().train(False)

    def forward(self, img: torch.Tensor) -> List[torch.Tensor]:
        x = img.unsqueeze(0) if img.dim() == 3 else img
        x = x.permute(0, 3, 1, 2)
        x = (x - self.mean.to(x.dtype)) / self.std.to(x.dtype)

        activations = []
        for index, layer in enumerate(self.features):
            x = layer(x)
            if index in self.layer_indices:
                activations.append(x)
        return activations


def resolve_weights_path(weights_path: Optional[str]) -> Optional[str]:
    """Config value first, then the SVBRDF_FORGE_WEIGHTS environment variable."""
    return weights_path or os.environ.get(WEIGHTS_ENV_VAR) or None


def load_feature_extractor(weights_path: Optional[str] = None) -> VggFeatureExtractor:
    """
    Load the perceptual feature extractor from a VGG-19 state dict file.

    Raises:
        FeatureExtractorUnavailableError: No path configured, file missing or unreadable.
    """
    path = resolve_weights_path(weights_path)
    if not path:
        raise FeatureExtractorUnavailableError(
            f"no weights path (set perceptual.weights_path or {WEIGHTS_ENV_VAR})")
    if not os.path.exists(path):
        raise FeatureExtractorUnavailableError(f"weights file not found: {path}")

    try:
        state_dict = torch.load(path, map_location='cpu', weights_only=True)
        extractor = VggFeatureExtractor(state_dict)
    except Exception as e:
        raise FeatureExtractorUnavailableError(f"could not load {path}: {e}") from e

    logger.info(f"Loaded VGG-19 feature extractor from {path}")
    return extractor


def perceptual_loss(input_photo: torch.Tensor, rerender: torch.Tensor,
                    fx: Optional[VggFeatureExtractor]) -> torch.Tensor:
    """Equal-weight mean over layers of the L1 distance between feature activations."""
    if fx is None:
        raise FeatureExtractorUnavailableError()
    _check_shapes(input_photo, rerender, "perceptual_loss")

    fx = fx.to(device=rerender.device, dtype=rerender.dtype)
    input_features = fx(input_photo)
    rerender_features = fx(rerender)
    per_layer = [F.l1_loss(r, i) for i, r in zip(input_features, rerender_features)]
    return torch.stack(per_layer).mean()


def joint_generator_loss(diffuse: torch.Tensor, adversarial_g: torch.Tensor, fourier: torch.Tensor,
                         perceptual: torch.Tensor, weights: LossWeights) -> torch.Tensor:
    """Differentiable generator objective, combined the same way as total_generator_loss."""
    return (diffuse
            + weights.lambda_gan * adversarial_g
            + weights.lambda_fourier * fourier
            + weights.lambda_perceptual * perceptual)


def total_generator_loss(diffuse: float, adversarial_g: float, fourier: float, perceptual: float,
                         weights: LossWeights, adversarial_d: float = 0.0) -> LossReport:
    """Combine scalar terms into a LossReport; total = d + lambda*g + lambda1*F + lambda2*P."""
    terms = [float(v) for v in (diffuse, adversarial_g, fourier, perceptual)]
    total = (terms[0]
             + weights.lambda_gan * terms[1]
             + weights.lambda_fourier * terms[2]
             + weights.lambda_perceptual * terms[3])
    return LossReport(
        diffuse=terms[0],
        adversarial_g=terms[1],
        adversarial_d=adversarial_d,
        fourier=terms[2],
        perceptual=terms[3],
        total_generator=total,
    )
