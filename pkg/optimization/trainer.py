"""
Per-image adversarial training and the two-stage schedule.

Stage 1 (pretrain) trains the networks from scratch on one arbitrary photo.
Stage 2 (finetune) starts from that checkpoint and trains briefly on each new
photo. train_from_scratch is the one-stage baseline the schedule replaces.
"""

import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd
import torch
from tqdm import tqdm

from core.exceptions import FeatureExtractorUnavailableError, NonFiniteLossError
from core.models import LdrImage, SceneConfig, SvbrdfMaps
from extraction.diffuse_guess import DEFAULT_SIGMA_FRACTION, GuessedDiffuse, guess_diffuse
from optimization.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from optimization.losses import (
    CSV_COLUMNS, LossReport, LossWeights, VggFeatureExtractor, adversarial_losses, diffuse_loss,
    fourier_loss, joint_generator_loss, load_feature_extractor, perceptual_loss, total_generator_loss,
)
from optimization.networks import (
    MIN_TILE_SIDE, Discriminator, Generator, architecture_spec, generator_forward, init_params, is_power_of_two,
)
from rendering.renderer import DEFAULT_GAMMA, render, tonemap
from reporting.chart_generator import plot_loss_curve

logger = logging.getLogger(__name__)
train_debug_logger = logging.getLogger('TRAIN_DEBUG')

FULL_SCALE = {'pretrain_iters': 10000, 'finetune_iters': 3000, 'scratch_iters': 20000, 'tile_size': 256}


class TrainConfig:
    """
    Hyperparameters of one training run.

    Defaults are the full-scale budgets (10k pretrain, 3k fine-tune, 20k from
    scratch, 256 px tiles); config/forge_config.yaml carries desk-scale values.
    """

    def __init__(self, weights: Optional[LossWeights] = None, learning_rate: float = 2e-5,
                 pretrain_iters: int = 10000, finetune_iters: int = 3000, scratch_iters: int = 20000,
                 tile_size: int = 256, seed: int = 0, adam_betas: Tuple[float, float] = (0.5, 0.999),
                 fourier_per_map_flags: Sequence[bool] = (True, True, True, True),
                 fourier_complex: bool = False, augment: bool = True, disc_steps: int = 1,
                 base_channels: int = 64, max_channels: int = 512, gamma: float = DEFAULT_GAMMA,
                 scene: Optional[SceneConfig] = None, perceptual_weights_path: Optional[str] = None,
                 sigma_fraction: float = DEFAULT_SIGMA_FRACTION, device: str = 'cpu',
                 show_progress: bool = True):
        self.weights = weights or LossWeights()
        self.learning_rate = float(learning_rate)
        self.pretrain_iters = int(pretrain_iters)
        self.finetune_iters = int(finetune_iters)
        self.scratch_iters = int(scratch_iters)
        self.tile_size = int(tile_size)
        self.seed = int(seed)
        self.adam_betas = (float(adam_betas[0]), float(adam_betas[1]))
        self.fourier_per_map_flags = tuple(bool(f) for f in fourier_per_map_flags)
        self.fourier_complex = bool(fourier_complex)
        self.augment = bool(augment)
        self.disc_steps = int(disc_steps)
        self.base_channels = int(base_channels)
        self.max_channels = int(max_channels)
        self.gamma = float(gamma)
        self.scene = scene or SceneConfig()
        self.perceptual_weights_path = perceptual_weights_path
        self.sigma_fraction = float(sigma_fraction)
        self.device = device
        self.show_progress = bool(show_progress)

        errors = self.get_validation_errors()
        if errors:
            raise ValueError("Invalid training config: " + "; ".join(errors))

    def get_validation_errors(self) -> List[str]:
        errors = []
        if self.learning_rate <= 0:
            errors.append("learning_rate must be > 0")
        if self.pretrain_iters <= 0 or self.scratch_iters <= 0:
            errors.append("pretrain_iters and scratch_iters must be > 0")
        if self.finetune_iters < 0:
            errors.append("finetune_iters must be >= 0")
        if not is_power_of_two(self.tile_size) or self.tile_size < MIN_TILE_SIDE:
            errors.append(f"tile_size must be a power of two >= {MIN_TILE_SIDE}, got {self.tile_size}")
        if len(self.fourier_per_map_flags) != 4:
            errors.append("fourier_per_map_flags needs 4 entries")
        if self.disc_steps < 1:
            errors.append("disc_steps must be >= 1")
        return errors

    @property
    def architecture(self) -> Dict[str, Dict]:
        return architecture_spec(self.tile_size, self.base_channels, self.max_channels)

    def with_changes(self, **changes) -> 'TrainConfig':
        values = self._constructor_values()
        values.update(changes)
        return TrainConfig(**values)

    def with_weights(self, **weight_changes) -> 'TrainConfig':
        return self.with_changes(weights=self.weights.with_changes(**weight_changes))

    def _constructor_values(self) -> Dict[str, object]:
        return {
            'weights': self.weights, 'learning_rate': self.learning_rate,
            'pretrain_iters': self.pretrain_iters, 'finetune_iters': self.finetune_iters,
            'scratch_iters': self.scratch_iters, 'tile_size': self.tile_size, 'seed': self.seed,
            'adam_betas': self.adam_betas, 'fourier_per_map_flags': self.fourier_per_map_flags,
            'fourier_complex': self.fourier_complex, 'augment': self.augment, 'disc_steps': self.disc_steps,
            'base_channels': self.base_channels, 'max_channels': self.max_channels, 'gamma': self.gamma,
            'scene': self.scene, 'perceptual_weights_path': self.perceptual_weights_path,
            'sigma_fraction': self.sigma_fraction, 'device': self.device, 'show_progress': self.show_progress,
        }

    def to_dict(self) -> Dict[str, object]:
        """Plain-type view used for the checkpoint config fingerprint."""
        values = self._constructor_values()
        values['weights'] = self.weights.to_dict()
        values['scene'] = self.scene.to_dict()
        for key in ('device', 'show_progress', 'perceptual_weights_path'):
            values.pop(key)
        return values

    @classmethod
    def from_config(cls, config: Optional[Dict], full_scale: bool = False) -> 'TrainConfig':
        """Build from the `training`, `losses`, `fourier`, `networks`, `perceptual` and `scene` sections."""
        config = config or {}
        training = dict(config.get('training', {}))
        if full_scale:
            training.update(FULL_SCALE)
        fourier = config.get('fourier', {})
        networks = config.get('networks', {})
        flags = fourier.get('per_map', {})
        return cls(
            weights=LossWeights.from_config(config),
            learning_rate=training.get('learning_rate', 2e-5),
            pretrain_iters=training.get('pretrain_iters', 10000),
            finetune_iters=training.get('finetune_iters', 3000),
            scratch_iters=training.get('scratch_iters', 20000),
            tile_size=training.get('tile_size', 256),
            seed=training.get('seed', 0),
            adam_betas=tuple(training.get('adam_betas', (0.5, 0.999))),
            fourier_per_map_flags=tuple(flags.get(name, True)
                                        for name in ('diffuse', 'specular', 'roughness', 'normal')),
            fourier_complex=fourier.get('complex', False),
            augment=training.get('augment', True),
            disc_steps=training.get('disc_steps', 1),
            base_channels=networks.get('base_channels', 64),
            max_channels=networks.get('max_channels', 512),
            gamma=config.get('scene', {}).get('gamma', DEFAULT_GAMMA),
            scene=SceneConfig.from_config(config),
            perceptual_weights_path=config.get('perceptual', {}).get('weights_path'),
            sigma_fraction=config.get('diffuse_guess', {}).get('sigma_fraction', DEFAULT_SIGMA_FRACTION),
            device=training.get('device', 'cpu'),
            show_progress=training.get('show_progress', True),
        )

    def __repr__(self) -> str:
        return (f"TrainConfig(iters={self.pretrain_iters}/{self.finetune_iters}/{self.scratch_iters}, "
                f"tile={self.tile_size}, lr={self.learning_rate}, seed={self.seed}, {self.weights})")


class TrainState:
    """Both networks, their Adam optimizers, the tile RNG and the iteration counter."""

    def __init__(self, generator: Generator, discriminator: Discriminator, config: TrainConfig,
                 iteration: int = 0, rng: Optional[torch.Generator] = None):
        self.generator = generator.to(config.device)
        self.discriminator = discriminator.to(config.device)
        self.optimizer_g = torch.optim.Adam(self.generator.parameters(), lr=config.learning_rate,
                                            betas=config.adam_betas)
        self.optimizer_d = torch.optim.Adam(self.discriminator.parameters(), lr=config.learning_rate,
                                            betas=config.adam_betas)
        self.iteration = iteration
        self.rng = rng if rng is not None else torch.Generator().manual_seed(config.seed)
        self.history: List[Dict[str, float]] = []

    @classmethod
    def initialize(cls, config: TrainConfig) -> 'TrainState':
        generator, discriminator = init_params(config.seed, config.tile_size,
                                               config.base_channels, config.max_channels)
        return cls(generator, discriminator, config)

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint, config: TrainConfig, resume: bool = True) -> 'TrainState':
        """
        Rebuild a state from a checkpoint.

        resume=True restores optimizer moments, RNG and iteration counter so
        training continues exactly. resume=False keeps only the weights, the
        fine-tuning starting point.
        """
        checkpoint.require_compatible(config.architecture)
        generator, discriminator = checkpoint.build_networks()
        state = cls(generator, discriminator, config)
        if resume:
            if checkpoint.optimizer_g_state is not None:
                state.optimizer_g.load_state_dict(checkpoint.optimizer_g_state)
            if checkpoint.optimizer_d_state is not None:
                state.optimizer_d.load_state_dict(checkpoint.optimizer_d_state)
            if checkpoint.rng_state is not None:
                state.rng.set_state(checkpoint.rng_state)
            state.iteration = checkpoint.iteration
        return state

    def to_checkpoint(self, config: TrainConfig) -> Checkpoint:
        return Checkpoint.from_networks(
            self.generator.cpu(), self.discriminator.cpu(),
            train_config=config.to_dict(),
            iteration=self.iteration,
            optimizer_g_state=self.optimizer_g.state_dict(),
            optimizer_d_state=self.optimizer_d.state_dict(),
            rng_state=self.rng.get_state(),
        )


def save_state(state: TrainState, config: TrainConfig, path: str) -> Checkpoint:
    checkpoint = state.to_checkpoint(config)
    state.generator.to(config.device)
    state.discriminator.to(config.device)
    save_checkpoint(checkpoint, path)
    return checkpoint


def load_state(path: str, config: TrainConfig) -> TrainState:
    return TrainState.from_checkpoint(load_checkpoint(path), config, resume=True)


def configure_determinism():
    torch.use_deterministic_algorithms(True, warn_only=True)


def draw_tile_offset(height: int, width: int, tile_size: int, rng: torch.Generator) -> Tuple[int, int]:
    """Uniform top-left corner of a tile_size crop inside a height x width image."""
    if height < tile_size or width < tile_size:
        raise ValueError(f"photo {height}x{width} is smaller than the {tile_size}px tile")
    top = int(torch.randint(0, height - tile_size + 1, (1,), generator=rng).item())
    left = int(torch.randint(0, width - tile_size + 1, (1,), generator=rng).item())
    return top, left


def sample_tile(photo: torch.Tensor, rng: torch.Generator, tile_size: int, augment: bool = True) -> torch.Tensor:
    """
    Random axis-aligned tile_size crop of a channels-last (H, W, C) image.

    With augment, the crop is also rotated by a random multiple of 90 degrees
    and randomly mirrored; stationary textures keep their statistics under both.
    """
    top, left = draw_tile_offset(photo.shape[0], photo.shape[1], tile_size, rng)
    tile = photo[top:top + tile_size, left:left + tile_size]
    if augment:
        quarter_turns = int(torch.randint(0, 4, (1,), generator=rng).item())
        mirror = bool(torch.randint(0, 2, (1,), generator=rng).item())
        tile = torch.rot90(tile, quarter_turns, dims=(0, 1))
        if mirror:
            tile = torch.flip(tile, dims=(1,))
    return tile


def _sample_training_pair(photo: LdrImage, guessed: torch.Tensor, rng: torch.Generator,
                          config: TrainConfig) -> Tuple[torch.Tensor, torch.Tensor]:
    """Crop photo and guessed map at the same place by cropping their channel stack."""
    stacked = sample_tile(torch.cat((photo, guessed), dim=-1), rng, config.tile_size, config.augment)
    return stacked[..., :3].unsqueeze(0), stacked[..., 3:].unsqueeze(0)


def rerender(maps: SvbrdfMaps, config: TrainConfig) -> LdrImage:
    """Maps rendered under the canonical scene, in display encoding."""
    return tonemap(render(maps, config.scene), config.gamma)


def train_step(state: TrainState, photo: LdrImage, guessed: GuessedDiffuse, config: TrainConfig,
               fx: Optional[VggFeatureExtractor] = None) -> Tuple[TrainState, LossReport]:
    """
    One discriminator update followed by one generator update on a random tile.

    Raises:
        NonFiniteLossError: Any loss term is NaN or inf; no optimizer step is taken.
    """
    weights = config.weights
    next_iteration = state.iteration + 1
    photo_tile, guess_tile = _sample_training_pair(photo, guessed.map.to(photo.dtype), state.rng, config)

    # Discriminator: real photo tiles vs re-renders of the current prediction.
    with torch.no_grad():
        fake = rerender(state.generator(photo_tile), config)
    for _ in range(config.disc_steps):
        disc_real = state.discriminator(photo_tile)
        d_loss, _ = adversarial_losses(disc_real, state.discriminator(fake))
        if not torch.isfinite(d_loss):
            report = LossReport(float('nan'), float('nan'), d_loss.item(), float('nan'), float('nan'), float('nan'))
            raise NonFiniteLossError(report, next_iteration)
        state.optimizer_d.zero_grad()
        d_loss.backward()
        state.optimizer_d.step()

    # Generator: joint loss on the same tile.
    maps = state.generator(photo_tile)
    rendered = rerender(maps, config)
    loss_diffuse = diffuse_loss(tonemap(maps.diffuse, config.gamma), guess_tile)
    _, loss_adv_g = adversarial_losses(disc_real.detach(), state.discriminator(rendered))
    loss_fourier = fourier_loss(maps, guess_tile, config.fourier_per_map_flags, config.fourier_complex)
    if weights.lambda_perceptual > 0 and fx is not None:
        loss_perceptual = perceptual_loss(photo_tile, rendered, fx)
    else:
        loss_perceptual = torch.zeros((), dtype=loss_diffuse.dtype, device=loss_diffuse.device)

    total = joint_generator_loss(loss_diffuse, loss_adv_g, loss_fourier, loss_perceptual, weights)
    report = total_generator_loss(loss_diffuse.item(), loss_adv_g.item(), loss_fourier.item(),
                                  loss_perceptual.item(), weights, adversarial_d=d_loss.item())
    if not report.is_finite() or not torch.isfinite(total):
        raise NonFiniteLossError(report, next_iteration)

    state.optimizer_g.zero_grad()
    total.backward()
    state.optimizer_g.step()

    state.iteration = next_iteration
    state.history.append(report.to_row(next_iteration))
    train_debug_logger.debug(f"iter {next_iteration}: {report}")
    return state, report


def run_iterations(state: TrainState, photo: LdrImage, guessed: GuessedDiffuse, config: TrainConfig,
                   iterations: int, fx: Optional[VggFeatureExtractor] = None,
                   desc: str = "Training") -> List[LossReport]:
    reports = []
    for _ in tqdm(range(iterations), desc=desc, disable=not config.show_progress):
        _, report = train_step(state, photo, guessed, config, fx)
        reports.append(report)
    if reports:
        logger.info(f"{desc}: {iterations} iterations done, last {reports[-1]}")
    return reports


def prepare_perceptual(config: TrainConfig, fx: Optional[VggFeatureExtractor] = None
                       ) -> Tuple[TrainConfig, Optional[VggFeatureExtractor]]:
    """Load the feature extractor when needed; without it the perceptual weight drops to 0."""
    if config.weights.lambda_perceptual == 0 or fx is not None:
        return config, fx
    try:
        return config, load_feature_extractor(config.perceptual_weights_path)
    except FeatureExtractorUnavailableError as e:
        logger.warning(f"{e}; training continues with lambda_perceptual = 0")
        return config.with_weights(lambda_perceptual=0.0), None


def _prepare_inputs(photo: LdrImage, config: TrainConfig,
                    guessed: Optional[GuessedDiffuse]) -> Tuple[LdrImage, GuessedDiffuse]:
    if guessed is None:
        guessed = guess_diffuse(photo, sigma_fraction=config.sigma_fraction)
    photo = photo.to(config.device)
    guessed = GuessedDiffuse(guessed.map.to(device=config.device, dtype=photo.dtype),
                             guessed.stationarity_score, guessed.saturated_fraction)
    return photo, guessed


def loss_curve_paths(checkpoint_path: str) -> Tuple[str, str]:
    stem = os.path.splitext(checkpoint_path)[0]
    return f"{stem}_losses.csv", f"{stem}_losses.png"


def write_loss_curve(history: List[Dict[str, float]], csv_path: str, png_path: Optional[str] = None) -> pd.DataFrame:
    """Save the per-iteration losses as CSV (and optionally a PNG chart)."""
    df = pd.DataFrame(history, columns=CSV_COLUMNS)
    parent = os.path.dirname(csv_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    df.to_csv(csv_path, index=False)
    logger.info(f"Loss curve saved to {csv_path}")
    if png_path and not df.empty:
        plot_loss_curve(df, png_path)
    return df


def _finish(state: TrainState, config: TrainConfig, out_path: Optional[str]) -> Checkpoint:
    if out_path:
        checkpoint = save_state(state, config, out_path)
        write_loss_curve(state.history, *loss_curve_paths(out_path))
    else:
        checkpoint = state.to_checkpoint(config)
        state.generator.to(config.device)
        state.discriminator.to(config.device)
    return checkpoint


def pretrain(photo: LdrImage, config: TrainConfig, out_path: Optional[str] = None,
             fx: Optional[VggFeatureExtractor] = None, guessed: Optional[GuessedDiffuse] = None) -> Checkpoint:
    """Stage 1: pretrain_iters steps from init_params(seed) on a single photo."""
    configure_determinism()
    config, fx = prepare_perceptual(config, fx)
    photo, guessed = _prepare_inputs(photo, config, guessed)
    logger.info(f"Pretraining on {photo.shape[0]}x{photo.shape[1]} photo: {config}")

    state = TrainState.initialize(config)
    run_iterations(state, photo, guessed, config, config.pretrain_iters, fx, desc="Pretraining")
    return _finish(state, config, out_path)


def finetune(checkpoint: Checkpoint, photo: LdrImage, config: TrainConfig, out_path: Optional[str] = None,
             fx: Optional[VggFeatureExtractor] = None,
             guessed: Optional[GuessedDiffuse] = None) -> Tuple[SvbrdfMaps, Checkpoint]:
    """
    Stage 2: continue from a pretrained checkpoint for finetune_iters steps.

    Raises:
        CheckpointError: The checkpoint was built for a different tile size or network width.
    """
    configure_determinism()
    checkpoint.require_compatible(config.architecture)
    config, fx = prepare_perceptual(config, fx)
    photo, guessed = _prepare_inputs(photo, config, guessed)
    logger.info(f"Fine-tuning {checkpoint} for {config.finetune_iters} iterations")

    state = TrainState.from_checkpoint(checkpoint, config, resume=False)
    run_iterations(state, photo, guessed, config, config.finetune_iters, fx, desc="Fine-tuning")
    maps = infer_maps(state.generator, photo)
    return maps, _finish(state, config, out_path)


def train_from_scratch(photo: LdrImage, config: TrainConfig, out_path: Optional[str] = None,
                       fx: Optional[VggFeatureExtractor] = None,
                       guessed: Optional[GuessedDiffuse] = None) -> Tuple[SvbrdfMaps, Checkpoint]:
    """One-stage baseline: scratch_iters steps from init_params(seed)."""
    configure_determinism()
    config, fx = prepare_perceptual(config, fx)
    photo, guessed = _prepare_inputs(photo, config, guessed)
    logger.info(f"Training from scratch for {config.scratch_iters} iterations")

    state = TrainState.initialize(config)
    run_iterations(state, photo, guessed, config, config.scratch_iters, fx, desc="Training from scratch")
    maps = infer_maps(state.generator, photo)
    return maps, _finish(state, config, out_path)


def inference_crop(photo: LdrImage) -> LdrImage:
    """Largest centered power-of-two square of the photo."""
    height, width = photo.shape[0], photo.shape[1]
    side = 1 << (min(height, width).bit_length() - 1)
    if side < MIN_TILE_SIDE:
        raise ValueError(f"photo {height}x{width} is smaller than the minimum {MIN_TILE_SIDE}px inference size")
    if (side, side) != (height, width):
        logger.warning(f"Photo {height}x{width} center-cropped to {side}x{side} for inference")
    top, left = (height - side) // 2, (width - side) // 2
    return photo[top:top + side, left:left + side]


def infer_maps(generator: Generator, photo: LdrImage) -> SvbrdfMaps:
    """Full-image prediction on inference_crop(photo); the result is validated."""
    with torch.no_grad():
        maps = generator_forward(inference_crop(photo), generator)
    maps = maps.to('cpu')
    return SvbrdfMaps(maps.diffuse, maps.specular, maps.roughness, maps.normal)
