"""
Versioned checkpoint container for both networks and their training state.

File layout is documented in docs/checkpoint.md. Writes go to a temporary
file first and are renamed into place, so a checkpoint on disk is always
complete.
"""

import hashlib
import json
import logging
import os
from typing import Any, Dict, Optional, Tuple

import torch

from core.exceptions import CheckpointError
from optimization.networks import Discriminator, Generator

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
REQUIRED_KEYS = ('format_version', 'architecture', 'architecture_fingerprint', 'config_fingerprint',
                 'generator', 'discriminator')


def fingerprint(payload: Dict[str, Any]) -> str:
    """Stable short hash of a JSON-serializable dict."""
    encoded = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(encoded).hexdigest()[:16]


def architecture_of(generator: Generator, discriminator: Discriminator) -> Dict[str, Any]:
    return {'generator': generator.architecture(), 'discriminator': discriminator.architecture()}


class Checkpoint:
    """
    Everything needed to rebuild the networks and resume training.

    The architecture fingerprint decides compatibility (fine-tuning needs the
    same tile size and network widths); the config fingerprint records the
    full TrainConfig the state was produced with.
    """

    def __init__(self, generator_state: Dict[str, torch.Tensor], discriminator_state: Dict[str, torch.Tensor],
                 architecture: Dict[str, Any], train_config: Optional[Dict[str, Any]] = None,
                 iteration: int = 0, optimizer_g_state: Optional[Dict] = None,
                 optimizer_d_state: Optional[Dict] = None, rng_state: Optional[torch.Tensor] = None):
        self.generator_state = generator_state
        self.discriminator_state = discriminator_state
        self.architecture = architecture
        self.train_config = train_config or {}
        self.iteration = int(iteration)
        self.optimizer_g_state = optimizer_g_state
        self.optimizer_d_state = optimizer_d_state
        self.rng_state = rng_state

    @property
    def architecture_fingerprint(self) -> str:
        return fingerprint(self.architecture)

    @property
    def config_fingerprint(self) -> str:
        return fingerprint(self.train_config)

    def build_networks(self) -> Tuple[Generator, Discriminator]:
        """Instantiate both networks from the stored architecture and weights."""
        gen_arch = self.architecture['generator']
        disc_arch = self.architecture['discriminator']
        generator = Generator(base_channels=gen_arch['base_channels'], max_channels=gen_arch['max_channels'])
        discriminator = Discriminator(tile_size=disc_arch['tile_size'], base_channels=disc_arch['base_channels'],
                                      max_channels=disc_arch['max_channels'])
        try:
            generator.load_state_dict(self.generator_state)
            discriminator.load_state_dict(self.discriminator_state)
        except RuntimeError as e:
            raise CheckpointError(f"checkpoint weights do not fit the stored architecture: {e}") from e
        return generator, discriminator

    def require_compatible(self, architecture: Dict[str, Any]):
        """Raise CheckpointError unless this checkpoint was built for the given architecture."""
        expected = fingerprint(architecture)
        if expected != self.architecture_fingerprint:
            raise CheckpointError(
                f"checkpoint fingerprint {self.architecture_fingerprint} does not match the configured "
                f"networks ({expected}); stored architecture: {self.architecture}, requested: {architecture}"
            )

    def to_payload(self) -> Dict[str, Any]:
        return {
            'format_version': FORMAT_VERSION,
            'architecture': self.architecture,
            'architecture_fingerprint': self.architecture_fingerprint,
            'config_fingerprint': self.config_fingerprint,
            'train_config': self.train_config,
            'iteration': self.iteration,
            'generator': self.generator_state,
            'discriminator': self.discriminator_state,
            'optimizer_g': self.optimizer_g_state,
            'optimizer_d': self.optimizer_d_state,
            'rng_state': self.rng_state,
        }

    @classmethod
    def from_networks(cls, generator: Generator, discriminator: Discriminator, **kwargs) -> 'Checkpoint':
        return cls(
            generator_state={k: v.detach().clone() for k, v in generator.state_dict().items()},
            discriminator_state={k: v.detach().clone() for k, v in discriminator.state_dict().items()},
            architecture=architecture_of(generator, discriminator),
            **kwargs,
        )

    def __repr__(self) -> str:
        return (f"Checkpoint(iteration={self.iteration}, arch={self.architecture_fingerprint}, "
                f"config={self.config_fingerprint})")


def save_checkpoint(checkpoint: Checkpoint, path: str):
    """Atomically write a checkpoint to path."""
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    tmp_path = f"{path}.tmp"
    try:
        torch.save(checkpoint.to_payload(), tmp_path)
        os.replace(tmp_path, path)
    finally:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
    logger.info(f"Saved checkpoint to {path} (iteration {checkpoint.iteration})")


def load_checkpoint(path: str) -> Checkpoint:
    """
    Read a checkpoint written by save_checkpoint.

    Raises:
        CheckpointError: Missing or corrupt file, or a different format version.
    """
    if not os.path.exists(path):
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location='cpu', weights_only=True)
    except Exception as e:
        raise CheckpointError(f"corrupt checkpoint {path}: {e}") from e

    if not isinstance(payload, dict) or 'format_version' not in payload:
        raise CheckpointError(f"corrupt checkpoint {path}: missing version header")
    version = payload['format_version']
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version} is not supported (this build reads version {FORMAT_VERSION})")
    missing = [key for key in REQUIRED_KEYS if key not in payload]
    if missing:
        raise CheckpointError(f"corrupt checkpoint {path}: missing {missing}")

    checkpoint = Checkpoint(
        generator_state=payload['generator'],
        discriminator_state=payload['discriminator'],
        architecture=payload['architecture'],
        train_config=payload.get('train_config'),
        iteration=payload.get('iteration', 0),
        optimizer_g_state=payload.get('optimizer_g'),
        optimizer_d_state=payload.get('optimizer_d'),
        rng_state=payload.get('rng_state'),
    )
    if checkpoint.architecture_fingerprint != payload['architecture_fingerprint']:
        raise CheckpointError(f"corrupt checkpoint {path}: architecture fingerprint does not match its header")
    logger.info(f"Loaded checkpoint {path}: {checkpoint}")
    return checkpoint


def save_params(generator: Generator, discriminator: Discriminator, path: str):
    """Save network weights only (no optimizer or RNG state)."""
    save_checkpoint(Checkpoint.from_networks(generator, discriminator), path)


def load_params(path: str) -> Tuple[Generator, Discriminator]:
    return load_checkpoint(path).build_networks()
