import os
import sys

import pytest
import torch

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from optimization.losses import LossWeights, VggFeatureExtractor  # noqa: E402
from optimization.trainer import TrainConfig  # noqa: E402


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='run the long acceptance tests')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long-running acceptance test (needs --runslow)')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def tiny_config():
    """Narrow networks, 64 px tiles and a handful of iterations."""
    return TrainConfig(
        weights=LossWeights(lambda_gan=0.1, lambda_fourier=0.1, lambda_perceptual=0.0),
        learning_rate=1e-4,
        pretrain_iters=3,
        finetune_iters=2,
        scratch_iters=3,
        tile_size=64,
        seed=0,
        base_channels=4,
        max_channels=16,
        show_progress=False,
    )


@pytest.fixture(scope='session')
def seeded_vgg():
    """Randomly initialized VGG-19 trunk; stands in for pretrained weights in tests."""
    with torch.random.fork_rng():
        torch.manual_seed(1234)
        return VggFeatureExtractor()


@pytest.fixture
def grad_check():
    """Compare autograd with central differences on a few random entries of x."""

    def check(fn, x, n_entries=5, step=1e-3, rtol=1e-3, atol=1e-7, seed=0):
        x = x.detach().clone().double().requires_grad_(True)
        fn(x).backward()
        analytic = x.grad.detach().flatten()

        rng = torch.Generator().manual_seed(seed)
        indices = torch.randperm(x.numel(), generator=rng)[:n_entries]
        flat = x.detach().flatten()
        for index in indices.tolist():
            plus, minus = flat.clone(), flat.clone()
            plus[index] += step
            minus[index] -= step
            with torch.no_grad():
                numeric = (fn(plus.view_as(x)) - fn(minus.view_as(x))).item() / (2 * step)
            assert abs(analytic[index].item() - numeric) <= rtol * abs(numeric) + atol, (
                f"entry {index}: autograd {analytic[index].item():.8g} vs finite difference {numeric:.8g}")

    return check
