"""
Desk-scale reproductions of the recovery claims.

These train real networks for thousands of iterations and only run with
`pytest --runslow`.
"""

import math
import statistics

import pytest
import torch

from core.models import SceneConfig
from optimization.losses import WEIGHTS_ENV_VAR
from optimization.networks import generator_forward
from optimization.trainer import TrainConfig, finetune, pretrain, sample_tile, train_from_scratch
from reporting.metrics_calculator import evaluate
from simulations.ablation_runner import run_ablation
from simulations.material_synth import MaterialSpec, render_input, synth_material
from utils.common import load_main_config

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2, 3, 4)
MATERIALS = (('checker', 32), ('stripes', 32), ('noise-tile', 16))


@pytest.fixture
def desk_config(monkeypatch):
    monkeypatch.delenv(WEIGHTS_ENV_VAR, raising=False)
    config = TrainConfig.from_config(load_main_config())
    return config.with_changes(show_progress=False).with_weights(lambda_perceptual=0.0)


def synthetic_scene(pattern, period, seed=0):
    reference = synth_material(MaterialSpec(pattern, period=period, side=128, seed=seed))
    return render_input(reference, SceneConfig(), overexpose=True), reference


def test_pretrained_generator_predicts_flat_normals_and_dark_specular(desk_config):
    assert desk_config.pretrain_iters == 2000 and desk_config.tile_size == 128
    photo, _ = synthetic_scene('checker', 32, seed=5)
    generator, _ = pretrain(photo, desk_config).build_networks()

    test_photo, _ = synthetic_scene('noise-tile', 16, seed=6)
    tile = sample_tile(test_photo, torch.Generator().manual_seed(0), desk_config.tile_size)
    with torch.no_grad():
        maps = generator_forward(tile, generator)

    mean_normal = maps.normal.reshape(-1, 3).mean(dim=0)
    tilt = math.degrees(math.acos(min(1.0, (mean_normal[2] / mean_normal.norm()).item())))
    assert tilt < 5.0
    assert maps.specular.mean() < maps.diffuse.mean()


@pytest.mark.parametrize('pattern, period', MATERIALS)
def test_fourier_loss_suppresses_the_highlight(desk_config, pattern, period):
    photo, reference = synthetic_scene(pattern, period)
    rows = [run_ablation(photo, desk_config.with_changes(seed=seed), reference=reference,
                         variants=['eq1_only', 'fourier']).set_index('variant')
            for seed in SEEDS]

    for name in ('specular', 'roughness'):
        baseline = statistics.median(abs(row.loc['eq1_only', f'spot_{name}'] - 1.0) for row in rows)
        fourier = statistics.median(abs(row.loc['fourier', f'spot_{name}'] - 1.0) for row in rows)
        assert fourier < baseline, name

        baseline_rmse = statistics.median(row.loc['eq1_only', f'rmse_{name}'] for row in rows)
        fourier_rmse = statistics.median(row.loc['fourier', f'rmse_{name}'] for row in rows)
        assert fourier_rmse <= 1.1 * baseline_rmse, name


def test_specular_spot_ordering_holds_in_most_seeds(desk_config):
    photo, reference = synthetic_scene('checker', 32)
    wins = 0
    for seed in SEEDS:
        rows = run_ablation(photo, desk_config.with_changes(seed=seed), reference=reference,
                            variants=['eq1_only', 'fourier']).set_index('variant')
        wins += rows.loc['eq1_only', 'spot_specular'] >= rows.loc['fourier', 'spot_specular']
    assert wins >= 4


@pytest.mark.parametrize('pattern, period', [('stripes', 16), ('noise-tile', 8)])
def test_finetuning_matches_training_from_scratch(desk_config, pattern, period):
    pretrain_photo, _ = synthetic_scene('checker', 32, seed=7)
    checkpoint = pretrain(pretrain_photo, desk_config)

    photo, reference = synthetic_scene(pattern, period)
    tuned, _ = finetune(checkpoint, photo, desk_config)
    scratch, _ = train_from_scratch(photo, desk_config)

    tuned_l1 = evaluate(tuned, reference, photo).rerender_l1
    scratch_l1 = evaluate(scratch, reference, photo).rerender_l1
    assert abs(tuned_l1 - scratch_l1) <= 0.2 * scratch_l1


def test_recovery_barely_depends_on_the_pretraining_image(desk_config):
    photo, reference = synthetic_scene('noise-tile', 16, seed=3)
    scores = []
    for pattern, period in (('checker', 32), ('bricks', 32)):
        pretrain_photo, _ = synthetic_scene(pattern, period, seed=11)
        maps, _ = finetune(pretrain(pretrain_photo, desk_config), photo, desk_config)
        scores.append(evaluate(maps, reference, photo).rerender_l1)
    assert abs(scores[0] - scores[1]) < 0.15 * max(scores)
