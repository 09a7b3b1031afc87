import pytest
import torch
import torch.nn as nn

from core.models import ALPHA_MIN, SceneConfig
from optimization.networks import (
    Discriminator, Generator, architecture_spec, discriminator_forward, generator_forward, init_params,
    is_power_of_two, logit_grid_side, receptive_field,
)
from simulations.material_synth import MaterialSpec, render_input, synth_material

NARROW = {'base_channels': 4, 'max_channels': 16}


def photo(side, seed=0):
    return torch.rand(side, side, 3, generator=torch.Generator().manual_seed(seed))


@pytest.mark.parametrize('side', [64, 128, 256])
def test_generator_preserves_resolution(side):
    generator, _ = init_params(0, tile_size=side, **NARROW)
    with torch.no_grad():
        maps = generator_forward(photo(side), generator)
    assert maps.resolution == (side, side)
    assert maps.diffuse.shape == (side, side, 3)
    assert maps.specular.shape == (side, side, 1)


def test_generator_accepts_batches():
    generator, _ = init_params(0, tile_size=64, **NARROW)
    batch = torch.stack((photo(64, 0), photo(64, 1)))
    with torch.no_grad():
        maps = generator_forward(batch, generator)
    assert maps.normal.shape == (2, 64, 64, 3)


@pytest.mark.parametrize('shape', [(96, 96, 3), (32, 32, 3), (64, 128, 3)])
def test_generator_rejects_bad_tiles(shape):
    generator, _ = init_params(0, tile_size=64, **NARROW)
    with pytest.raises(ValueError):
        generator_forward(torch.zeros(shape), generator)


def test_same_seed_same_networks():
    g1, d1 = init_params(3, tile_size=64, **NARROW)
    g2, d2 = init_params(3, tile_size=64, **NARROW)
    for a, b in zip(list(g1.state_dict().values()) + list(d1.state_dict().values()),
                    list(g2.state_dict().values()) + list(d2.state_dict().values())):
        assert torch.equal(a, b)
    with torch.no_grad():
        assert torch.equal(g1(photo(64)).diffuse, g2(photo(64)).diffuse)


def test_different_seeds_differ():
    g1, _ = init_params(0, tile_size=64, **NARROW)
    g2, _ = init_params(1, tile_size=64, **NARROW)
    assert not torch.equal(g1.encoder[0][0].weight, g2.encoder[0][0].weight)


def test_init_ignores_the_global_rng():
    torch.manual_seed(1)
    g1, _ = init_params(5, tile_size=64, **NARROW)
    torch.manual_seed(999)
    g2, _ = init_params(5, tile_size=64, **NARROW)
    assert torch.equal(g1.encoder[1][0].weight, g2.encoder[1][0].weight)


def test_outputs_stay_in_range_over_ten_thousand_tiles():
    seeds, batch = 250, 40
    for seed in range(seeds):
        generator, _ = init_params(seed, tile_size=64, **NARROW)
        tiles = torch.rand(batch, 64, 64, 3, generator=torch.Generator().manual_seed(seed))
        tiles[0] = 0.0
        tiles[1] = 1.0
        tiles[2] = (tiles[2] > 0.5).float()
        with torch.no_grad():
            maps = generator(tiles)
        assert maps.get_validation_errors() == [], seed
        assert maps.roughness.min() >= ALPHA_MIN - 1e-6
        assert maps.diffuse.min() >= 0 and maps.diffuse.max() <= 1
        assert maps.specular.min() >= 0 and maps.specular.max() <= 1
        norms = maps.normal.norm(dim=-1)
        assert torch.allclose(norms, torch.ones_like(norms), atol=1e-5)
        assert (maps.normal[..., 2] > 0).all()


def test_default_width_generator_varies_over_a_texture():
    spec = MaterialSpec('noise-tile', period=8, side=64, seed=0)
    tile = render_input(synth_material(spec), SceneConfig())
    generator, _ = init_params(0, tile_size=64)
    with torch.no_grad():
        maps = generator_forward(tile, generator)
    for name, tensor in maps.items():
        assert tensor.std() > 0, name


@pytest.mark.parametrize('side, grid', [(256, 30), (64, 6), (128, 14)])
def test_discriminator_grid(side, grid):
    _, discriminator = init_params(0, tile_size=side, **NARROW)
    with torch.no_grad():
        logits = discriminator_forward(photo(side), discriminator)
    assert logits.shape == (grid, grid)
    assert logit_grid_side(side) == grid


def test_default_width_discriminator_grid():
    _, discriminator = init_params(0, tile_size=256)
    with torch.no_grad():
        logits = discriminator_forward(photo(256), discriminator)
    assert logits.shape == (30, 30)


def test_receptive_field_is_70():
    assert receptive_field() == 70


def without_instance_norm(discriminator):
    for block in discriminator.model:
        if isinstance(block, nn.Sequential):
            for index, layer in enumerate(block):
                if isinstance(layer, nn.InstanceNorm2d):
                    block[index] = nn.Identity()
    return discriminator


def test_logit_grid_moves_one_cell_per_eight_pixel_shift():
    _, discriminator = init_params(2, tile_size=128, **NARROW)
    discriminator = without_instance_norm(discriminator).double()
    img = torch.rand(128, 128, 3, generator=torch.Generator().manual_seed(4), dtype=torch.float64)
    shifted = torch.roll(img, shifts=(8, 8), dims=(0, 1))
    with torch.no_grad():
        base = discriminator_forward(img, discriminator)
        moved = discriminator_forward(shifted, discriminator)
    # Cells 4..10 see only unwrapped pixels away from the padding in both images.
    torch.testing.assert_close(moved[4:11, 4:11], base[3:10, 3:10], rtol=0, atol=1e-10)
    assert not torch.allclose(moved[4:11, 4:11], base[4:11, 4:11])


def test_identical_inputs_give_identical_logits():
    _, discriminator = init_params(0, tile_size=64, **NARROW)
    img = photo(64)
    with torch.no_grad():
        assert torch.equal(discriminator(img), discriminator(img.clone()))


def test_zero_weights_give_zero_logits():
    discriminator = Discriminator(tile_size=64, **NARROW)
    with torch.no_grad():
        for param in discriminator.parameters():
            param.zero_()
        logits = discriminator(photo(64))
    assert torch.equal(logits, torch.zeros_like(logits))


def test_discriminator_rejects_other_sizes():
    _, discriminator = init_params(0, tile_size=64, **NARROW)
    with pytest.raises(ValueError, match='64px'):
        discriminator_forward(photo(128), discriminator)


def test_architecture_spec_matches_built_networks():
    generator, discriminator = init_params(0, tile_size=128, **NARROW)
    spec = architecture_spec(128, **NARROW)
    assert spec['generator'] == generator.architecture()
    assert spec['discriminator'] == discriminator.architecture()


def test_is_power_of_two():
    assert [n for n in range(1, 70) if is_power_of_two(n)] == [1, 2, 4, 8, 16, 32, 64]
    assert not is_power_of_two(0)


def test_generator_is_differentiable():
    generator = Generator(**NARROW)
    maps = generator(photo(64))
    (maps.diffuse.mean() + maps.normal.mean() + maps.roughness.mean()).backward()
    assert all(p.grad is not None for p in generator.encoder.parameters())
