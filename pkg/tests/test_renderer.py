import math

import numpy as np
import pytest
import torch

from core.models import SceneConfig, SvbrdfMaps
from rendering.renderer import (
    calibrate_light_intensity, normalize_normals, pixel_positions, relight, render, tonemap,
)
from simulations.material_synth import MaterialSpec, synth_material, uniform_material


def test_center_pixel_matches_closed_form():
    # Odd side puts a pixel center exactly under the light.
    side, alpha, f0 = 65, 0.6, 0.04
    maps = uniform_material(side, specular=f0, roughness=alpha, dtype=torch.float64)
    scene = SceneConfig()
    radiance = render(maps, scene)

    d_term = 1.0 / (math.pi * alpha ** 2)
    f = 0.5 / math.pi + d_term * f0 / 4.0
    expected = f * scene.light_intensity / scene.light_height ** 2
    center = radiance[side // 2, side // 2]
    assert torch.allclose(center, torch.full((3,), expected, dtype=torch.float64), rtol=1e-9)


def test_diffuse_only_matches_inverse_square_cosine():
    side = 16
    rng = torch.Generator().manual_seed(0)
    maps = uniform_material(side, dtype=torch.float64)
    maps.diffuse = torch.rand(side, side, 3, generator=rng, dtype=torch.float64)
    scene = SceneConfig(plane_extent=1.5, light_height=2.5, light_intensity=3.0)

    coords = ((np.arange(side) + 0.5) / side - 0.5) * 2 * 1.5
    x = coords[None, :]
    y = -coords[:, None]
    d2 = x ** 2 + y ** 2 + 2.5 ** 2
    cos = 2.5 / np.sqrt(d2)
    expected = maps.diffuse.numpy() / math.pi * (cos / d2 * 3.0)[:, :, None]
    np.testing.assert_allclose(render(maps, scene).numpy(), expected, rtol=1e-10)


def test_flat_uniform_render_is_radially_symmetric():
    maps = uniform_material(64, specular=0.3, roughness=0.2, dtype=torch.float64)
    img = render(maps, SceneConfig())
    assert torch.allclose(img, torch.flip(img, dims=(0,)), rtol=1e-9)
    assert torch.allclose(img, torch.flip(img, dims=(1,)), rtol=1e-9)
    assert torch.allclose(img, img.transpose(0, 1), rtol=1e-9)


def test_radiance_is_linear_in_intensity():
    maps = synth_material(MaterialSpec('checker', period=8, side=32))
    scene = SceneConfig()
    assert torch.equal(render(maps, scene.scaled_intensity(2.0)), 2.0 * render(maps, scene))


def test_render_is_nonnegative_for_random_maps():
    maps = synth_material(MaterialSpec('noise-tile', period=8, side=32, seed=5))
    img = render(maps, SceneConfig())
    assert img.shape == (32, 32, 3)
    assert torch.isfinite(img).all() and (img >= 0).all()


def test_pixel_positions_span_the_plane():
    positions = pixel_positions((4, 4), 1.0, torch.float64)
    assert positions[0, 0].tolist() == pytest.approx([-0.75, 0.75, 0.0])
    assert positions[3, 3].tolist() == pytest.approx([0.75, -0.75, 0.0])


def test_render_gradients_match_finite_differences(grad_check):
    side = 4
    rng = torch.Generator().manual_seed(2)
    specular = 0.1 + 0.4 * torch.rand(side, side, 1, generator=rng, dtype=torch.float64)
    roughness = 0.3 + 0.4 * torch.rand(side, side, 1, generator=rng, dtype=torch.float64)
    raw_normal = torch.cat((0.3 * torch.randn(side, side, 2, generator=rng, dtype=torch.float64),
                            torch.ones(side, side, 1, dtype=torch.float64)), dim=-1)
    diffuse = 0.2 + 0.6 * torch.rand(side, side, 3, generator=rng, dtype=torch.float64)
    scene = SceneConfig()

    def build(**changes):
        values = {'diffuse': diffuse, 'specular': specular, 'roughness': roughness,
                  'normal': torch.nn.functional.normalize(raw_normal, dim=-1)}
        values.update(changes)
        return SvbrdfMaps(**values, validate=False)

    grad_check(lambda x: render(build(diffuse=x), scene).sum(), diffuse)
    grad_check(lambda x: render(build(specular=x), scene).sum(), specular)
    grad_check(lambda x: render(build(roughness=x), scene).sum(), roughness)
    grad_check(lambda x: render(build(normal=torch.nn.functional.normalize(x, dim=-1)), scene).sum(), raw_normal)


@pytest.mark.parametrize('value, expected', [
    (0.0, 0.0),
    (1.0, 1.0),
    (2.0, 1.0),
    (-0.5, 0.0),
    (0.5, 0.5 ** (1 / 2.2)),
])
def test_tonemap_values(value, expected):
    out = tonemap(torch.tensor([value], dtype=torch.float64))
    assert out.item() == pytest.approx(expected, abs=1e-12)


def test_tonemap_is_monotone_and_bounded():
    x = torch.linspace(-1.0, 3.0, 1001, dtype=torch.float64)
    y = tonemap(x)
    assert (y[1:] >= y[:-1]).all()
    assert y.min() >= 0 and y.max() <= 1


def test_tonemap_gradient_is_finite_at_zero():
    x = torch.zeros(3, dtype=torch.float64, requires_grad=True)
    tonemap(x).sum().backward()
    assert torch.isfinite(x.grad).all()


def test_tonemap_rejects_nonpositive_gamma():
    with pytest.raises(ValueError, match='gamma'):
        tonemap(torch.ones(1), gamma=0.0)


@pytest.mark.parametrize('raw, expected, degenerate', [
    ((0.0, 0.0, 2.0), (0.0, 0.0, 1.0), 0),
    ((3.0, 0.0, 4.0), (0.6, 0.0, 0.8), 0),
    ((0.0, 0.0, -1.0), (0.0, 0.0, 1.0), 0),
    ((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), 1),
])
def test_normalize_normals(raw, expected, degenerate):
    normals, count = normalize_normals(torch.tensor([raw], dtype=torch.float64))
    assert normals[0].tolist() == pytest.approx(list(expected), abs=1e-12)
    assert count == degenerate


def test_normalize_normals_output_is_unit_with_positive_z():
    raw = torch.randn(1000, 3, generator=torch.Generator().manual_seed(1), dtype=torch.float64)
    normals, _ = normalize_normals(raw)
    assert torch.allclose(normals.norm(dim=-1), torch.ones(1000, dtype=torch.float64))
    assert (normals[:, 2] > 0).all()


def test_relight_with_zero_offset_matches_capture_render():
    maps = synth_material(MaterialSpec('stripes', period=8, side=32))
    scene = SceneConfig()
    assert torch.equal(relight(maps, scene, (0.0, 0.0)), tonemap(render(maps, scene)))


def test_relight_moves_the_highlight():
    maps = uniform_material(33, specular=0.1, roughness=0.5, dtype=torch.float64)
    img = relight(maps, SceneConfig(), (0.5, 0.0)).mean(dim=-1)
    row, col = divmod(int(img.argmax()), img.shape[1])
    assert row == 16
    assert col > 16


def test_calibrated_intensity_puts_mid_gray_at_half():
    intensity = calibrate_light_intensity()
    assert intensity == pytest.approx(5.47, abs=0.01)
    maps = uniform_material(33, dtype=torch.float64)
    ldr = tonemap(render(maps, SceneConfig(light_intensity=intensity)))
    assert ldr[16, 16, 0].item() == pytest.approx(0.5, abs=1e-9)
