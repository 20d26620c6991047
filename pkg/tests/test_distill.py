"""
Unit tests for score distillation: gradients, the layer generators and both distillation loops
"""
import logging
import warnings

import numpy as np
import pytest
import torch

from src.compose.io import image_to_tensor, read_layer_png
from src.compose.layers import compose_relight
from src.distill.colorize import ColorizeConfig, distill_colorize, head_step
from src.distill.generator import ColorLayerGenerator, LayerGenerator
from src.distill.relight import TRACE_COLUMNS, DistillConfig, distill_relight, timestep_bounds
from src.distill.sds import reg_loss, sds_grad, sds_surrogate, vsd_grad
from src.distill.structure import edge_map, edge_structure_loss, make_sketch
from src.errors import InputValidationError, UntrainedModelError
from src.evaluation.audit import preservation_audit
from src.minirelit.renderer import render_uniform
from src.minirelit.scene import sample_scene
from src.scorer.adapter import ConditioningAdapter
from src.scorer.conditioning import ConditionSpec
from tests.conftest import make_tiny_denoiser

SMALL_GENERATOR = [4, 8, 8, 8]


def _base(size=16, seed=0):
    gen = torch.Generator().manual_seed(seed)
    return torch.rand(3, size, size, generator=gen) * 0.8 + 0.1


def _quick_config(**overrides):
    values = {"iters": 3, "batch": 2, "generator_channels": SMALL_GENERATOR, "log_every": 1, "seed": 1}
    values.update(overrides)
    return DistillConfig(**values)


@pytest.mark.parametrize("value, expected", [(1.0, 0.0), (0.5, 0.5), (0.1, 0.9)])
def test_reg_loss_examples(value, expected):
    """Test the L1 identity regularizer on constant layers"""
    assert reg_loss(torch.full((1, 1, 4, 4), value)).item() == pytest.approx(expected, abs=1e-6)


def test_sds_grad_perfect_denoiser(schedule):
    """Test a zero gradient when the estimate equals the injected noise"""
    eps = torch.randn(2, 3, 4, 4)
    grad = sds_grad(torch.zeros_like(eps), torch.tensor([10, 500]), eps, eps.clone(), schedule)
    assert torch.equal(grad, torch.zeros_like(eps))


def test_sds_grad_constant_residual(schedule):
    """Test that w(t) = 1 passes a constant residual through unchanged"""
    eps = torch.randn(2, 3, 4, 4, dtype=torch.float64)
    grad = sds_grad(torch.zeros_like(eps), torch.tensor([10, 500]), eps, eps + 0.25, schedule)
    assert torch.allclose(grad, torch.full_like(eps, 0.25), atol=1e-12)
    assert not grad.requires_grad


def test_sds_grad_rejects_shape_mismatch(schedule):
    """Test shape validation of the residual"""
    with pytest.raises(InputValidationError):
        sds_grad(torch.zeros(1, 3, 4, 4), 10, torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 2, 2), schedule)


def test_surrogate_gradient_matches_finite_differences(schedule):
    """Test that autograd of the surrogate equals J^T g by central differences on an 8-parameter toy"""
    torch.manual_seed(0)
    toy = torch.nn.Conv2d(3, 2, kernel_size=1).double()
    u = torch.rand(1, 3, 4, 4, dtype=torch.float64)
    mixing = torch.tensor([[0.6, -0.2], [0.3, 0.9]], dtype=torch.float64)

    def image(module):
        return torch.tanh(module(u))

    t = torch.tensor([300])
    eps = torch.randn(1, 2, 4, 4, dtype=torch.float64)
    with torch.no_grad():
        z_t = schedule.add_noise(image(toy), t, eps)
        eps_hat = torch.einsum("oc,bchw->bohw", mixing, z_t)
    grad = sds_grad(image(toy), t, eps, eps_hat, schedule)

    sds_surrogate(image(toy), grad, reduction="sum").backward()
    analytic = torch.cat([p.grad.flatten() for p in toy.parameters()])
    assert analytic.numel() == 8

    h = 1e-6
    numeric = []
    for p in toy.parameters():
        flat = p.data.view(-1)
        for k in range(flat.numel()):
            original = flat[k].item()
            flat[k] = original + h
            plus = float((grad * image(toy)).sum())
            flat[k] = original - h
            minus = float((grad * image(toy)).sum())
            flat[k] = original
            numeric.append((plus - minus) / (2 * h))
    numeric = torch.tensor(numeric, dtype=torch.float64)
    assert float((analytic - numeric).norm() / numeric.norm()) <= 1e-4


def test_surrogate_mean_reduction():
    """Test that the mean surrogate is the sum divided by the element count"""
    x = torch.rand(2, 3, 4, 4)
    g = torch.rand(2, 3, 4, 4)
    assert sds_surrogate(x, g, "mean").item() == pytest.approx(sds_surrogate(x, g, "sum").item() / x.numel())
    with pytest.raises(InputValidationError):
        sds_surrogate(x, g, "max")


def test_vsd_identities(schedule):
    """Test the two degenerate cases of the variational residual"""
    t = torch.tensor([50, 800])
    z = torch.zeros(2, 3, 4, 4)
    eps = torch.randn(2, 3, 4, 4)
    pretrained = torch.randn(2, 3, 4, 4)

    assert torch.equal(vsd_grad(z, t, pretrained, pretrained.clone(), schedule), torch.zeros_like(z))
    assert torch.equal(vsd_grad(z, t, pretrained, eps, schedule), sds_grad(z, t, eps, pretrained, schedule))


def test_generator_starts_with_equal_layers():
    """Test that shading and lighting layers are equal and constant at initialization"""
    generator = LayerGenerator(channels=SMALL_GENERATOR)
    shade, light = generator(_base().unsqueeze(0))
    assert shade.shape == (1, 1, 16, 16)
    assert torch.equal(shade, light)
    assert torch.allclose(shade, torch.sigmoid(torch.tensor(2.0)).expand_as(shade))


def test_color_generator_ranges():
    """Test RGBA output layout and ranges"""
    overlay = ColorLayerGenerator(channels=SMALL_GENERATOR)(_base().unsqueeze(0))
    assert overlay.rgb.shape == (1, 3, 16, 16)
    assert overlay.alpha.shape == (1, 1, 16, 16)
    assert overlay.alpha.max() < 0.05


def test_config_validation():
    """Test t_range checks, presets and step bounds"""
    with pytest.raises(ValueError):
        DistillConfig(t_range=(0.5, 0.2))
    with pytest.raises(ValueError):
        DistillConfig(cfg_sclae=7.0)
    assert DistillConfig.preset("photo").cfg_scale == 10.0
    with pytest.raises(InputValidationError):
        DistillConfig.preset("oil-painting")


def test_timestep_bounds(schedule):
    """Test the integer step range of the default t_range"""
    assert timestep_bounds(schedule, (0.02, 0.98)) == (20, 980)
    assert timestep_bounds(schedule, (0.0, 1.0)) == (0, 999)


def test_distill_relight_result(tiny_denoiser, tiny_adapter, schedule):
    """Test output layers, the float64 recomposition and the trace"""
    base = _base()
    result = distill_relight(base, 3, tiny_denoiser, tiny_adapter, schedule, _quick_config(), category=2)

    assert result.shade.shape == (1, 16, 16) and result.light.shape == (1, 16, 16)
    assert result.shade.min() >= 0.1 and result.light.max() <= 1.0
    assert torch.equal(result.edited, compose_relight(base.double(), result.shade.double(), result.light.double()))
    assert list(result.trace.columns) == TRACE_COLUMNS
    assert len(result.trace) == 3
    assert np.isfinite(result.trace.to_numpy()).all()
    assert result.config["direction"] == 3
    assert preservation_audit(base.double(), result.edited) <= 1e-6


def test_distill_relight_is_deterministic(tiny_denoiser, tiny_adapter, schedule):
    """Test bit-identical layers and traces for a fixed seed"""
    base = _base()
    first = distill_relight(base, 5, tiny_denoiser, tiny_adapter, schedule, _quick_config())
    second = distill_relight(base, 5, tiny_denoiser, tiny_adapter, schedule, _quick_config())
    assert torch.equal(first.shade, second.shade)
    assert torch.equal(first.light, second.light)
    assert first.trace.equals(second.trace)


def test_distill_relight_freezes_scorer(tiny_denoiser, tiny_adapter, schedule):
    """Test that neither the scorer nor the adapter accumulates gradients"""
    distill_relight(_base(), 1, tiny_denoiser, tiny_adapter, schedule, _quick_config(iters=2))
    assert all(p.grad is None for p in tiny_denoiser.parameters())
    assert all(p.grad is None for p in tiny_adapter.parameters())


def test_every_iterate_preserves_chromaticity(tiny_denoiser, tiny_adapter, schedule):
    """Test the preservation audit on each intermediate edit"""
    base = _base()
    spreads = []

    def record(step, shade, light, edited):
        spreads.append(preservation_audit(base.double(), edited[0].double()))

    distill_relight(base, 9, tiny_denoiser, tiny_adapter, schedule, _quick_config(iters=4), callback=record)
    assert len(spreads) == 4
    assert max(spreads) <= 1e-5


def test_distill_relight_errors(tiny_denoiser, tiny_adapter, schedule):
    """Test untrained models, direction range and image size checks"""
    with pytest.raises(UntrainedModelError):
        distill_relight(_base(), 0, make_tiny_denoiser(trained=False), tiny_adapter, schedule, _quick_config())
    untrained_adapter = ConditioningAdapter.for_denoiser(tiny_denoiser)
    with pytest.raises(UntrainedModelError):
        distill_relight(_base(), 0, tiny_denoiser, untrained_adapter, schedule, _quick_config())
    with pytest.raises(InputValidationError):
        distill_relight(_base(), 12, tiny_denoiser, tiny_adapter, schedule, _quick_config())
    with pytest.raises(InputValidationError):
        distill_relight(_base(size=12), 0, tiny_denoiser, tiny_adapter, schedule, _quick_config())


def test_high_cfg_warns(tiny_denoiser, tiny_adapter, schedule, caplog):
    """Test the warning above guidance scale 15"""
    with caplog.at_level(logging.WARNING, logger="src.distill.relight"):
        distill_relight(_base(), 0, tiny_denoiser, tiny_adapter, schedule, _quick_config(iters=1, cfg_scale=16.0))
    assert any("CFG scale" in record.getMessage() for record in caplog.records)


def test_distill_result_save(tiny_denoiser, tiny_adapter, schedule, tmp_path):
    """Test the files written for a distillation"""
    result = distill_relight(_base(), 4, tiny_denoiser, tiny_adapter, schedule, _quick_config(iters=1))
    result.save(tmp_path, run_config={"seed": 1})

    for name in ("shade.png", "light.png", "edited.png", "trace.csv", "config.json"):
        assert (tmp_path / name).exists()
    shade = read_layer_png(tmp_path / "shade.png")
    assert np.abs(shade - result.shade[0].double().numpy()).max() <= 0.5 / 65535 + 1e-9


def test_strong_regularization_gives_identity_edit(tiny_denoiser, tiny_adapter, schedule):
    """Test that a dominant regularizer without guidance drives both layers to 1"""
    config = DistillConfig(
        iters=700, batch=2, cfg_scale=0.0, reg_weight=1000.0, generator_channels=SMALL_GENERATOR, seed=0
    )
    result = distill_relight(_base(), 6, tiny_denoiser, tiny_adapter, schedule, config)
    assert (1.0 - result.shade).abs().max() < 0.02
    assert (1.0 - result.light).abs().max() < 0.02


def test_edge_map_of_constant_image():
    """Test that a flat image has no edges and a white sketch"""
    flat = torch.full((3, 8, 8), 0.4, dtype=torch.float64)
    assert edge_map(flat).shape == (8, 8)
    assert edge_map(flat).max() <= 1e-5
    assert torch.equal(make_sketch(flat), torch.ones(3, 8, 8, dtype=torch.float64))
    assert edge_structure_loss(flat, flat).item() == 0.0


def _uniform_sketch():
    scene = sample_scene(3, 32, 5)
    uniform = image_to_tensor(render_uniform(scene))
    return make_sketch(uniform), scene.category_id


def test_make_sketch_draws_contours():
    """Test that object outlines are darker than the background"""
    sketch, _ = _uniform_sketch()
    assert sketch.shape == (3, 32, 32)
    assert sketch.min() == 0.0 and sketch.max() > 0.99


def test_head_step_reduces_loss(tiny_denoiser, schedule):
    """Test that the learned score head fits a fixed batch"""
    head = ConditioningAdapter.for_denoiser(tiny_denoiser)
    optimizer = torch.optim.Adam(head.parameters(), lr=1e-3)
    gen = torch.Generator().manual_seed(0)
    z = torch.rand(2, 3, 16, 16, generator=gen) * 2 - 1
    eps = torch.randn(2, 3, 16, 16, generator=gen)
    t = torch.tensor([200, 600])
    hint = torch.zeros(2, 3, 16, 16)
    cond = ConditionSpec(category_id=1)

    first = head_step(head, tiny_denoiser, schedule, z, t, eps, cond, hint, optimizer)
    for _ in range(30):
        last = head_step(head, tiny_denoiser, schedule, z, t, eps, cond, hint, optimizer)
    assert last < first
    assert int(head.train_steps) == 31


def test_head_step_returns_plain_float_without_warnings(tiny_denoiser, schedule):
    """Test that the head loss is read out without a grad-to-scalar warning"""
    head = ConditioningAdapter.for_denoiser(tiny_denoiser)
    optimizer = torch.optim.Adam(head.parameters(), lr=1e-3)
    gen = torch.Generator().manual_seed(1)
    z = torch.rand(1, 3, 16, 16, generator=gen) * 2 - 1
    eps = torch.randn(1, 3, 16, 16, generator=gen)
    with warnings.catch_warnings():
        warnings.simplefilter("error", UserWarning)
        loss = head_step(
            head, tiny_denoiser, schedule, z, torch.tensor([300]), eps,
            ConditionSpec(category_id=0), torch.zeros(1, 3, 16, 16), optimizer,
        )
    assert type(loss) is float


def test_distill_colorize_only_changes_covered_pixels(tiny_denoiser, schedule, tmp_path):
    """Test the overlay result and alpha-over semantics"""
    sketch, category = _uniform_sketch()
    config = ColorizeConfig(iters=3, batch=2, generator_channels=SMALL_GENERATOR, log_every=1)
    result = distill_colorize(sketch, category, tiny_denoiser, schedule, config)

    assert result.overlay.rgb.shape == (3, 32, 32)
    assert result.overlay.alpha.shape == (1, 32, 32)
    assert len(result.trace) == 3
    difference = (result.edited - sketch.double()).abs()
    assert (difference <= result.overlay.alpha.double() + 1e-12).all()

    result.save(tmp_path)
    assert (tmp_path / "overlay_alpha.png").exists() and (tmp_path / "edited.png").exists()


def test_distill_colorize_structure_dominates(tiny_denoiser, schedule):
    """Test that a heavy structure weight keeps the sketch's edges where weight 0 drifts"""
    sketch, category = _uniform_sketch()

    def edge_loss(weight):
        config = ColorizeConfig(
            iters=20, batch=2, structure_weight=weight, generator_channels=SMALL_GENERATOR, seed=2
        )
        result = distill_colorize(sketch, category, tiny_denoiser, schedule, config)
        return edge_structure_loss(result.edited, sketch.double()).item()

    free, held = edge_loss(0.0), edge_loss(1e5)
    assert held < free
    assert held <= 1e-3 < free
    assert held <= 0.1 * free


def test_distill_colorize_errors(tiny_denoiser, schedule):
    """Test category range and untrained scorer checks"""
    sketch, _ = _uniform_sketch()
    config = ColorizeConfig(iters=1, batch=1, generator_channels=SMALL_GENERATOR)
    with pytest.raises(InputValidationError):
        distill_colorize(sketch, 8, tiny_denoiser, schedule, config)
    with pytest.raises(UntrainedModelError):
        distill_colorize(sketch, 0, make_tiny_denoiser(trained=False), schedule, config)
