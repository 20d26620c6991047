"""
Layered variational score distillation for sketch colorization

A ColorLayerGenerator maps the sketch to an RGBA overlay composed by alpha-over. The
pretrained prior is the frozen denoiser under the category condition; the learned
score head is a sketch-conditioned adapter over the same frozen denoiser, co-trained
on the current edits with the denoising objective.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import pandas as pd
import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.compose.io import tensor_to_image, write_layer_png, write_png
from src.compose.layers import RGBALayer, compose_alpha
from src.errors import InputValidationError, TrainingDivergedError
from src.minirelit.scene import NUM_CATEGORIES
from src.scorer.adapter import ConditioningAdapter, predict_with_adapter
from src.scorer.conditioning import ConditionSpec, describe_condition
from src.scorer.denoiser import Denoiser, to_model_space
from src.scorer.guidance import cfg_predict
from src.scorer.schedule import DiffusionSchedule
from src.utils.outputs import write_json
from src.utils.seeding import seed_everything
from .generator import DEFAULT_CHANNELS, ColorLayerGenerator
from .relight import CFG_WARN_ABOVE, as_batch, check_trained, freeze, grad_norm, timestep_bounds
from .sds import sds_surrogate, vsd_grad
from .structure import StructureRegularizer, edge_structure_loss

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["iter", "vsd_residual_norm", "structure_value", "head_loss", "total_grad_norm"]


class ColorizeConfig(BaseModel):
    """Hyperparameters of one colorization distillation"""

    model_config = ConfigDict(extra="forbid")

    iters: int = Field(default=4000, ge=0)
    lr: float = Field(default=5e-3, gt=0)
    batch: int = Field(default=4, ge=1)
    cfg_scale: float = Field(default=8.0, ge=0)
    structure_weight: float = Field(default=100.0, ge=0)
    t_range: Tuple[float, float] = (0.02, 0.98)
    seed: int = 0
    weight_decay: float = Field(default=0.01, ge=0)
    head_lr: float = Field(default=1e-3, gt=0)
    head_width_divisor: int = Field(default=4, ge=1)
    generator_channels: List[int] = Field(default_factory=lambda: list(DEFAULT_CHANNELS))
    log_every: int = Field(default=100, ge=1)

    @model_validator(mode="after")
    def _check_t_range(self) -> "ColorizeConfig":
        t_min, t_max = self.t_range
        if not 0.0 <= t_min < t_max <= 1.0:
            raise ValueError(f"t_range must satisfy 0 <= t_min < t_max <= 1, got {self.t_range}")
        return self


@dataclass
class ColorizeResult:
    """Overlay and composed image of a finished colorization"""

    overlay: RGBALayer  # rgb (3, H, W), alpha (1, H, W), float32
    edited: torch.Tensor  # (3, H, W) float64
    trace: pd.DataFrame
    config: Dict[str, Any] = field(default_factory=dict)

    def save(self, out_dir: Union[str, Path], run_config: Optional[Dict[str, Any]] = None) -> None:
        """Write overlay_rgb.png, overlay_alpha.png, edited.png, trace.csv and config.json"""
        out = Path(out_dir)
        write_png(out / "overlay_rgb.png", tensor_to_image(self.overlay.rgb))
        write_layer_png(out / "overlay_alpha.png", self.overlay.alpha[0].double().numpy())
        write_png(out / "edited.png", tensor_to_image(self.edited))
        self.trace.to_csv(out / "trace.csv", index=False)
        write_json(out / "config.json", {**self.config, **({"run": run_config} if run_config else {})})


def head_step(
    head: ConditioningAdapter,
    scorer: Denoiser,
    schedule: DiffusionSchedule,
    z: torch.Tensor,
    t: torch.Tensor,
    eps: torch.Tensor,
    cond: ConditionSpec,
    hint: torch.Tensor,
    optimizer: torch.optim.Optimizer,
) -> float:
    """
    One denoising-loss step of the learned score head on the current edits

    Args:
        head: Trainable adapter attached to the frozen scorer
        scorer: Frozen denoiser hosting the head
        schedule: Noise schedule
        z: Current edited images in model space, detached (B, 3, H, W)
        t: Timesteps (B,)
        eps: Noise (B, 3, H, W)
        cond: Condition of the learned head
        hint: Sketch in model space (B, 3, H, W)
        optimizer: Optimizer over the head's parameters

    Returns:
        The loss before the step
    """
    head.train()
    direction, category = cond.tokens(z.shape[0], device=z.device)
    z_t = schedule.add_noise(z.detach(), t, eps)
    pred = predict_with_adapter(scorer, head, z_t, t, direction, category, hint)
    loss = F.mse_loss(pred, eps)
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    head.train_steps += 1
    return loss.item()


def distill_colorize(
    base_sketch: torch.Tensor,
    category: int,
    scorer: Denoiser,
    schedule: DiffusionSchedule,
    config: ColorizeConfig,
    structure_reg: StructureRegularizer = edge_structure_loss,
) -> ColorizeResult:
    """
    Optimize an RGBA overlay generator against the frozen prior with VSD

    Each iteration: the generator emits (rgb, alpha) from the sketch; edited =
    compose_alpha(sketch, overlay) is noised at independent (t, eps) per batch element;
    the injected residual is w(t) (eps_pretrained - eps_learned) with the pretrained
    estimate guided at cfg_scale, plus structure_weight * structure_reg(edited, sketch).
    The learned head then takes one denoising step on the detached edits.

    Args:
        base_sketch: Linear RGB sketch (3, H, W) in [0, 1], sides multiple of 8
        category: Category id of the drawn object
        scorer: Trained denoiser, frozen
        schedule: Schedule the scorer was trained with
        config: Colorization hyperparameters
        structure_reg: Callable (edited, reference) -> scalar keeping the sketch's structure

    Returns:
        ColorizeResult with the overlay, the composed image and the trace

    Raises:
        UntrainedModelError: scorer has never been trained
        InputValidationError: category out of range or malformed sketch
        TrainingDivergedError: non-finite loss or gradient
    """
    if not 0 <= category < NUM_CATEGORIES:
        raise InputValidationError(f"category must lie in [0, {NUM_CATEGORIES}), got {category}")
    check_trained(scorer, "scorer")
    if config.cfg_scale > CFG_WARN_ABOVE:
        logger.warning("CFG scale %.1f exceeds %.0f; expect saturated colors", config.cfg_scale, CFG_WARN_ABOVE)

    device = next(scorer.parameters()).device
    sketch = as_batch(base_sketch, "sketch").to(device)
    cond = ConditionSpec(category_id=category)
    freeze(scorer)

    rng = seed_everything(config.seed)
    generator = ColorLayerGenerator(channels=config.generator_channels).to(device)
    head = ConditioningAdapter.for_denoiser(scorer, width_divisor=config.head_width_divisor).to(device)
    optimizer = torch.optim.AdamW(
        generator.parameters(), lr=config.lr, betas=(0.9, 0.999), weight_decay=config.weight_decay
    )
    head_optimizer = torch.optim.AdamW(head.parameters(), lr=config.head_lr)
    min_step, max_step = timestep_bounds(schedule, config.t_range)
    hint = to_model_space(sketch).expand(config.batch, -1, -1, -1)
    logger.info(
        "Colorizing '%s' for %d iterations (cfg %.1f, structure weight %.3g)",
        describe_condition(cond), config.iters, config.cfg_scale, config.structure_weight,
    )

    rows = []
    generator.train()
    for step in range(config.iters):
        overlay = generator(sketch)
        edited = compose_alpha(sketch, overlay)
        z = to_model_space(edited).expand(config.batch, -1, -1, -1)

        t = torch.randint(min_step, max_step + 1, (config.batch,), generator=rng).to(device)
        eps = torch.randn(z.shape, generator=rng).to(device)
        head.eval()
        with torch.no_grad():
            z_t = schedule.add_noise(z.detach(), t, eps)
            eps_pretrained = cfg_predict(scorer, z_t, t, cond, scale=config.cfg_scale)
            direction, category_tokens = cond.tokens(config.batch, device=device)
            eps_learned = predict_with_adapter(scorer, head, z_t, t, direction, category_tokens, hint)
        grad = vsd_grad(z, t, eps_pretrained, eps_learned, schedule)

        structure_value = structure_reg(edited, sketch)
        loss = sds_surrogate(z, grad) + config.structure_weight * structure_value
        if not torch.isfinite(loss):
            raise TrainingDivergedError(f"distill_colorize: loss became {loss.item()} at iteration {step}")

        optimizer.zero_grad()
        loss.backward()
        total_grad_norm = grad_norm(generator.parameters())
        if not math.isfinite(total_grad_norm):
            raise TrainingDivergedError(f"distill_colorize: gradient norm became {total_grad_norm} at iteration {step}")
        optimizer.step()

        head_t = torch.randint(min_step, max_step + 1, (config.batch,), generator=rng).to(device)
        head_eps = torch.randn(z.shape, generator=rng).to(device)
        head_loss = head_step(head, scorer, schedule, z.detach(), head_t, head_eps, cond, hint, head_optimizer)
        if not math.isfinite(head_loss):
            raise TrainingDivergedError(f"distill_colorize: score head loss became {head_loss} at iteration {step}")

        rows.append({
            "iter": step,
            "vsd_residual_norm": grad.pow(2).mean().sqrt().item(),
            "structure_value": structure_value.item(),
            "head_loss": head_loss,
            "total_grad_norm": total_grad_norm,
        })
        if (step + 1) % config.log_every == 0:
            logger.info(
                "Iteration %d/%d: residual %.4f, structure %.5f, head loss %.4f",
                step + 1, config.iters, rows[-1]["vsd_residual_norm"], rows[-1]["structure_value"], head_loss,
            )

    generator.eval()
    with torch.no_grad():
        rgb, alpha = generator(sketch)
    overlay = RGBALayer(rgb=rgb[0].cpu(), alpha=alpha[0].cpu())
    edited = compose_alpha(sketch[0].cpu().double(), RGBALayer(overlay.rgb.double(), overlay.alpha.double()))

    echo = {**config.model_dump(mode="json"), "category": category, "condition": describe_condition(cond)}
    return ColorizeResult(
        overlay=overlay,
        edited=edited,
        trace=pd.DataFrame(rows, columns=TRACE_COLUMNS),
        config=echo,
    )
