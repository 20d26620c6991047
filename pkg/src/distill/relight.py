"""
Layered score distillation for relighting

A LayerGenerator maps the base image to a shading and a lighting layer; the composed
image is scored by the frozen denoiser (with the conditioning adapter reading the base
image) and the SDS residual flows back through compose_relight into the generator.
Only the generator's parameters are optimized.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import pandas as pd
import torch
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.compose.io import tensor_to_image, write_layer_png, write_png
from src.compose.layers import compose_relight, validate_image
from src.errors import InputValidationError, TrainingDivergedError, UntrainedModelError
from src.minirelit.renderer import NUM_DIRECTIONS
from src.scorer.adapter import ConditioningAdapter
from src.scorer.conditioning import ConditionSpec, describe_condition
from src.scorer.denoiser import Denoiser, to_model_space
from src.scorer.guidance import cfg_predict
from src.scorer.schedule import DiffusionSchedule
from src.utils.outputs import write_json
from src.utils.seeding import seed_everything
from .generator import DEFAULT_CHANNELS, LayerGenerator
from .sds import reg_loss, sds_grad, sds_surrogate

logger = logging.getLogger(__name__)

# Guidance scale per kind of input image
CFG_PRESETS = {"minirelit": 7.0, "photo": 10.0, "digital-art": 12.0}
CFG_WARN_ABOVE = 15.0

TRACE_COLUMNS = ["iter", "sds_residual_norm", "reg_value", "total_grad_norm"]

StepCallback = Callable[[int, torch.Tensor, torch.Tensor, torch.Tensor], None]


class DistillConfig(BaseModel):
    """Hyperparameters of one relighting distillation"""

    model_config = ConfigDict(extra="forbid")

    iters: int = Field(default=700, ge=0)
    lr: float = Field(default=5e-3, gt=0)
    batch: int = Field(default=4, ge=1)
    cfg_scale: float = Field(default=10.0, ge=0)
    reg_weight: float = Field(default=1.0, ge=0)
    t_range: Tuple[float, float] = (0.02, 0.98)
    seed: int = 0
    weight_decay: float = Field(default=0.01, ge=0)
    generator_channels: List[int] = Field(default_factory=lambda: list(DEFAULT_CHANNELS))
    log_every: int = Field(default=100, ge=1)

    @model_validator(mode="after")
    def _check_t_range(self) -> "DistillConfig":
        t_min, t_max = self.t_range
        if not 0.0 <= t_min < t_max <= 1.0:
            raise ValueError(f"t_range must satisfy 0 <= t_min < t_max <= 1, got {self.t_range}")
        return self

    @classmethod
    def preset(cls, kind: str, **overrides: Any) -> "DistillConfig":
        """Config with the guidance scale of a dataset kind (minirelit / photo / digital-art)"""
        if kind not in CFG_PRESETS:
            raise InputValidationError(f"unknown preset '{kind}', choose from {sorted(CFG_PRESETS)}")
        return cls(**{"cfg_scale": CFG_PRESETS[kind], **overrides})


@dataclass
class DistillResult:
    """
    Layers of a finished distillation

    `edited` is recomputed in float64 from the stored float32 layers, so calling
    compose_relight on the double-precision base and layers reproduces it exactly.
    """

    shade: torch.Tensor  # (1, H, W) float32
    light: torch.Tensor  # (1, H, W) float32
    edited: torch.Tensor  # (3, H, W) float64
    trace: pd.DataFrame
    config: Dict[str, Any] = field(default_factory=dict)

    def save(self, out_dir: Union[str, Path], run_config: Optional[Dict[str, Any]] = None) -> None:
        """
        Write shade.png, light.png (16-bit), edited.png, trace.csv and config.json

        config.json holds the distillation echo, plus the resolved run config under "run" if given.
        """
        out = Path(out_dir)
        write_layer_png(out / "shade.png", self.shade[0].double().numpy())
        write_layer_png(out / "light.png", self.light[0].double().numpy())
        write_png(out / "edited.png", tensor_to_image(self.edited))
        self.trace.to_csv(out / "trace.csv", index=False)
        write_json(out / "config.json", {**self.config, **({"run": run_config} if run_config else {})})


def check_trained(model: torch.nn.Module, name: str) -> None:
    """Raise UntrainedModelError if a model has no recorded training steps"""
    if int(model.train_steps) == 0:
        raise UntrainedModelError(f"{name} has no recorded training steps; train it before distilling")


def timestep_bounds(schedule: DiffusionSchedule, t_range: Tuple[float, float]) -> Tuple[int, int]:
    """Inclusive integer step range for a fractional t_range"""
    min_step = int(schedule.num_steps * t_range[0])
    max_step = min(int(schedule.num_steps * t_range[1]), schedule.num_steps - 1)
    return min_step, max(min_step, max_step)


def grad_norm(parameters) -> float:
    total = 0.0
    for p in parameters:
        if p.grad is not None:
            total += float(p.grad.detach().pow(2).sum())
    return math.sqrt(total)


def freeze(*models: Optional[torch.nn.Module]) -> None:
    for model in models:
        if model is not None:
            model.eval()
            model.requires_grad_(False)


def as_batch(image: torch.Tensor, name: str) -> torch.Tensor:
    """Validate a (3, H, W) or (1, 3, H, W) image and return it as (1, 3, H, W) float32"""
    validate_image(image, name)
    image = image.unsqueeze(0) if image.dim() == 3 else image
    if image.dim() != 4 or image.shape[0] != 1:
        raise InputValidationError(f"{name} must be a single image, got shape {tuple(image.shape)}")
    if image.shape[-1] % 8 or image.shape[-2] % 8:
        raise InputValidationError(f"{name} sides must be multiples of 8, got {tuple(image.shape[-2:])}")
    return image.float()


def distill_relight(
    base: torch.Tensor,
    direction: int,
    scorer: Denoiser,
    adapter: Optional[ConditioningAdapter],
    schedule: DiffusionSchedule,
    config: DistillConfig,
    category: Optional[int] = None,
    callback: Optional[StepCallback] = None,
) -> DistillResult:
    """
    Optimize a layer generator so the relit base matches the conditioned prior

    Each iteration: the generator produces (shade, light) from the base; the composed
    image is replicated to the batch, noised at an independent t and eps per element,
    and scored with CFG under ConditionSpec(direction, category), the adapter reading
    the base as its condition image. The injected SDS residual plus reg_weight times the
    L1 identity regularizer of both layers drive an AdamW step on the generator.

    Args:
        base: Linear RGB base image (3, H, W) in [0, 1], sides multiple of 8
        direction: Requested light direction index in [0, 12)
        scorer: Trained denoiser, frozen
        adapter: Trained conditioning adapter, frozen; None scores without image conditioning
        schedule: Schedule the scorer was trained with
        config: Distillation hyperparameters
        category: Optional category id; None uses the null category token
        callback: Called after every step with (iteration, shade, light, edited)

    Returns:
        DistillResult with the final layers and the per-iteration trace

    Raises:
        UntrainedModelError: scorer or adapter has never been trained
        InputValidationError: direction out of range or malformed base
        TrainingDivergedError: non-finite loss or gradient
    """
    if not 0 <= direction < NUM_DIRECTIONS:
        raise InputValidationError(f"direction must lie in [0, {NUM_DIRECTIONS}), got {direction}")
    check_trained(scorer, "scorer")
    if adapter is not None:
        check_trained(adapter, "adapter")
    else:
        logger.warning("Distilling without a conditioning adapter; the base image is not used as a condition")
    if config.cfg_scale > CFG_WARN_ABOVE:
        logger.warning("CFG scale %.1f exceeds %.0f; expect saturated, over-contrasted layers", config.cfg_scale, CFG_WARN_ABOVE)

    device = next(scorer.parameters()).device
    base_batch = as_batch(base, "base").to(device)
    cond = ConditionSpec(direction_index=direction, category_id=category)
    freeze(scorer, adapter)

    rng = seed_everything(config.seed)
    generator = LayerGenerator(channels=config.generator_channels).to(device)
    optimizer = torch.optim.AdamW(
        generator.parameters(), lr=config.lr, betas=(0.9, 0.999), weight_decay=config.weight_decay
    )
    min_step, max_step = timestep_bounds(schedule, config.t_range)
    logger.info(
        "Distilling '%s' for %d iterations (cfg %.1f, reg %.3g, t in [%d, %d])",
        describe_condition(cond), config.iters, config.cfg_scale, config.reg_weight, min_step, max_step,
    )

    rows = []
    generator.train()
    for step in range(config.iters):
        shade, light = generator(base_batch)
        edited = compose_relight(base_batch, shade, light)
        z = to_model_space(edited).expand(config.batch, -1, -1, -1)

        t = torch.randint(min_step, max_step + 1, (config.batch,), generator=rng)
        eps = torch.randn(z.shape, generator=rng).to(device)
        t = t.to(device)
        with torch.no_grad():
            z_t = schedule.add_noise(z.detach(), t, eps)
            eps_hat = cfg_predict(
                scorer, z_t, t, cond, cond_image=base_batch, scale=config.cfg_scale, adapter=adapter
            )
        grad = sds_grad(z, t, eps, eps_hat, schedule)

        reg_value = reg_loss(shade) + reg_loss(light)
        loss = sds_surrogate(z, grad) + config.reg_weight * reg_value
        if not torch.isfinite(loss):
            raise TrainingDivergedError(f"distill_relight: loss became {loss.item()} at iteration {step}")

        optimizer.zero_grad()
        loss.backward()
        total_grad_norm = grad_norm(generator.parameters())
        if not math.isfinite(total_grad_norm):
            raise TrainingDivergedError(f"distill_relight: gradient norm became {total_grad_norm} at iteration {step}")
        optimizer.step()

        rows.append({
            "iter": step,
            "sds_residual_norm": grad.pow(2).mean().sqrt().item(),
            "reg_value": reg_value.item(),
            "total_grad_norm": total_grad_norm,
        })
        if callback is not None:
            callback(step, shade.detach(), light.detach(), edited.detach())
        if (step + 1) % config.log_every == 0:
            logger.info(
                "Iteration %d/%d: residual %.4f, reg %.4f",
                step + 1, config.iters, rows[-1]["sds_residual_norm"], rows[-1]["reg_value"],
            )

    generator.eval()
    with torch.no_grad():
        shade, light = generator(base_batch)
    shade, light = shade[0].cpu(), light[0].cpu()
    edited = compose_relight(base_batch[0].cpu().double(), shade.double(), light.double())

    echo = {
        **config.model_dump(mode="json"),
        "direction": direction,
        "category": category,
        "condition": describe_condition(cond),
    }
    return DistillResult(
        shade=shade,
        light=light,
        edited=edited,
        trace=pd.DataFrame(rows, columns=TRACE_COLUMNS),
        config=echo,
    )
