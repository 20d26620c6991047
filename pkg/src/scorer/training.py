"""
Training loops for the denoiser (weighted denoising score matching) and the
conditioning adapter (same objective, conditioned on the uniform-lit image)
"""
import logging
import math
from typing import Iterator, List, Tuple

import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field
from torch.utils.data import DataLoader, Dataset
from tqdm import tqdm

from src.errors import InputValidationError, TrainingDivergedError
from src.utils.seeding import seed_everything
from .adapter import ConditioningAdapter, predict_with_adapter
from .conditioning import NULL_CATEGORY, NULL_DIRECTION
from .denoiser import DEFAULT_CHANNELS, Denoiser, to_model_space
from .schedule import DiffusionSchedule

logger = logging.getLogger(__name__)


class ScorerTrainingConfig(BaseModel):
    """Hyperparameters of train-scorer"""

    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=30, ge=1)
    lr: float = Field(default=2e-4, gt=0)
    batch: int = Field(default=64, ge=1)
    seed: int = 0
    cond_dropout: float = Field(default=0.1, ge=0, le=1)
    num_steps: int = Field(default=1000, ge=10)
    channels: List[int] = Field(default_factory=lambda: list(DEFAULT_CHANNELS))
    emb_dim: int = 128
    weight_decay: float = 0.0
    grad_clip: float = 1.0


class AdapterTrainingConfig(BaseModel):
    """Hyperparameters of train-adapter"""

    model_config = ConfigDict(extra="forbid")

    iters: int = Field(default=5000, ge=1)
    lr: float = Field(default=2e-4, gt=0)
    batch: int = Field(default=16, ge=1)
    seed: int = 0
    cond_dropout: float = Field(default=0.1, ge=0, le=1)
    width_divisor: int = Field(default=4, ge=1)
    weight_decay: float = 0.0
    grad_clip: float = 1.0


def _check_finite(loss: torch.Tensor, where: str, step: int) -> None:
    if not torch.isfinite(loss):
        raise TrainingDivergedError(
            f"{where}: loss became {loss.item()} at step {step}; lower the learning rate or check the data"
        )


def _drop_conditions(
    direction: torch.Tensor, category: torch.Tensor, p: float, generator: torch.Generator
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Replace both tokens of a sample by null tokens with probability p"""
    drop = torch.rand(direction.shape[0], generator=generator) < p
    direction = torch.where(drop, torch.full_like(direction, NULL_DIRECTION), direction)
    category = torch.where(drop, torch.full_like(category, NULL_CATEGORY), category)
    return direction, category


def _noised_batch(x0: torch.Tensor, schedule: DiffusionSchedule, generator: torch.Generator):
    t = torch.randint(0, schedule.num_steps, (x0.shape[0],), generator=generator)
    eps = torch.randn(x0.shape, generator=generator)
    return t, eps, schedule.add_noise(x0, t, eps)


def _weighted_mse(pred: torch.Tensor, eps: torch.Tensor, t: torch.Tensor, schedule: DiffusionSchedule) -> torch.Tensor:
    _, _, weight = schedule.coefficients(t, pred)
    return (weight * F.mse_loss(pred, eps, reduction="none")).mean()


def train_denoiser(
    dataset: Dataset,
    schedule: DiffusionSchedule,
    config: ScorerTrainingConfig,
    device: str = "cpu",
) -> Tuple[Denoiser, List[float]]:
    """
    Fit the noise predictor on relit images conditioned on (direction, category)

    Minimizes E || eps_phi(x_t, t, c) - eps ||^2 weighted by w(t). With probability
    cond_dropout a sample's condition is replaced by the null tokens, which trains the
    unconditional branch used by classifier-free guidance.

    Args:
        dataset: MiniRelitDataset-style items with relit / direction / category
        schedule: Noise schedule
        config: Training hyperparameters
        device: Torch device

    Returns:
        (trained model in eval mode, mean loss per epoch)
    """
    if len(dataset) == 0:
        raise InputValidationError("cannot train on an empty dataset")

    generator = seed_everything(config.seed)
    model = Denoiser(channels=config.channels, emb_dim=config.emb_dim).to(device)
    logger.info("Denoiser has %s parameters", f"{model.num_parameters():,}")

    optimizer = torch.optim.AdamW(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    loader = DataLoader(dataset, batch_size=config.batch, shuffle=True, generator=generator)

    losses = []
    step = 0
    model.train()
    for epoch in range(config.epochs):
        epoch_losses = []
        for batch in tqdm(loader, desc=f"scorer epoch {epoch + 1}/{config.epochs}", leave=False):
            x0 = to_model_space(batch["relit"])
            t, eps, x_t = _noised_batch(x0, schedule, generator)
            direction, category = _drop_conditions(
                batch["direction"], batch["category"], config.cond_dropout, generator
            )

            pred = model(x_t.to(device), t.to(device), direction.to(device), category.to(device))
            loss = _weighted_mse(pred, eps.to(device), t, schedule)
            _check_finite(loss, "train_denoiser", step)

            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            optimizer.step()
            model.train_steps += 1
            step += 1
            epoch_losses.append(loss.item())

        losses.append(sum(epoch_losses) / len(epoch_losses))
        logger.info("Scorer epoch %d/%d: mean loss %.5f", epoch + 1, config.epochs, losses[-1])

    return model.eval(), losses


def _cycle(loader: DataLoader) -> Iterator:
    while True:
        for batch in loader:
            yield batch


def train_adapter(
    denoiser: Denoiser,
    dataset: Dataset,
    schedule: DiffusionSchedule,
    config: AdapterTrainingConfig,
    device: str = "cpu",
) -> Tuple[ConditioningAdapter, List[float]]:
    """
    Fit an image-conditioning adapter on top of a frozen denoiser

    Minimizes E || eps - eps_c(x_{i,t} | t, c, x_u) ||^2: targets are the relit images
    x_i, the adapter sees the uniform-lit image x_u. The denoiser's parameters are not
    touched.

    Args:
        denoiser: Trained denoiser, frozen for the duration
        dataset: MiniRelitDataset-style items with relit / uniform / direction / category
        schedule: Noise schedule the denoiser was trained with
        config: Training hyperparameters
        device: Torch device

    Returns:
        (trained adapter in eval mode, mean loss per pass over the data)
    """
    if len(dataset) == 0:
        raise InputValidationError("cannot train on an empty dataset")

    generator = seed_everything(config.seed)
    denoiser = denoiser.to(device).eval()
    denoiser.requires_grad_(False)
    adapter = ConditioningAdapter.for_denoiser(denoiser, width_divisor=config.width_divisor).to(device)
    logger.info(
        "Adapter has %s parameters (host denoiser %s, frozen)",
        f"{adapter.num_parameters():,}",
        f"{denoiser.num_parameters():,}",
    )

    optimizer = torch.optim.AdamW(adapter.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    loader = DataLoader(dataset, batch_size=config.batch, shuffle=True, generator=generator)
    steps_per_pass = math.ceil(len(dataset) / config.batch)

    losses, window = [], []
    adapter.train()
    batches = _cycle(loader)
    for step in tqdm(range(config.iters), desc="adapter", leave=False):
        batch = next(batches)
        x0 = to_model_space(batch["relit"])
        hint = to_model_space(batch["uniform"])
        t, eps, x_t = _noised_batch(x0, schedule, generator)
        direction, category = _drop_conditions(
            batch["direction"], batch["category"], config.cond_dropout, generator
        )

        pred = predict_with_adapter(
            denoiser,
            adapter,
            x_t.to(device),
            t.to(device),
            direction.to(device),
            category.to(device),
            hint.to(device),
        )
        loss = _weighted_mse(pred, eps.to(device), t, schedule)
        _check_finite(loss, "train_adapter", step)

        optimizer.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(adapter.parameters(), config.grad_clip)
        optimizer.step()
        adapter.train_steps += 1
        window.append(loss.item())

        if len(window) == steps_per_pass or step == config.iters - 1:
            losses.append(sum(window) / len(window))
            logger.info("Adapter step %d/%d: mean loss %.5f", step + 1, config.iters, losses[-1])
            window = []

    return adapter.eval(), losses
