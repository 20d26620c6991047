"""
Unit tests for the denoiser, the conditioning adapter, guidance, sampling and training
"""
import pytest
import torch
from pydantic import ValidationError

from src.errors import TrainingDivergedError
from src.minirelit.dataset import MiniRelitDataset
from src.scorer.adapter import predict_with_adapter
from src.scorer.conditioning import NULL_CATEGORY, NULL_DIRECTION, ConditionSpec, describe_condition
from src.scorer.denoiser import Denoiser, from_model_space
from src.scorer.guidance import cfg_predict, predict_noise
from src.scorer.sampling import sample, sampling_timesteps
from src.scorer.training import AdapterTrainingConfig, ScorerTrainingConfig, train_adapter, train_denoiser
from src.utils.seeding import parameter_checksum, seed_everything
from tests.conftest import TINY_CHANNELS, TINY_EMB_DIM, make_tiny_adapter


def _inputs(batch=2, size=16, seed=0):
    gen = torch.Generator().manual_seed(seed)
    x_t = torch.randn(batch, 3, size, size, generator=gen)
    cond_image = torch.rand(3, size, size, generator=gen)
    t = torch.tensor([100, 700][:batch])
    return x_t, t, cond_image


def test_denoiser_output_shape(tiny_denoiser):
    """Test that the noise estimate has the sample's shape"""
    x_t, t, _ = _inputs()
    direction, category = ConditionSpec(direction_index=3, category_id=1).tokens(2)
    with torch.no_grad():
        out = tiny_denoiser(x_t, t, direction, category)
    assert out.shape == x_t.shape


def test_embedding_tables_have_null_rows(tiny_denoiser):
    """Test one extra embedding row per condition for the null token"""
    assert tiny_denoiser.direction_embedding.num_embeddings == NULL_DIRECTION + 1
    assert tiny_denoiser.category_embedding.num_embeddings == NULL_CATEGORY + 1


def test_condition_spec():
    """Test null tokens, range checks and the prompt rendering"""
    direction, category = ConditionSpec.null().tokens(3)
    assert direction.tolist() == [NULL_DIRECTION] * 3
    assert category.tolist() == [NULL_CATEGORY] * 3
    assert ConditionSpec.null().is_null
    with pytest.raises(ValidationError):
        ConditionSpec(direction_index=12)
    assert describe_condition(ConditionSpec(direction_index=3, category_id=0)) == "A photo of a small pebble with 3 lighting"


def test_untrained_adapter_is_neutral(tiny_denoiser):
    """Test that zero-initialized residuals leave the denoiser unchanged"""
    adapter = make_tiny_adapter(tiny_denoiser, trained=False)
    x_t, t, cond_image = _inputs()
    direction, category = ConditionSpec(direction_index=5, category_id=2).tokens(2)
    hint = (cond_image * 2 - 1).expand(2, -1, -1, -1)
    with torch.no_grad():
        plain = tiny_denoiser(x_t, t, direction, category)
        adapted = predict_with_adapter(tiny_denoiser, adapter, x_t, t, direction, category, hint)
    assert torch.equal(plain, adapted)


def test_cfg_endpoints_are_exact(tiny_denoiser):
    """Test that scale 1 is the conditional and scale 0 the unconditional estimate"""
    adapter = make_tiny_adapter(tiny_denoiser, perturb=True)
    x_t, t, cond_image = _inputs()
    cond = ConditionSpec(direction_index=7, category_id=4)
    with torch.no_grad():
        conditional = predict_noise(tiny_denoiser, x_t, t, cond, cond_image=cond_image, adapter=adapter)
        unconditional = predict_noise(tiny_denoiser, x_t, t, ConditionSpec.null())
        at_one = cfg_predict(tiny_denoiser, x_t, t, cond, cond_image=cond_image, scale=1.0, adapter=adapter)
        at_zero = cfg_predict(tiny_denoiser, x_t, t, cond, cond_image=cond_image, scale=0.0, adapter=adapter)

    assert not torch.equal(conditional, unconditional)
    assert torch.equal(at_one, conditional)
    assert torch.equal(at_zero, unconditional)


def test_cfg_is_affine_in_scale(tiny_denoiser):
    """Test equal increments for equal steps of the guidance scale"""
    x_t, t, _ = _inputs()
    cond = ConditionSpec(direction_index=2)
    with torch.no_grad():
        values = [cfg_predict(tiny_denoiser, x_t, t, cond, scale=s) for s in (2.0, 5.0, 8.0)]
    assert torch.allclose(values[1] - values[0], values[2] - values[1], atol=1e-4)


def test_sampling_timesteps(schedule):
    """Test the strided descending step grid"""
    steps = sampling_timesteps(schedule, 5)
    assert steps[0].item() == 999 and steps[-1].item() == 0
    assert (steps[1:] < steps[:-1]).all()
    assert sampling_timesteps(schedule, 0).numel() == 0


def test_sample_is_deterministic(tiny_denoiser, schedule):
    """Test that a fixed seed reproduces the samples"""
    cond = ConditionSpec(direction_index=1, category_id=0)
    first = sample(tiny_denoiser, schedule, cond, steps=4, seed=3, guidance_scale=2.0, size=16, batch=2)
    second = sample(tiny_denoiser, schedule, cond, steps=4, seed=3, guidance_scale=2.0, size=16, batch=2)
    assert first.shape == (2, 3, 16, 16)
    assert torch.equal(first, second)
    assert first.min() >= 0.0 and first.max() <= 1.0


def test_zero_step_sampling_returns_noise(tiny_denoiser, schedule):
    """Test the degenerate zero-step case"""
    out = sample(tiny_denoiser, schedule, ConditionSpec.null(), steps=0, seed=5, size=16)
    noise = torch.randn((1, 3, 16, 16), generator=torch.Generator().manual_seed(5))
    assert torch.equal(out, from_model_space(noise))


def _scorer_config(**overrides):
    return ScorerTrainingConfig(
        **{"epochs": 1, "batch": 8, "channels": list(TINY_CHANNELS), "emb_dim": TINY_EMB_DIM, **overrides}
    )


def test_train_denoiser_is_deterministic(tiny_dataset_dir, schedule):
    """Test identical loss curves and weights for a fixed seed"""
    dataset = MiniRelitDataset(tiny_dataset_dir, split="train", max_scenes=2)
    model_a, losses_a = train_denoiser(dataset, schedule, _scorer_config(seed=4))
    model_b, losses_b = train_denoiser(dataset, schedule, _scorer_config(seed=4))

    assert losses_a == losses_b
    assert parameter_checksum(model_a) == parameter_checksum(model_b)
    assert int(model_a.train_steps) == 3  # 24 items in batches of 8


def test_null_rows_untouched_without_dropout(tiny_dataset_dir, schedule):
    """Test that the null embeddings never move when conditions are never dropped"""
    dataset = MiniRelitDataset(tiny_dataset_dir, split="train", max_scenes=2)
    model, _ = train_denoiser(dataset, schedule, _scorer_config(seed=2, cond_dropout=0.0))

    seed_everything(2)
    initial = Denoiser(channels=TINY_CHANNELS, emb_dim=TINY_EMB_DIM)
    assert torch.equal(model.direction_embedding.weight[NULL_DIRECTION], initial.direction_embedding.weight[NULL_DIRECTION])
    assert torch.equal(model.category_embedding.weight[NULL_CATEGORY], initial.category_embedding.weight[NULL_CATEGORY])
    assert not torch.equal(model.direction_embedding.weight[0], initial.direction_embedding.weight[0])


def test_train_adapter_keeps_denoiser_frozen(tiny_dataset_dir, schedule, tiny_denoiser):
    """Test that adapter training never changes the host denoiser"""
    dataset = MiniRelitDataset(tiny_dataset_dir, split="train", max_scenes=2)
    before = parameter_checksum(tiny_denoiser)
    adapter, losses = train_adapter(tiny_denoiser, dataset, schedule, AdapterTrainingConfig(iters=4, batch=4))

    assert parameter_checksum(tiny_denoiser) == before
    assert int(adapter.train_steps) == 4
    assert len(losses) == 1
    assert all(p.grad is None for p in tiny_denoiser.parameters())


def test_train_denoiser_loss_falls(tiny_dataset_dir, schedule):
    """Test that the last epoch's mean loss is below the first's"""
    dataset = MiniRelitDataset(tiny_dataset_dir, split="train")
    _, losses = train_denoiser(dataset, schedule, _scorer_config(seed=1, epochs=5, batch=16, lr=2e-3))

    assert len(losses) == 5
    assert losses[-1] < losses[0]


def test_train_adapter_loss_falls(tiny_dataset_dir, schedule, tiny_denoiser):
    """Test that adapter passes late in training score below the first pass"""
    dataset = MiniRelitDataset(tiny_dataset_dir, split="train")
    config = AdapterTrainingConfig(iters=90, batch=8, lr=2e-3, seed=1)
    _, losses = train_adapter(tiny_denoiser, dataset, schedule, config)

    assert len(losses) == 6  # 120 items in batches of 8, 15 steps per pass
    assert sum(losses[-2:]) / 2 < losses[0]


def _nan_items(count=4, size=16):
    nan = torch.full((3, size, size), float("nan"))
    return [
        {"relit": nan, "uniform": nan, "direction": torch.tensor(i % 12), "category": torch.tensor(0)}
        for i in range(count)
    ]


def test_train_denoiser_stops_on_nan_loss(schedule):
    """Test that a non-finite loss aborts scorer training with the step it happened at"""
    with pytest.raises(TrainingDivergedError, match="train_denoiser: loss became nan at step 0"):
        train_denoiser(_nan_items(), schedule, _scorer_config(batch=2))


def test_train_adapter_stops_on_nan_loss(schedule, tiny_denoiser):
    """Test that a non-finite loss aborts adapter training"""
    with pytest.raises(TrainingDivergedError, match="train_adapter: loss became nan"):
        train_adapter(tiny_denoiser, _nan_items(), schedule, AdapterTrainingConfig(iters=3, batch=2))
