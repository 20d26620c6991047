"""
Shared fixtures: tiny models and a tiny generated dataset
"""
import pytest
import torch

from config import settings
from src.minirelit.dataset import generate_dataset
from src.scorer.adapter import ConditioningAdapter
from src.scorer.denoiser import Denoiser
from src.scorer.schedule import make_schedule

TINY_CHANNELS = (8, 16, 16, 16)
TINY_EMB_DIM = 16

slow = pytest.mark.skipif(not settings.run_slow, reason="end-to-end run; set LAYERLIGHT_RUN_SLOW=1")


def make_tiny_denoiser(seed: int = 0, trained: bool = True) -> Denoiser:
    """Randomly initialized small denoiser, optionally flagged as trained"""
    torch.manual_seed(seed)
    model = Denoiser(channels=TINY_CHANNELS, emb_dim=TINY_EMB_DIM)
    if trained:
        model.train_steps += 1
    return model.eval()


def make_tiny_adapter(denoiser: Denoiser, trained: bool = True, perturb: bool = False) -> ConditioningAdapter:
    """Adapter for `denoiser`; perturb=True replaces the zero convolutions with random weights"""
    adapter = ConditioningAdapter.for_denoiser(denoiser)
    if perturb:
        with torch.no_grad():
            for conv in list(adapter.zero_convs) + [adapter.middle_zero_conv]:
                conv.weight.normal_(std=0.1)
                conv.bias.normal_(std=0.1)
    if trained:
        adapter.train_steps += 1
    return adapter.eval()


@pytest.fixture
def schedule():
    return make_schedule(1000)


@pytest.fixture
def tiny_denoiser():
    return make_tiny_denoiser()


@pytest.fixture
def tiny_adapter(tiny_denoiser):
    return make_tiny_adapter(tiny_denoiser)


@pytest.fixture(scope="session")
def tiny_dataset_dir(tmp_path_factory):
    """13 scenes at 32x32, 3 of them in the test split"""
    out = tmp_path_factory.mktemp("minirelit") / "data"
    generate_dataset(num_scenes=13, size=32, split_fraction=0.2, out_dir=out, seed=0)
    return out
