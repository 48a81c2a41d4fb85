import numpy as np
import pytest
import torch

from animkit.config import TrainConfig
from animkit.model import AnimationModel
from animkit.synthetic import DatasetConfig, generate_dataset
from animkit.text import build_vocab

torch.set_num_threads(1)


def make_tiny_config(**overrides):
    fields = dict(
        frames=4, size=16, batch_size=2, T=50, beta_start=1e-3, beta_end=0.2, ae_steps=2, ae_batch_size=4,
        image_steps=2, image_batch_size=2, train_steps=3, log_every=1, psnr_gate=0.0, widths=(16, 32),
    )
    fields.update(overrides)
    return TrainConfig(**fields)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_config():
    return make_tiny_config()


@pytest.fixture
def tiny_model(tiny_config):
    torch.manual_seed(0)
    return AnimationModel(tiny_config, build_vocab()).eval()


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """104 small clips: enough for a bucket table."""
    root = tmp_path_factory.mktemp("tiny_dataset")
    return generate_dataset(DatasetConfig(per_class=13, frames=4, size=16, seed=0), root)


@pytest.fixture(scope="session")
def tiny_corpus(tiny_dataset):
    from animkit.trainer import load_corpus

    return load_corpus(tiny_dataset, make_tiny_config())


@pytest.fixture(scope="session")
def tiny_pretrained(tiny_corpus):
    from animkit.trainer import pretrain_frozen_stack

    return pretrain_frozen_stack(make_tiny_config(), tiny_corpus)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
