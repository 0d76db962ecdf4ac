import os

import pytest
import torch

from headcond import ImageSpec, gen_synthetic_assets, make_dataset
from headcond_trainer import TrainData, TrainerConfig

TINY_CHANNELS = {4: 16, 8: 16, 16: 16, 32: 16}


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("data") / "ds"
    assets = gen_synthetic_assets(seed=1, v_target=400, tex_res=32)
    make_dataset(assets, 16, root, seed=0, image=ImageSpec(32))
    return root


@pytest.fixture(scope="session")
def train_data(dataset_dir):
    return TrainData(dataset_dir, steal_resolution=48)


@pytest.fixture()
def tiny_config():
    def make(**overrides):
        kwargs = dict(resolution=32, channels=dict(TINY_CHANNELS), batch_size=4,
                      steps=8, seed=0, lambda_tex=1.0, tex_every=4,
                      lr=1e-3, r1_gamma=10.0, r1_every=2)
        kwargs.update(overrides)
        return TrainerConfig(**kwargs)
    return make


@pytest.fixture(autouse=True)
def fixed_torch_seed():
    torch.manual_seed(0)
