import time

import numpy as np
import pytest
import torch

from texinspect.imaging import SynthSpec, synth_texture_sample
from texinspect.models import TrainConfig
from texinspect.training import train_stack

ACCEPTANCE_LINES = []

DESK_CONFIG = dict(iterations=300, n_scales=3, seed=0, deterministic=True)
DEFECT_SEEDS = (1, 2, 3, 4, 5)


def desk_normal():
    img, _ = synth_texture_sample(SynthSpec(family="stripes", size=64, defect_offset=0.0, seed=0))
    return img


def desk_defective(seed):
    return synth_texture_sample(
        SynthSpec(family="stripes", size=64, defect_shape="rect", defect_size=10,
                  defect_offset=0.6, seed=seed)
    )


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """The 64x64 / 3-scale / 300-iteration run shared by the slow tests."""
    out = tmp_path_factory.mktemp("desk_model")
    t0 = time.perf_counter()
    stack = train_stack(desk_normal(), TrainConfig(**DESK_CONFIG), out_dir=out)
    return {"stack": stack, "dir": out, "seconds": time.perf_counter() - t0}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
