import numpy as np
import pytest
import torch

from lexcrf.config import TrainConfig
from lexcrf.synth import synthetic_splits
from lexcrf.training import train


def central_diff(fn, x: torch.Tensor, step: float = 1e-4) -> torch.Tensor:
    """Central finite differences of a scalar function over every entry of ``x``."""
    grad = torch.zeros_like(x)
    flat = x.view(-1)
    for k in range(flat.numel()):
        old = float(flat[k])
        flat[k] = old + step
        up = float(fn(x))
        flat[k] = old - step
        down = float(fn(x))
        flat[k] = old
        grad.view(-1)[k] = (up - down) / (2 * step)
    return grad


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture(scope="session")
def small_corpus():
    return synthetic_splits(3, 240, 40, 40)


@pytest.fixture(scope="session")
def small_checkpoint(small_corpus):
    tr, dev, _ = small_corpus
    cfg = TrainConfig(epochs=2, warmup_epochs=1, seed=3, d_emb=16, hidden=16, k=12, k_label=8)
    return train(cfg, tr, dev, stream=None)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
