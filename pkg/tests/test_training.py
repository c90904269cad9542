import math

import numpy as np
import pytest
import torch

from lexcrf.config import TrainConfig, load_config, parse_config_text
from lexcrf.errors import ParameterError
from lexcrf.synth import synthetic_splits
from lexcrf.training import (
    TrainingAborted, adam_init, adam_step, clip_grads, length_batches, lr_schedule, train,
)

D = torch.float64


def test_lr_schedule_examples():
    assert lr_schedule(0, 100, 10) == 0.0
    assert lr_schedule(5, 100, 10) == 0.5
    assert lr_schedule(10, 100, 10) == 1.0
    assert lr_schedule(55, 100, 10) == 0.5
    assert lr_schedule(100, 100, 10) == 0.0
    assert lr_schedule(0, 10, 0) == 1.0
    with pytest.raises(ParameterError):
        lr_schedule(101, 100, 10)


def test_adam_zero_gradient():
    params = {"w": torch.tensor([1.0, -2.0], dtype=D)}
    state = adam_init(params)
    state["m"]["w"] += 0.5
    state["v"]["w"] += 0.25
    adam_step(params, {"w": torch.zeros(2, dtype=D)}, state, lr=0.1)
    assert state["m"]["w"].tolist() == pytest.approx([0.45, 0.45])
    assert state["v"]["w"].tolist() == pytest.approx([0.25 * 0.999] * 2)
    fresh = {"w": torch.tensor([1.0, -2.0], dtype=D)}
    adam_step(fresh, {"w": torch.zeros(2, dtype=D)}, adam_init(fresh), lr=0.1)
    assert fresh["w"].tolist() == [1.0, -2.0]


def test_adam_one_step_hand_formula():
    g = torch.tensor([0.3, -2.0, 1e-3], dtype=D)
    params = {"w": torch.zeros(3, dtype=D)}
    adam_step(params, {"w": g.clone()}, adam_init(params), lr=0.01)
    m_hat = (0.1 * g) / (1 - 0.9)
    v_hat = (0.001 * g * g) / (1 - 0.999)
    expected = -0.01 * m_hat / (v_hat.sqrt() + 1e-8)
    assert torch.allclose(params["w"], expected, atol=1e-15)


def test_adam_constant_gradient_fixed_point():
    params = {"w": torch.zeros(1, dtype=D)}
    state = adam_init(params)
    prev = 0.0
    for _ in range(200):
        adam_step(params, {"w": torch.tensor([4.0], dtype=D)}, state, lr=0.01)
        step = prev - float(params["w"])
        prev = float(params["w"])
    assert step == pytest.approx(0.01, rel=1e-6)


def test_adam_aborts_on_nan():
    params = {"a": torch.zeros(2, dtype=D), "b": torch.zeros(1, dtype=D)}
    state = adam_init(params)
    with pytest.raises(TrainingAborted, match="b"):
        adam_step(params, {"a": torch.zeros(2, dtype=D), "b": torch.tensor([math.nan], dtype=D)}, state, 0.1)
    assert state["step"] == 0
    with pytest.raises(ParameterError):
        adam_step(params, {"a": torch.zeros(3, dtype=D), "b": torch.zeros(1, dtype=D)}, state, 0.1)


def test_clip_grads():
    grads = {"a": torch.tensor([3.0, 4.0], dtype=D)}
    assert clip_grads(grads, 1.0) == pytest.approx(5.0)
    assert float(grads["a"].norm()) == pytest.approx(1.0)


def test_length_batches_are_homogeneous(small_corpus):
    tr = small_corpus[0]
    batches = length_batches(tr, 16, np.random.default_rng(0))
    assert sorted(k for b in batches for k in b) == list(range(len(tr)))
    assert all(len({tr[k].n for k in b}) == 1 and len(b) <= 16 for b in batches)


def test_config_validation_and_file(tmp_path):
    with pytest.raises(ParameterError):
        TrainConfig(epochs=1, warmup_epochs=2)
    with pytest.raises(ParameterError):
        TrainConfig(lr=0)
    with pytest.raises(ParameterError):
        TrainConfig(batch_size=0)
    path = tmp_path / "c.cfg"
    path.write_text("# comment\nepochs = 3\nlr = 0.01\nlex = false\nscheme = unlabeled\n")
    cfg = load_config(path)
    assert (cfg.epochs, cfg.lr, cfg.lex, cfg.scheme) == (3, 0.01, False, "unlabeled")
    with pytest.raises(ParameterError):
        TrainConfig.from_dict(parse_config_text("nope = 1"))
    assert TrainConfig.from_dict(parse_config_text(TrainConfig().dumps())) == TrainConfig()


def test_empty_training_set():
    with pytest.raises(ParameterError):
        train(TrainConfig(epochs=1, warmup_epochs=0), [], [], stream=None)


def test_training_is_deterministic_and_logs(tmp_path):
    tr, dev, _ = synthetic_splits(5, 60, 15, 0)
    cfg = TrainConfig(epochs=2, warmup_epochs=1, seed=1, d_emb=8, hidden=8, k=6, k_label=4)
    metrics = tmp_path / "m.jsonl"
    a = train(cfg, tr, dev, metrics_path=metrics, stream=None)
    b = train(cfg, tr, dev, stream=None)
    strip = lambda h: [{k: v for k, v in r.items() if k != "elapsed"} for r in h]
    assert strip(a.history) == strip(b.history)
    assert all(torch.equal(a.params[k], b.params[k]) for k in a.params)
    lines = metrics.read_text().splitlines()
    assert len(lines) == 2
    assert a.dev_f1 == max(r["dev_f1"] for r in a.history)
    assert all(math.isfinite(r["total"]) for r in a.history)
