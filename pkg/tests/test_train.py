import csv
import math

import numpy as np
import pytest
import torch

from seqforge.checkpoint import CheckpointError, load_checkpoint, restore_cascade, save_checkpoint
from seqforge.models import Cascade, CascadePlan
from seqforge.pairs import synthesize_pairs
from seqforge.render import RendererConfig
from seqforge.train import (
    HISTORY_FIELDS,
    HISTORY_FILE,
    TrainBatch,
    TrainConfig,
    Trainer,
    TrainingAborted,
    make_optimizer,
    read_history,
    train,
)


@pytest.fixture(scope="module")
def pairs(corpus, fonts):
    return synthesize_pairs(corpus, fonts, RendererConfig(), 8, base_seed=40)


def first_batch(pairs, size=4):
    return next(pairs.batches(0, size, 0))


def state_bytes(module):
    return [(k, v.numpy().tobytes()) for k, v in module.state_dict().items()]


class Interrupting:
    """Dataset wrapper that raises after a fixed number of batches."""

    def __init__(self, inner, after):
        self.inner, self.after, self.seen = inner, after, 0

    def num_batches(self, batch_size):
        return self.inner.num_batches(batch_size)

    def batches(self, epoch, batch_size, seed, start=0):
        for b in self.inner.batches(epoch, batch_size, seed, start):
            if self.seen == self.after:
                raise KeyboardInterrupt
            self.seen += 1
            yield b


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(l1_weight=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1e-4)


def test_batch_alignment():
    with pytest.raises(ValueError):
        TrainBatch(torch.zeros(2, 3, 4, 4), torch.zeros(3, 3, 4, 4), torch.zeros(2, 1, 4, 4))
    with pytest.raises(ValueError):
        TrainBatch(torch.zeros(2, 3, 4, 4), torch.zeros(2, 3, 4, 4), torch.zeros(2, 1, 4, 5))


def test_step_is_deterministic(pairs, tiny_plan):
    batch = first_batch(pairs)
    runs = []
    for _ in range(2):
        t = Trainer(Cascade(tiny_plan, seed=0), TrainConfig(batch_size=4))
        recs = [t.train_step(batch) for _ in range(2)]
        runs.append((state_bytes(t.cascade), [r.row() for r in recs]))
    assert runs[0] == runs[1]


def test_record_is_finite_and_counts(pairs, tiny_plan):
    t = Trainer(Cascade(tiny_plan, seed=0), TrainConfig(batch_size=4))
    rec = t.train_step(first_batch(pairs))
    assert rec.step == 0 and t.step == 1
    values = rec.row()[1:]
    assert all(math.isfinite(float(v)) for v in values)
    assert rec.g1_l1 >= 0 and rec.g2_l1 >= 0
    assert rec.empty_masks == 0


def test_zero_learning_rate_freezes_parameters(pairs, tiny_plan):
    t = Trainer(Cascade(tiny_plan, seed=0), TrainConfig(learning_rate=0.0))
    before = [p.detach().clone() for p in t.cascade.parameters()]
    t.train_step(first_batch(pairs))
    assert all(torch.equal(a, b) for a, b in zip(before, t.cascade.parameters()))


def test_adam_scalar_oracle():
    cfg = TrainConfig()
    w = torch.nn.Parameter(torch.tensor([0.3], dtype=torch.float64))
    opt = make_optimizer([w], cfg)
    lr, b1, b2, eps = cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, 1e-8
    value, m, v = 0.3, 0.0, 0.0
    for step in range(1, 6):
        opt.zero_grad()
        loss = (w * 2.0 - 1.0) ** 2  # toy network: one weight, one target
        loss.sum().backward()
        g = 4.0 * (2.0 * value - 1.0)
        opt.step()
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat, v_hat = m / (1 - b1**step), v / (1 - b2**step)
        value -= lr * m_hat / (math.sqrt(v_hat) + eps)
        assert abs(w.item() - value) <= 1e-7


def test_non_finite_input_aborts(pairs, tiny_plan):
    b = first_batch(pairs)
    bad = TrainBatch(torch.full_like(b.semantic, math.nan), b.real, b.foreground_mask)
    t = Trainer(Cascade(tiny_plan, seed=0), TrainConfig())
    with pytest.raises(TrainingAborted) as info:
        t.train_step(bad)
    assert info.value.record["step"] == 0
    assert t.step == 0


def test_empty_foreground_is_counted(pairs, tiny_plan):
    b = first_batch(pairs)
    empty = TrainBatch(b.semantic, b.real, torch.zeros_like(b.foreground_mask))
    rec = Trainer(Cascade(tiny_plan, seed=0), TrainConfig()).train_step(empty)
    assert rec.empty_masks == 1 and rec.g1_l1 == 0.0


def test_zero_epochs_returns_initial_state(tmp_path, pairs, tiny_plan):
    res = train(pairs, TrainConfig(epochs=0, batch_size=4), tmp_path, plan=tiny_plan)
    assert res.history == [] and read_history(tmp_path / HISTORY_FILE) == []
    assert state_bytes(res.cascade) == state_bytes(Cascade(tiny_plan, seed=0))
    assert load_checkpoint(res.checkpoint).step == 0


def test_history_file(tmp_path, pairs, tiny_plan):
    res = train(pairs, TrainConfig(epochs=1, batch_size=4), tmp_path, plan=tiny_plan)
    with open(tmp_path / HISTORY_FILE, newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == HISTORY_FIELDS
    assert [int(r[0]) for r in rows[1:]] == [0, 1]
    assert [r.g2_l1 for r in read_history(tmp_path / HISTORY_FILE)] == [r.g2_l1 for r in res.history]


def test_resume_matches_uninterrupted(tmp_path, pairs, tiny_plan):
    cfg = TrainConfig(epochs=3, batch_size=4, checkpoint_every=1)
    full = train(pairs, cfg, tmp_path / "full", plan=tiny_plan)

    with pytest.raises(KeyboardInterrupt):
        train(Interrupting(pairs, after=3), cfg, tmp_path / "cut", plan=tiny_plan)
    resumed = train(pairs, cfg, tmp_path / "cut", plan=tiny_plan, resume=True)

    assert full.checkpoint.name == resumed.checkpoint.name
    assert full.checkpoint.read_bytes() == resumed.checkpoint.read_bytes()
    assert read_history(tmp_path / "full" / HISTORY_FILE) == read_history(tmp_path / "cut" / HISTORY_FILE)


def test_resume_without_checkpoint(tmp_path, pairs, tiny_plan):
    with pytest.raises(FileNotFoundError):
        train(pairs, TrainConfig(epochs=1, batch_size=4), tmp_path, plan=tiny_plan, resume=True)


def test_checkpoint_round_trip(tmp_path, pairs, tiny_plan):
    t = Trainer(Cascade(tiny_plan, seed=0), TrainConfig(batch_size=4))
    t.train_step(first_batch(pairs))
    a = t.save(tmp_path / "a.sqf")
    b = t.save(tmp_path / "b.sqf")
    assert a.read_bytes() == b.read_bytes()

    other = Trainer(Cascade(tiny_plan, seed=9), TrainConfig(batch_size=4))
    other.load(a)
    assert state_bytes(other.cascade) == state_bytes(t.cascade)
    assert other.step == 1
    assert torch.equal(other.cascade.noise.generator.get_state(), t.cascade.noise.generator.get_state())
    # Continuing from the restored copy matches continuing from the original.
    batch = first_batch(pairs)
    assert t.train_step(batch).row() == other.train_step(batch).row()


def test_checkpoint_errors(tmp_path, tiny_plan):
    path = save_checkpoint(tmp_path / "c.sqf", Cascade(tiny_plan))
    with pytest.raises(CheckpointError):
        restore_cascade(load_checkpoint(path), Cascade(CascadePlan(widths=(8, 8, 8, 8, 8, 8), disc_widths=(8, 8, 8))))
    bad = tmp_path / "bad.sqf"
    bad.write_bytes(b"NOTASEQF" + path.read_bytes()[8:])
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)
    trunc = tmp_path / "trunc.sqf"
    trunc.write_bytes(path.read_bytes()[:-100])
    with pytest.raises(CheckpointError):
        load_checkpoint(trunc)


def test_checkpoint_arrays_are_little_endian_float32(tmp_path, tiny_plan):
    ckpt = load_checkpoint(save_checkpoint(tmp_path / "c.sqf", Cascade(tiny_plan)))
    weights = [a for k, a in ckpt.arrays.items() if k.endswith("weight")]
    assert weights and all(a.dtype == np.dtype("<f4") for a in weights)
