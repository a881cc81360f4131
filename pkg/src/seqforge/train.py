"""Two-stage cGAN training: D1, G1, D2, G2 updates per batch with Adam."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator, Protocol

import numpy as np
import torch

from .checkpoint import NETS, load_checkpoint, restore_cascade, restore_optimizers, save_checkpoint
from .losses import EmptyMaskWarning, NonFiniteLossError, adversarial_loss_d, generator_loss, stage1_target
from .models import Cascade, CascadePlan

log = logging.getLogger(__name__)

HISTORY_FILE = "loss_history.csv"
HISTORY_FIELDS = ("step", "d1", "g1_adv", "g1_l1", "d2", "g2_adv", "g2_l1")


@dataclass(frozen=True)
class TrainConfig:
    l1_weight: float = 100.0
    learning_rate: float = 0.0002
    batch_size: int = 64
    epochs: int = 200
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    seed: int = 0
    checkpoint_every: int = 10  # epochs
    max_steps: int | None = None

    def __post_init__(self):
        if not self.l1_weight > 0:
            raise ValueError("l1_weight must be positive")
        # Zero is accepted so that a frozen update can be exercised.
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be at least 1")


@dataclass
class TrainBatch:
    semantic: torch.Tensor  # (N, 3, H, W) in [-1, 1]
    real: torch.Tensor  # (N, 3, H, W) in [-1, 1]
    foreground_mask: torch.Tensor  # (N, 1, H, W) in {0, 1}

    def __post_init__(self):
        n = self.semantic.shape[0]
        if self.real.shape[0] != n or self.foreground_mask.shape[0] != n:
            raise ValueError("batch members have different lengths")
        if self.real.shape != self.semantic.shape or self.foreground_mask.shape[2:] != self.semantic.shape[2:]:
            raise ValueError("batch members are not aligned")


@dataclass
class LossRecord:
    step: int
    d1: float
    g1_adv: float
    g1_l1: float
    d2: float
    g2_adv: float
    g2_l1: float
    empty_masks: int = 0

    def row(self) -> list:
        return [self.step] + [repr(float(getattr(self, k))) for k in HISTORY_FIELDS[1:]]


class TrainingAborted(RuntimeError):
    def __init__(self, message: str, record: dict):
        super().__init__(f"{message}: {record}")
        self.record = record


class Dataset(Protocol):
    def num_batches(self, batch_size: int) -> int: ...

    def batches(self, epoch: int, batch_size: int, seed: int, start: int = 0) -> Iterator[TrainBatch]: ...


def images_to_tensor(images: np.ndarray) -> torch.Tensor:
    """(N, H, W, C) uint8 -> (N, C, H, W) float32 in [-1, 1]."""
    t = torch.from_numpy(np.ascontiguousarray(images)).permute(0, 3, 1, 2).to(torch.float32)
    return t / 127.5 - 1.0


class PairedDataset:
    """In-memory (semantic, real, foreground) triples stored as uint8."""

    def __init__(self, semantic: np.ndarray, real: np.ndarray, foreground: np.ndarray):
        if not (len(semantic) == len(real) == len(foreground)) or len(semantic) == 0:
            raise ValueError("paired dataset needs equally many, and at least one, samples")
        self.semantic = np.asarray(semantic, dtype=np.uint8)
        self.real = np.asarray(real, dtype=np.uint8)
        self.foreground = np.asarray(foreground, dtype=np.uint8)

    def __len__(self) -> int:
        return len(self.semantic)

    def num_batches(self, batch_size: int) -> int:
        return math.ceil(len(self) / batch_size)

    def order(self, epoch: int, seed: int) -> np.ndarray:
        return np.random.default_rng([seed, epoch]).permutation(len(self))

    def batches(self, epoch: int, batch_size: int, seed: int, start: int = 0) -> Iterator[TrainBatch]:
        order = self.order(epoch, seed)
        for b in range(start, self.num_batches(batch_size)):
            idx = order[b * batch_size:(b + 1) * batch_size]
            yield TrainBatch(
                images_to_tensor(self.semantic[idx]),
                images_to_tensor(self.real[idx]),
                torch.from_numpy(self.foreground[idx][:, None].astype(np.float32)),
            )


def _finite(record: dict) -> bool:
    return all(math.isfinite(v) for k, v in record.items() if k != "step")


def set_requires_grad(net: torch.nn.Module, flag: bool):
    for p in net.parameters():
        p.requires_grad_(flag)


def make_optimizer(params, config: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=config.learning_rate, betas=(config.adam_beta1, config.adam_beta2))


class Trainer:
    """Owns the cascade, its four Adam optimizers and the step counter."""

    def __init__(self, cascade: Cascade, config: TrainConfig):
        self.cascade = cascade
        self.config = config
        self.optimizers = {name: make_optimizer(getattr(cascade, name).parameters(), config) for name in NETS}
        self.step = 0

    def _d_update(self, d, opt, x, real, fake) -> torch.Tensor:
        opt.zero_grad(set_to_none=True)
        loss = adversarial_loss_d(d(x, real), d(x, fake.detach()))
        loss.backward()
        opt.step()
        return loss

    def _g_update(self, d, opt, x, fake, target, mask):
        opt.zero_grad(set_to_none=True)
        set_requires_grad(d, False)
        try:
            loss = generator_loss(d(x, fake), fake, target, mask, self.config.l1_weight)
        finally:
            set_requires_grad(d, True)
        loss.total.backward()
        opt.step()
        return loss

    def _updates(self, x, real, fg):
        c, opts = self.cascade, self.optimizers
        target1 = stage1_target(real, fg)
        y1 = c.g1(x)
        d1 = self._d_update(c.d1, opts["d1"], x, target1, y1)
        g1 = self._g_update(c.d1, opts["g1"], x, y1, target1, fg)

        x2 = torch.cat([x, y1.detach()], dim=1)
        y2 = c.g2(x2)
        d2 = self._d_update(c.d2, opts["d2"], x, real, y2)
        g2 = self._g_update(c.d2, opts["g2"], x, y2, real, None)
        return d1, g1, d2, g2

    def train_step(self, batch: TrainBatch) -> LossRecord:
        """D1, G1, D2, G2 updates in that order; recorded losses are the pre-update values."""
        self.cascade.train()
        x, real, fg = batch.semantic, batch.real, batch.foreground_mask
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", EmptyMaskWarning)
            try:
                d1, g1, d2, g2 = self._updates(x, real, fg)
            except NonFiniteLossError as exc:
                raise TrainingAborted(str(exc), {"step": self.step}) from exc
        record = {
            "step": self.step,
            "d1": d1.item(),
            "g1_adv": g1.adv.item(),
            "g1_l1": g1.l1.item(),
            "d2": d2.item(),
            "g2_adv": g2.adv.item(),
            "g2_l1": g2.l1.item(),
        }
        if not _finite(record):
            raise TrainingAborted("non-finite loss", record)
        self.step += 1
        empty = sum(issubclass(w.category, EmptyMaskWarning) for w in caught)
        return LossRecord(**record, empty_masks=empty)

    def save(self, path: str | Path) -> Path:
        meta = {"train_config": asdict(self.config)}
        return save_checkpoint(path, self.cascade, self.optimizers, self.step, meta)

    def load(self, path: str | Path):
        ckpt = load_checkpoint(path)
        restore_cascade(ckpt, self.cascade)
        restore_optimizers(ckpt, self.optimizers)
        for opt in self.optimizers.values():
            for g in opt.param_groups:
                g["lr"] = self.config.learning_rate
                g["betas"] = (self.config.adam_beta1, self.config.adam_beta2)
        self.step = ckpt.step


def train_step(trainer: Trainer, batch: TrainBatch) -> LossRecord:
    return trainer.train_step(batch)


def checkpoint_name(step: int) -> str:
    return f"ckpt_{step:08d}.sqf"


def latest_checkpoint(directory: str | Path) -> Path | None:
    found = sorted(Path(directory).glob("ckpt_*.sqf"))
    return found[-1] if found else None


def read_history(path: str | Path) -> list[LossRecord]:
    path = Path(path)
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [LossRecord(int(r["step"]), *(float(r[k]) for k in HISTORY_FIELDS[1:])) for r in rows]


def _rewrite_history(path: Path, keep_before: int):
    records = [r for r in read_history(path) if r.step < keep_before]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_FIELDS)
        for r in records:
            w.writerow(r.row())


@dataclass
class TrainResult:
    cascade: Cascade
    history: list[LossRecord]
    checkpoint: Path
    trainer: Trainer


def train(
    dataset: Dataset,
    config: TrainConfig,
    checkpoint_dir: str | Path,
    plan: CascadePlan | None = None,
    resume: str | Path | bool | None = None,
) -> TrainResult:
    """Run ``epochs`` x batches train steps; checkpoint every N epochs and at the end.

    ``resume`` may be a checkpoint path, or True for the newest checkpoint in
    ``checkpoint_dir``. Data order is a pure function of (seed, epoch), so a
    resumed run continues exactly where the interrupted one stopped.
    """
    out = Path(checkpoint_dir)
    out.mkdir(parents=True, exist_ok=True)
    history_path = out / HISTORY_FILE

    trainer = Trainer(Cascade(plan or CascadePlan(), seed=config.seed), config)
    if resume:
        path = latest_checkpoint(out) if resume is True else Path(resume)
        if path is None:
            raise FileNotFoundError(f"no checkpoint to resume from in {out}")
        trainer.load(path)
        log.info("resumed from %s at step %d", path, trainer.step)
    _rewrite_history(history_path, trainer.step)

    per_epoch = dataset.num_batches(config.batch_size)
    if per_epoch < 1:
        raise ValueError("dataset yields no batches")
    total = config.epochs * per_epoch
    if config.max_steps is not None:
        total = min(total, config.max_steps)

    history: list[LossRecord] = []
    last_saved = None
    with open(history_path, "a", newline="") as fh:
        writer = csv.writer(fh)
        while trainer.step < total:
            epoch, start = divmod(trainer.step, per_epoch)
            for batch in dataset.batches(epoch, config.batch_size, config.seed, start):
                record = trainer.train_step(batch)
                history.append(record)
                writer.writerow(record.row())
                fh.flush()
                done_epochs, within = divmod(trainer.step, per_epoch)
                if within == 0 and done_epochs % config.checkpoint_every == 0:
                    last_saved = trainer.save(out / checkpoint_name(trainer.step))
                if trainer.step >= total:
                    break
            if trainer.step % 50 == 0 or trainer.step >= total:
                log.info("step %d/%d", trainer.step, total)
    final = out / checkpoint_name(trainer.step)
    if last_saved != final:
        final = trainer.save(final)
    return TrainResult(trainer.cascade, history, final, trainer)
