"""Training orchestration: split, pair batch, epoch loop, telemetry.

By default one pair batch is generated up front and swept repeatedly, in
minibatch chunks with one optimizer step per chunk; `fresh_batch_per_epoch`
regenerates the batch every epoch instead. Everything is deterministic
given the config seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from .dataset import EncodedDataset, ExperimentSplit, make_split
from .network import (
    LossConfig,
    SiameseModel,
    apply_update,
    batch_gradients,
    init_model,
    init_momentum_state,
)
from .pairgen import PairBatch, generate_training_batch
from .seeding import INIT_STREAM, PAIR_STREAM, SPLIT_STREAM, stream_rng

DEFAULT_ARCHITECTURE = (64, 32, 16)   # hidden widths then embedding width


@dataclass(frozen=True)
class TrainingConfig:
    train_batch_size: int = 30000
    test_batch_size: int = 30000
    n_epochs: int = 2000
    minibatch_size: int = 256
    fresh_batch_per_epoch: bool = False
    loss: LossConfig = field(default_factory=LossConfig)
    architecture: tuple[int, ...] = DEFAULT_ARCHITECTURE
    activation: str = "sigmoid"
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        for name in ("train_batch_size", "test_batch_size", "n_epochs", "minibatch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.minibatch_size > self.train_batch_size:
            raise ValueError("minibatch_size cannot exceed train_batch_size")

    def with_overrides(self, **kwargs) -> "TrainingConfig":
        return replace(self, **kwargs)


@dataclass
class TrainingTrace:
    """Per-epoch mean pair loss and wall-clock seconds."""

    losses: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    steps: int = 0

    @property
    def final_loss(self) -> float:
        return self.losses[-1]

    def __len__(self) -> int:
        return len(self.losses)

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            fh.write("epoch,loss,seconds\n")
            for epoch, (loss, secs) in enumerate(zip(self.losses, self.seconds), start=1):
                fh.write(f"{epoch},{loss!r},{secs:.6f}\n")


def run_training(
    ds: EncodedDataset,
    excluded_class: int,
    cfg: TrainingConfig,
    split: ExperimentSplit | None = None,
    on_batch: Callable[[PairBatch], None] | None = None,
) -> tuple[SiameseModel, ExperimentSplit, TrainingTrace]:
    """Train a twin network with class `excluded_class` withheld.

    `split` short-circuits split construction (e.g. when the encoder was
    fitted against a pre-built split); otherwise one is derived from the
    config seed. `on_batch` observes every generated pair batch, which is
    how exclusion audits and batch dumps hook in.
    """
    if ds.n_classes < 3:
        raise ValueError(
            f"dataset has {ds.n_classes} classes; similarity training requires at least "
            "3 classes (with fewer, the model degenerates to a coin-flip similarity)"
        )
    if split is None:
        split = make_split(ds, excluded_class, stream_rng(cfg.seed, SPLIT_STREAM))
    elif split.excluded_class != excluded_class:
        raise ValueError("provided split excludes a different class")

    model = init_model(
        (ds.width, *cfg.architecture), cfg.activation, stream_rng(cfg.seed, INIT_STREAM)
    )
    state = init_momentum_state(model, cfg.momentum)

    batch = None
    if not cfg.fresh_batch_per_epoch:
        batch = generate_training_batch(split, cfg.train_batch_size, stream_rng(cfg.seed, PAIR_STREAM))
        if on_batch is not None:
            on_batch(batch)

    trace = TrainingTrace()
    for epoch in range(cfg.n_epochs):
        started = time.perf_counter()
        if cfg.fresh_batch_per_epoch:
            batch = generate_training_batch(
                split, cfg.train_batch_size, stream_rng(cfg.seed, PAIR_STREAM, epoch)
            )
            if on_batch is not None:
                on_batch(batch)
        epoch_loss = 0.0
        for chunk in batch.chunks(cfg.minibatch_size):
            grads, loss_value = batch_gradients(model, chunk, cfg.loss)
            # step on the per-pair mean so the step size is independent of
            # the minibatch size
            apply_update(model, grads.scaled(1.0 / len(chunk)), state, cfg.learning_rate)
            epoch_loss += loss_value
            trace.steps += 1
        trace.losses.append(epoch_loss / len(batch))
        trace.seconds.append(time.perf_counter() - started)
    return model, split, trace
