"""Training loop: summed squared-error loss, SGD with weight decay,
patience-driven LR schedule and early stopping.

The per-sequence loss sums squared errors over every requested participant
and all 5 traits (no averaging inside a sequence); a batch averages its
sequences' losses.  Validation runs in eval mode and drives one shared
epochs-since-best clock: the LR is cut every ``lr_patience`` stale epochs
and training stops after ``stop_patience``.  Everything is a deterministic
function of the seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import SequenceSample
from .metrics import PredictionRecord
from .model import DyadInput, ModelConfig, forward
from .tensor import ParamStore, RngStream, Tensor, add, backward, mul, scale, sub, sum_all

__all__ = [
    "TrainConfig",
    "TrainState",
    "sequence_loss",
    "sgd_step",
    "schedule_and_stop",
    "evaluate_loss",
    "predict_records",
    "train",
]


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 5e-4
    weight_decay: float = 5e-3
    lr_factor: float = 0.5
    lr_patience: int = 3
    stop_patience: int = 6
    max_epochs: int = 50
    batch_size: int = 16
    seed: int = 0
    participants: tuple[str, ...] = ("A", "B")
    momentum: float = 0.0
    improvement_tol: float = 0.0

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError("lr0 must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if not (0 < self.lr_factor < 1):
            raise ValueError("lr_factor must be in (0, 1)")
        if self.lr_patience < 1 or self.stop_patience < 1:
            raise ValueError("patience values must be >= 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not (0 <= self.momentum < 1):
            raise ValueError("momentum must be in [0, 1)")
        if self.improvement_tol < 0:
            raise ValueError("improvement_tol must be >= 0")

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        d = dict(d)
        if "participants" in d:
            d["participants"] = tuple(d["participants"])
        return cls(**d)


@dataclass
class TrainState:
    """Mutable bookkeeping for one run; ``log`` grows one entry per epoch."""

    lr: float
    best_val_loss: float = float("inf")
    best_epoch: int = 0
    epochs_since_best: int = 0
    stopped: bool = False
    epoch: int = 0
    log: list[dict] = field(default_factory=list)


def sequence_loss(
    preds: dict[str, Tensor],
    targets: dict[str, np.ndarray],
    participants: Sequence[str] = ("A", "B"),
) -> Tensor:
    """Sum of squared errors over participants and their 5 traits (scalar)."""
    if not participants:
        raise ValueError("sequence_loss needs at least one participant")
    total: Tensor | None = None
    for p in participants:
        diff = sub(preds[p], Tensor(np.asarray(targets[p], dtype=np.float64)))
        term = sum_all(mul(diff, diff))
        total = term if total is None else add(total, term)
    return total


def sgd_step(
    store: ParamStore,
    lr: float,
    weight_decay: float,
    momentum: float = 0.0,
    velocity: dict[str, np.ndarray] | None = None,
) -> int:
    """In-place update theta <- theta - lr * (grad + wd * theta).

    Every parameter must carry a gradient buffer (zero is fine; decay still
    applies).  Returns the number of parameters updated, which equals the
    distinct-parameter count however often each was used in the graph.
    Gradients are cleared afterwards.
    """
    if lr <= 0:
        raise ValueError(f"lr must be > 0, got {lr}")
    if weight_decay < 0:
        raise ValueError(f"weight_decay must be >= 0, got {weight_decay}")
    updated = 0
    for name, t in store.items():
        if t.grad is None:
            raise ValueError(f"parameter {name!r} has no gradient; run backward first")
        step = t.grad + weight_decay * t.data
        if momentum > 0:
            if velocity is None:
                raise ValueError("momentum needs a velocity dict")
            v = velocity.get(name)
            v = step if v is None else momentum * v + step
            velocity[name] = v
            step = v
        t.data -= lr * step
        t.grad = None
        updated += 1
    return updated


def schedule_and_stop(state: TrainState, val_loss: float, cfg: TrainConfig) -> bool:
    """Advance the shared patience clock with this epoch's validation loss.

    Improvement resets the clock; otherwise the run stops once the clock
    reaches ``stop_patience`` (checked first, so no LR cut fires on the
    stopping epoch) and the LR is multiplied by ``lr_factor`` each time the
    clock hits a multiple of ``lr_patience``.  Returns True to stop.
    """
    if val_loss < state.best_val_loss - cfg.improvement_tol:
        state.best_val_loss = val_loss
        state.best_epoch = state.epoch
        state.epochs_since_best = 0
        return False
    state.epochs_since_best += 1
    if state.epochs_since_best >= cfg.stop_patience:
        state.stopped = True
        return True
    if state.epochs_since_best % cfg.lr_patience == 0:
        state.lr *= cfg.lr_factor
    return False


def _to_input(sample: SequenceSample) -> DyadInput:
    return DyadInput(video=sample.video, audio=sample.audio, metadata=sample.metadata)


def evaluate_loss(
    samples: Sequence[SequenceSample],
    config: ModelConfig,
    store: ParamStore,
    participants: Sequence[str] = ("A", "B"),
) -> float:
    """Mean per-sequence loss in eval mode (no dropout, no randomness)."""
    if not samples:
        raise ValueError("evaluate_loss needs at least one sample")
    total = 0.0
    for s in samples:
        preds = forward(_to_input(s), config, store, mode="eval",
                        participants=tuple(participants))
        total += float(sequence_loss(preds, s.ocean, participants).data)
    return total / len(samples)


def predict_records(
    samples: Sequence[SequenceSample],
    config: ModelConfig,
    store: ParamStore,
    participants: Sequence[str] = ("A", "B"),
) -> list[PredictionRecord]:
    """Eval-mode predictions for every (sample, participant) pair."""
    out: list[PredictionRecord] = []
    for s in samples:
        preds = forward(_to_input(s), config, store, mode="eval",
                        participants=tuple(participants))
        for p in participants:
            out.append(
                PredictionRecord(
                    session_id=s.session_id,
                    task=s.task,
                    participant_id=s.participant_ids[p],
                    sequence_start=s.start,
                    prediction=preds[p].data.copy(),
                    ground_truth=s.ocean[p],
                )
            )
    return out


def train(
    config: ModelConfig,
    train_cfg: TrainConfig,
    train_samples: Sequence[SequenceSample],
    val_samples: Sequence[SequenceSample],
    store: ParamStore | None = None,
    log_path: str | Path | None = None,
) -> tuple[ParamStore, TrainState]:
    """Fit the model; returns the best-validation parameters and the state.

    Parameters initialize from the seed unless a store is handed in.  Each
    epoch shuffles the training windows, walks them in batches (batch loss
    is the mean of its sequence losses), then scores validation and feeds
    the schedule.  max_epochs=0 returns the initialization untouched.
    """
    if not train_samples:
        raise ValueError("train needs at least one training sample")
    if not val_samples:
        raise ValueError("train needs at least one validation sample")
    from .model import init_params  # local import keeps module load cheap

    rng = RngStream(train_cfg.seed)
    if store is None:
        store = init_params(config, rng.fork(0))
    dropout_rng = rng.fork(1)
    shuffle_rng = rng.fork(2)

    state = TrainState(lr=train_cfg.lr0)
    best = store.copy()
    velocity: dict[str, np.ndarray] = {}
    participants = tuple(train_cfg.participants)

    log_fh = open(log_path, "w") if log_path is not None else None
    try:
        for epoch in range(1, train_cfg.max_epochs + 1):
            state.epoch = epoch
            order = shuffle_rng.permutation(len(train_samples))
            epoch_loss = 0.0
            for off in range(0, len(order), train_cfg.batch_size):
                batch = [train_samples[i] for i in order[off : off + train_cfg.batch_size]]
                store.zero_grads()
                total: Tensor | None = None
                try:
                    # the guards below report divergence; silence the
                    # duplicate numpy overflow warnings on the way there
                    with np.errstate(over="ignore", invalid="ignore"):
                        for s in batch:
                            preds = forward(
                                _to_input(s), config, store, mode="train",
                                rng=dropout_rng, participants=participants,
                            )
                            loss = sequence_loss(preds, s.ocean, participants)
                            total = loss if total is None else add(total, loss)
                except ValueError as e:
                    # overflow inside the graph surfaces as a finiteness error
                    if "finite" not in str(e):
                        raise
                    raise RuntimeError(
                        f"training diverged: non-finite activations at epoch {epoch}, "
                        f"batch offset {off} (lr={state.lr:g})"
                    ) from e
                batch_loss = scale(total, 1.0 / len(batch))
                value = float(batch_loss.data)
                if not np.isfinite(value):
                    raise RuntimeError(
                        f"training diverged: non-finite batch loss at epoch {epoch}, "
                        f"batch offset {off} (lr={state.lr:g})"
                    )
                with np.errstate(over="ignore", invalid="ignore"):
                    backward(batch_loss)
                    sgd_step(store, state.lr, train_cfg.weight_decay,
                             train_cfg.momentum, velocity)
                epoch_loss += value * len(batch)
            epoch_loss /= len(order)

            val_loss = evaluate_loss(val_samples, config, store, participants)
            lr_used = state.lr
            prev_best = state.best_val_loss
            stop = schedule_and_stop(state, val_loss, train_cfg)
            improved = state.best_val_loss < prev_best
            if improved:
                best = store.copy()
            entry = {
                "epoch": epoch,
                "train_loss": epoch_loss,
                "val_loss": val_loss,
                "lr": lr_used,
                "improved": improved,
            }
            state.log.append(entry)
            if log_fh is not None:
                log_fh.write(json.dumps(entry, sort_keys=True) + "\n")
            if stop:
                break
    finally:
        if log_fh is not None:
            log_fh.close()
    return best, state
