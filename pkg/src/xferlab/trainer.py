"""Two-stage training: low-rate pretraining on weak labels, then training
on full labels until convergence.

Stage one makes a fixed small number of passes (default one) over the
weakly labeled dataset and never checks convergence. Stage two holds out
a validation slice of the fully labeled training data and early-stops on
validation loss, returning the parameter snapshot with the lowest
validation loss seen. Optimizer moments are reset between stages because
the two learning-rate regimes differ by orders of magnitude.

Single-stage baselines (full-labels-only, weak-labels-only) reuse the
same machinery; everything is deterministic given (plan, datasets, seed).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .corpus import Dataset, DatasetKind
from .errors import ValidationError
from .featurize import Encoder
from .model import (
    ModelParams,
    OptimizerState,
    batch_step,
    bce_loss,
    forward,
    init_params,
    make_optimizer,
    predict_class,
)

_U64 = 0xFFFFFFFFFFFFFFFF
_VAL_SALT = 0x76616C  # distinguishes the validation-split stream from shuffles

VisitHook = Callable[[str, list[int]], None]


def _rng(*parts: int) -> np.random.Generator:
    return np.random.default_rng([p & _U64 for p in parts])


@dataclass(frozen=True)
class StageConfig:
    learning_rate: float
    max_epochs: int = 200
    batch_size: int = 64
    shuffle_seed: int = 0

    def __post_init__(self):
        # learning_rate 0 is allowed so no-op runs stay observable
        if not (math.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ValidationError(f"learning rate {self.learning_rate} invalid")
        if self.max_epochs < 1:
            raise ValidationError(f"max_epochs {self.max_epochs} must be >= 1")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size {self.batch_size} must be >= 1")


@dataclass(frozen=True)
class ConvergencePolicy:
    """Early stopping on held-out validation loss."""

    patience: int = 5
    min_delta: float = 1e-4
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.patience < 1:
            raise ValidationError(f"patience {self.patience} must be >= 1")
        if not 0.0 < self.val_fraction <= 0.5:
            raise ValidationError(
                f"val_fraction {self.val_fraction} outside (0, 0.5]"
            )
        if self.min_delta < 0:
            raise ValidationError(f"min_delta {self.min_delta} must be >= 0")


@dataclass(frozen=True)
class TwoStagePlan:
    train: StageConfig
    pretrain: StageConfig | None = None
    convergence: ConvergencePolicy = field(default_factory=ConvergencePolicy)

    def __post_init__(self):
        if self.pretrain is not None and not (
            self.pretrain.learning_rate < self.train.learning_rate
        ):
            raise ValidationError(
                f"pretrain learning rate {self.pretrain.learning_rate} must be "
                f"lower than train learning rate {self.train.learning_rate}"
            )


class StopReason(enum.Enum):
    CONVERGED = "converged"
    MAX_EPOCHS = "max_epochs"


@dataclass(frozen=True)
class EpochRecord:
    stage: str  # "pretrain" | "train"
    epoch: int  # 1-based within the stage
    mean_train_loss: float
    val_loss: float | None = None
    val_accuracy: float | None = None


@dataclass(frozen=True)
class TrainRecord:
    epochs: tuple[EpochRecord, ...]
    stopped_reason: StopReason

    def to_json(self) -> dict:
        return {
            "epochs": [
                {
                    "stage": e.stage,
                    "epoch": e.epoch,
                    "mean_train_loss": e.mean_train_loss,
                    "val_loss": e.val_loss,
                    "val_accuracy": e.val_accuracy,
                }
                for e in self.epochs
            ],
            "stopped_reason": self.stopped_reason.value,
        }

    @staticmethod
    def from_json(data: dict) -> "TrainRecord":
        return TrainRecord(
            tuple(EpochRecord(**e) for e in data["epochs"]),
            StopReason(data["stopped_reason"]),
        )

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")


def _encode_all(dataset: Dataset, encoder: Encoder):
    xs = [encoder.encode(ex) for ex in dataset.examples]
    ys = [ex.label for ex in dataset.examples]
    ids = [ex.review_id for ex in dataset.examples]
    return xs, ys, ids


def _run_epoch(
    params: ModelParams,
    opt: OptimizerState,
    xs,
    ys,
    ids,
    order: np.ndarray,
    batch_size: int,
    stage: str,
    on_visit: VisitHook | None,
) -> tuple[ModelParams, OptimizerState, float]:
    """One pass in the given order; returns the example-weighted mean loss."""
    total = 0.0
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        if on_visit is not None:
            on_visit(stage, [ids[i] for i in idx])
        batch = [(xs[i], ys[i]) for i in idx]
        params, opt, batch_loss = batch_step(params, opt, batch)
        total += batch_loss * len(idx)
    return params, opt, total / len(order)


def _mean_loss_and_accuracy(params: ModelParams, xs, ys) -> tuple[float, float]:
    total, correct = 0.0, 0
    for x, y in zip(xs, ys):
        total += bce_loss(forward(params, x), y)
        if predict_class(params, x) == y.index:
            correct += 1
    return total / len(xs), correct / len(xs)


def pretrain_stage(
    params: ModelParams,
    opt: OptimizerState,
    wld_train: Dataset,
    cfg: StageConfig,
    encoder: Encoder,
    on_visit: VisitHook | None = None,
) -> tuple[ModelParams, list[EpochRecord]]:
    """Exactly cfg.max_epochs full passes over the weak labels; no convergence
    check, no validation slice."""
    if wld_train.kind is not DatasetKind.WLD:
        raise ValidationError(
            f"pretraining expects a WLD, got {wld_train.kind.value} ({wld_train.name})"
        )
    if len(wld_train) == 0:
        raise ValidationError(f"cannot pretrain on empty dataset {wld_train.name}")
    xs, ys, ids = _encode_all(wld_train, encoder)
    records = []
    for epoch in range(1, cfg.max_epochs + 1):
        order = _rng(cfg.shuffle_seed, epoch).permutation(len(xs))
        params, opt, mean_loss = _run_epoch(
            params, opt, xs, ys, ids, order, cfg.batch_size, "pretrain", on_visit
        )
        records.append(EpochRecord("pretrain", epoch, mean_loss))
    return params, records


def train_stage(
    params: ModelParams,
    opt: OptimizerState,
    fld_train: Dataset,
    convergence: ConvergencePolicy,
    cfg: StageConfig,
    encoder: Encoder,
    on_visit: VisitHook | None = None,
) -> tuple[ModelParams, list[EpochRecord], StopReason]:
    """Train with early stopping on a held-out validation slice.

    Returns the parameter snapshot with the lowest validation loss.
    """
    if fld_train.kind is not DatasetKind.FLD:
        raise ValidationError(
            f"training expects an FLD, got {fld_train.kind.value} ({fld_train.name})"
        )
    return _fit_early_stopping(params, opt, fld_train, convergence, cfg, encoder, on_visit)


def _fit_early_stopping(
    params: ModelParams,
    opt: OptimizerState,
    dataset: Dataset,
    convergence: ConvergencePolicy,
    cfg: StageConfig,
    encoder: Encoder,
    on_visit: VisitHook | None = None,
) -> tuple[ModelParams, list[EpochRecord], StopReason]:
    n = len(dataset)
    if n == 0:
        raise ValidationError(f"cannot train on empty dataset {dataset.name}")
    if n < 2:
        raise ValidationError(
            f"dataset {dataset.name} too small to hold out a validation slice"
        )
    xs, ys, ids = _encode_all(dataset, encoder)
    holdout = _rng(cfg.shuffle_seed, _VAL_SALT).permutation(n)
    n_val = max(1, math.floor(convergence.val_fraction * n))
    val_idx = holdout[:n_val]
    train_idx = holdout[n_val:]
    val_xs = [xs[i] for i in val_idx]
    val_ys = [ys[i] for i in val_idx]

    best_params = params
    best_val = math.inf
    stop_ref = math.inf  # reference for the patience counter (keras-style)
    stale = 0
    records = []
    reason = StopReason.MAX_EPOCHS
    for epoch in range(1, cfg.max_epochs + 1):
        order = train_idx[_rng(cfg.shuffle_seed, epoch).permutation(len(train_idx))]
        params, opt, mean_loss = _run_epoch(
            params, opt, xs, ys, ids, order, cfg.batch_size, "train", on_visit
        )
        val_loss, val_acc = _mean_loss_and_accuracy(params, val_xs, val_ys)
        records.append(EpochRecord("train", epoch, mean_loss, val_loss, val_acc))
        if val_loss < best_val:
            best_val = val_loss
            best_params = params
        if val_loss < stop_ref - convergence.min_delta:
            stop_ref = val_loss
            stale = 0
        else:
            stale += 1
            if stale >= convergence.patience:
                reason = StopReason.CONVERGED
                break
    return best_params, records, reason


def run_two_stage(
    plan: TwoStagePlan,
    source_wld: Dataset | None,
    source_fld_train: Dataset,
    encoder: Encoder,
    seed: int,
    hidden_dims: tuple[int, ...] = (),
    optimizer: str = "adam",
    initial_params: ModelParams | None = None,
    on_visit: VisitHook | None = None,
    on_pretrain_end: Callable[[ModelParams], None] | None = None,
) -> tuple[ModelParams, TrainRecord]:
    """Initialize, optionally pretrain on the WLD, then train on the FLD.

    The optimizer state is rebuilt between stages so moments accumulated
    at the pretraining rate never leak into the training stage. With
    plan.pretrain absent this is the full-labels-only baseline.
    on_pretrain_end sees the parameters between the stages (checkpointing).
    """
    params = (
        initial_params
        if initial_params is not None
        else init_params(encoder.dim, hidden_dims, seed)
    )
    epochs: list[EpochRecord] = []
    if plan.pretrain is not None:
        if source_wld is None:
            raise ValidationError("plan has a pretraining stage but no WLD was given")
        opt = make_optimizer(optimizer, plan.pretrain.learning_rate, params)
        params, pre_records = pretrain_stage(
            params, opt, source_wld, plan.pretrain, encoder, on_visit
        )
        epochs.extend(pre_records)
        if on_pretrain_end is not None:
            on_pretrain_end(params)
    opt = make_optimizer(optimizer, plan.train.learning_rate, params)
    params, train_records, reason = train_stage(
        params, opt, source_fld_train, plan.convergence, plan.train, encoder, on_visit
    )
    epochs.extend(train_records)
    return params, TrainRecord(tuple(epochs), reason)


def run_baseline_wld_only(
    source_wld: Dataset,
    cfg: StageConfig,
    encoder: Encoder,
    seed: int,
    convergence: ConvergencePolicy | None = None,
    hidden_dims: tuple[int, ...] = (),
    optimizer: str = "adam",
    on_visit: VisitHook | None = None,
) -> tuple[ModelParams, TrainRecord]:
    """Single-stage training on weak labels, with the usual convergence rules;
    the validation slice is drawn from the WLD itself."""
    if source_wld.kind is not DatasetKind.WLD:
        raise ValidationError(
            f"weak-labels-only baseline expects a WLD, got {source_wld.kind.value}"
        )
    params = init_params(encoder.dim, hidden_dims, seed)
    opt = make_optimizer(optimizer, cfg.learning_rate, params)
    params, records, reason = _fit_early_stopping(
        params, opt, source_wld, convergence or ConvergencePolicy(), cfg, encoder, on_visit
    )
    return params, TrainRecord(tuple(records), reason)
