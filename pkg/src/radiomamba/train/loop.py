"""The training loop: batches, composite loss, clipping, AdamW, validation and checkpoints."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import autodiff as ad
from ..autodiff import ConfigurationError, NumericError, Tensor
from ..data import Batcher, EnvironmentSample, augment, stack
from ..losses import LossWeights, composite_loss, metrics
from ..seeding import derive_seed, substream
from .checkpoint import load_checkpoint, save_checkpoint
from .optim import TrainState, adamw_step, clip_grad_norm, cosine_lr

TELEMETRY_HEADER = ("step", "lr", "loss", "l1", "mse", "ssim_loss", "grad_loss")
VALIDATION_HEADER = ("step", "nmse", "rmse", "ssim", "psnr")
METRIC_KEYS = VALIDATION_HEADER[1:]


@dataclass
class TrainConfig:
    steps: int = 5000
    batch_size: int = 8
    lr_max: float = 9e-4
    lr_min: float = 1e-6
    weight_decay: float = 1e-4
    clip_norm: float = 1.0
    val_every: int = 250
    seed: int = 0
    mode: str = "SRM"
    # random flips and quarter turns of each training pair; the oracle is equivariant to them
    augment: bool = True
    loss_weights: list[float] = field(default_factory=lambda: [0.4, 0.1, 0.2, 0.3])

    def validate(self) -> None:
        problems = []
        if self.steps < 1 or self.batch_size < 1 or self.val_every < 1:
            problems.append("steps, batch_size and val_every must be positive")
        if not 0 <= self.lr_min <= self.lr_max:
            problems.append(f"need 0 <= lr_min <= lr_max, got {self.lr_min}, {self.lr_max}")
        if self.weight_decay < 0 or self.clip_norm < 0:
            problems.append("weight_decay and clip_norm must be non-negative")
        if len(self.loss_weights) != 4:
            problems.append(f"loss_weights needs 4 values, got {len(self.loss_weights)}")
        if problems:
            raise ConfigurationError("; ".join(problems))
        self.weights()

    def weights(self) -> LossWeights:
        try:
            return LossWeights(*map(float, self.loss_weights))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None


@dataclass
class History:
    steps: list[dict] = field(default_factory=list)
    validation: list[dict] = field(default_factory=list)


def predict(model, x: np.ndarray, batch_size: int = 8) -> np.ndarray:
    """Forward pass without a graph, in chunks of ``batch_size``; returns (B, 1, N, N)."""
    out = []
    with ad.no_grad():
        for i in range(0, len(x), batch_size):
            out.append(model(Tensor(x[i:i + batch_size])).data)
    return np.concatenate(out)


def evaluate(model, samples: Sequence[EnvironmentSample], mode: str, batch_size: int = 8) -> dict[str, float]:
    """Per-sample NMSE/RMSE/SSIM/PSNR averaged over ``samples``."""
    x, y = stack(samples, mode)
    pred = predict(model, x, batch_size)
    per = [metrics(p[0], t[0]) for p, t in zip(pred, y)]
    return {k: float(np.mean([m[k] for m in per])) for k in METRIC_KEYS}


def _csv_rows(path: Path, header: Sequence[str], keep_below: int | None) -> None:
    """Create ``path`` with its header, or drop rows at or after ``keep_below`` when resuming."""
    if keep_below is None or not path.exists():
        with path.open("w", newline="") as f:
            csv.writer(f).writerow(header)
        return
    with path.open(newline="") as f:
        rows = list(csv.reader(f))
    kept = [r for r in rows[1:] if r and int(r[0]) < keep_below]
    with path.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(kept)


def _append(path: Path, row: Sequence) -> None:
    with path.open("a", newline="") as f:
        csv.writer(f).writerow([repr(v) if isinstance(v, float) else v for v in row])


def train_loop(model, train: Sequence[EnvironmentSample], val: Sequence[EnvironmentSample],
               cfg: TrainConfig, out_dir: Path, resume: bool = False, log=None,
               until: int | None = None) -> tuple[TrainState, History]:
    """Train ``model`` in place, writing telemetry and checkpoints under ``out_dir``.

    ``last.ckpt`` is written after every validation and ``best.ckpt`` whenever the
    validation NMSE improves. With ``resume`` the run continues from ``last.ckpt``
    and the telemetry files are trimmed back to its step. ``until`` stops the run
    early (after that many total steps) without changing the schedule.
    """
    cfg.validate()
    weights = cfg.weights()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    last, best = out_dir / "last.ckpt", out_dir / "best.ckpt"
    extra = {f"train.{k}": v for k, v in vars(cfg).items()}

    state = load_checkpoint(last, model) if resume and last.exists() else None
    if state is None:
        state = TrainState(total_steps=cfg.steps, lr_max=cfg.lr_max, lr_min=cfg.lr_min,
                           weight_decay=cfg.weight_decay, seed=cfg.seed)
    elif state.total_steps != cfg.steps:
        raise ConfigurationError(f"{last}: checkpoint was made for {state.total_steps} steps, not {cfg.steps}")
    start = state.step
    telemetry, validation = out_dir / "train.csv", out_dir / "val.csv"
    _csv_rows(telemetry, TELEMETRY_HEADER, start if start else None)
    _csv_rows(validation, VALIDATION_HEADER, start + 1 if start else None)

    batcher = Batcher(train, cfg.batch_size, derive_seed(cfg.seed, "shuffle"), cfg.mode)
    params = model.parameters()
    history = History()
    last_good = last if start else None

    def abort(what: str) -> NumericError:
        ref = f"last good checkpoint: {last_good}" if last_good else "no checkpoint written yet"
        return NumericError(f"{what} at step {state.step}; {ref}")

    stop = cfg.steps if until is None else min(cfg.steps, until)
    for step in range(start, stop):
        lr = cosine_lr(step, state.total_steps, state.lr_max, state.lr_min)
        x, y = batcher.batch(step)
        if cfg.augment:
            x, y = augment(x, y, substream(cfg.seed, "augment", step))
        model.zero_grad()
        loss, parts = composite_loss(model(Tensor(x)), Tensor(y), weights)
        value = float(loss.data)
        if not math.isfinite(value):
            raise abort(f"non-finite loss {value}")
        loss.backward()
        clip_grad_norm(params, cfg.clip_norm)
        try:
            adamw_step(params, state, lr)
        except NumericError as exc:
            raise abort(str(exc)) from None
        row = {"step": step, "lr": lr, "loss": value, **parts}
        history.steps.append(row)
        _append(telemetry, [row[k] for k in TELEMETRY_HEADER])

        done = step + 1
        if done % cfg.val_every == 0 or done == cfg.steps:
            scores = evaluate(model, val, cfg.mode, cfg.batch_size) if val else {k: math.nan for k in METRIC_KEYS}
            history.validation.append({"step": done, **scores})
            _append(validation, [done, *(scores[k] for k in METRIC_KEYS)])
            if scores["nmse"] < state.best_val:
                state.best_val = scores["nmse"]
                save_checkpoint(best, model, state, extra)
            save_checkpoint(last, model, state, extra)
            last_good = last
            if log is not None:
                log(f"step {done}/{cfg.steps} loss {value:.5f} val nmse {scores['nmse']:.5f} ssim {scores['ssim']:.4f}")
    return state, history
