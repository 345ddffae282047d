"""Loss, optimizers and the training loop."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import IO

import numpy as np

from . import tensor as T
from .errors import ConfigError, NumericError
from .features import MultimodalClip, make_batch
from .layers import Module
from .tensor import Parameter, Tensor

OPTIMIZERS = ("adam", "sgd")


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    batch_size: int = 16
    max_steps: int = 2000
    grad_clip_norm: float = 5.0
    patience: int = 5
    eval_every: int = 100
    rng_seed: int = 0
    # stop as soon as a training batch loss falls below this (0 disables)
    stop_below: float = 0.0

    def validate(self) -> None:
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"train.optimizer: unknown optimizer {self.optimizer!r}; expected one of {OPTIMIZERS}")
        for name in ("learning_rate", "batch_size", "max_steps", "grad_clip_norm", "patience", "eval_every"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"train.{name} must be positive, got {getattr(self, name)}")
        if self.stop_below < 0:
            raise ConfigError("train.stop_below must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def cross_entropy_loss(logits: Tensor, targets: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of ``targets`` over positions where ``mask`` is True."""
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    if logits.shape[:-1] != targets.shape or targets.shape != mask.shape:
        raise T.ShapeError(f"logits {logits.shape}, targets {targets.shape} and mask {mask.shape} do not align")
    count = int(mask.sum())
    if count == 0:
        raise ValueError("every target position is padding; the loss is undefined")
    picked = T.take_lastdim(T.log_softmax_lastdim(logits), targets)
    return T.scale(T.sum(picked * mask.astype(np.float64)), -1.0 / count)


def global_grad_norm(params: list[Parameter]) -> float:
    return float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params if p.grad is not None)))


def clip_grad_norm(params: list[Parameter], max_norm: float) -> float:
    """Scale gradients in place so their global norm is at most ``max_norm``; returns the norm before clipping."""
    norm = global_grad_norm(params)
    if norm > max_norm:
        factor = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * factor
    return norm


def check_finite(named: list[tuple[str, Parameter]]) -> None:
    for name, p in named:
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            bad = int(np.size(p.grad) - np.count_nonzero(np.isfinite(p.grad)))
            raise NumericError(f"non-finite gradient in parameter {name} ({bad} of {p.grad.size} entries)")


class SGD:
    kind = "sgd"

    def __init__(self, named: list[tuple[str, Parameter]], lr: float) -> None:
        self.named = named
        self.lr = lr
        self.t = 0

    def step(self) -> None:
        self.t += 1
        for _, p in self.named:
            if p.grad is not None:
                p.data = p.data - self.lr * p.grad

    def state(self) -> dict[str, np.ndarray]:
        return {}

    def load_state(self, t: int, arrays: dict[str, np.ndarray]) -> None:
        self.t = t


class Adam:
    kind = "adam"

    def __init__(self, named: list[tuple[str, Parameter]], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.named = named
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros(p.shape) for name, p in named}
        self.v = {name: np.zeros(p.shape) for name, p in named}

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.named:
            if p.grad is None:
                continue
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * p.grad
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * p.grad * p.grad
            p.data = p.data - self.lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)

    def state(self) -> dict[str, np.ndarray]:
        out = {}
        for name, _ in self.named:
            out[f"m.{name}"] = self.m[name]
            out[f"v.{name}"] = self.v[name]
        return out

    def load_state(self, t: int, arrays: dict[str, np.ndarray]) -> None:
        self.t = t
        for name, _ in self.named:
            self.m[name] = np.array(arrays[f"m.{name}"], dtype=np.float64)
            self.v[name] = np.array(arrays[f"v.{name}"], dtype=np.float64)


def make_optimizer(model: Module, config: TrainConfig):
    named = model.named_parameters()
    if config.optimizer == "sgd":
        return SGD(named, config.learning_rate)
    return Adam(named, config.learning_rate)


def optimizer_step(model: Module, optimizer, config: TrainConfig) -> float:
    """NaN check, global-norm clipping, then one update. Returns the pre-clip norm."""
    named = model.named_parameters()
    check_finite(named)
    norm = clip_grad_norm([p for _, p in named], config.grad_clip_norm)
    optimizer.step()
    return norm


def batch_loss(model, clips: list[MultimodalClip], rng: np.random.Generator | None = None) -> Tensor:
    batch = make_batch(clips)
    return cross_entropy_loss(model.logits(batch, rng), batch.question_out, batch.question_mask)


def evaluate_loss(model, clips: list[MultimodalClip], batch_size: int = 64) -> float:
    """Token-weighted mean loss over ``clips`` without recording a tape."""
    total = count = 0.0
    with T.no_grad():
        for i in range(0, len(clips), batch_size):
            chunk = clips[i:i + batch_size]
            batch = make_batch(chunk)
            n = float(batch.question_mask.sum())
            loss = cross_entropy_loss(model.logits(batch), batch.question_out, batch.question_mask)
            total += loss.item() * n
            count += n
    return total / count


@dataclass
class TrainResult:
    trace: list[dict] = field(default_factory=list)
    steps: int = 0
    best_step: int | None = None
    best_val_loss: float | None = None
    stopped_early: bool = False
    final_train_loss: float | None = None


def train(model, train_clips: list[MultimodalClip], config: TrainConfig,
          val_clips: list[MultimodalClip] | None = None, log: IO[str] | None = None,
          optimizer=None, rng: np.random.Generator | None = None) -> TrainResult:
    """Minibatch training with per-epoch seeded shuffling.

    Every ``eval_every`` steps the validation loss is computed; the best
    parameters are kept and restored at the end, and training stops after
    ``patience`` evaluations without improvement. Each step appends a
    record ``{"step", "train_loss", "val_loss"}`` to the trace (``val_loss``
    is None between evaluations) and, if given, to ``log`` as JSON lines.
    """
    config.validate()
    if not train_clips:
        raise ValueError("no training clips")
    rng = rng if rng is not None else np.random.default_rng(config.rng_seed)
    optimizer = optimizer if optimizer is not None else make_optimizer(model, config)
    result = TrainResult()
    best_state = None
    bad_evals = 0
    order: list[int] = []
    step = optimizer.t
    while step < config.max_steps:
        if len(order) < config.batch_size:
            order.extend(rng.permutation(len(train_clips)).tolist())
        idx, order = order[: config.batch_size], order[config.batch_size:]
        model.zero_grad()
        loss = batch_loss(model, [train_clips[i] for i in idx], rng)
        T.backward(loss)
        optimizer_step(model, optimizer, config)
        step = optimizer.t
        train_loss = loss.item()
        if not np.isfinite(train_loss):
            raise NumericError(f"training loss became {train_loss} at step {step}")
        record = {"step": step, "train_loss": train_loss, "val_loss": None}
        stop = config.stop_below > 0 and train_loss < config.stop_below
        if val_clips and step % config.eval_every == 0:
            val = evaluate_loss(model, val_clips)
            record["val_loss"] = val
            if result.best_val_loss is None or val < result.best_val_loss:
                result.best_val_loss, result.best_step = val, step
                best_state = model.state_dict()
                bad_evals = 0
            else:
                bad_evals += 1
                if bad_evals >= config.patience:
                    result.stopped_early = True
                    stop = True
        result.trace.append(record)
        if log is not None:
            log.write(json.dumps(record) + "\n")
        result.final_train_loss = train_loss
        if stop:
            break
    result.steps = step
    if best_state is not None:
        model.load_state_dict(best_state)
    return result
