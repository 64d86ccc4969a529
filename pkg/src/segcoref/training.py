"""Optimization loop: two learning rates, linear decay, one document per step.

Encoder parameters (transformer + interpolation gate) and task parameters
(scorers, feature embeddings, refinement gate) form separate groups with
their own base learning rates; both decay linearly to zero over the run.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass

import torch

from .corpus.types import Document
from .encoder import EVAL, TRAIN
from .errors import ConfigError, TrainingDivergedError
from .model import SpanRankingModel
from .segmentation import segment_document, truncate_document

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    lr_encoder: float = 1e-5
    lr_task: float = 2e-4
    dropout: float = 0.3
    max_training_segments: int = 11
    seed: int = 0
    grad_clip_norm: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-6
    weight_decay_encoder: float = 0.01
    resample_truncation: bool = True  # fresh window each epoch vs fixed per document

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lr_encoder < 0 or self.lr_task < 0:
            raise ConfigError("learning rates must be non-negative")
        if self.max_training_segments < 1:
            raise ConfigError("max_training_segments must be >= 1")


def lr_schedule(step: int, total_steps: int, base_lr: float) -> float:
    """Linear decay to zero: base_lr * (1 - step / total_steps)."""
    if not 0 <= step <= total_steps:
        raise ConfigError(f"step {step} outside [0, {total_steps}]")
    return base_lr * (1.0 - step / total_steps)


def set_dropout_rate(model: torch.nn.Module, rate: float) -> None:
    for module in model.modules():
        if isinstance(module, torch.nn.Dropout):
            module.p = rate


def build_optimizer(model: SpanRankingModel, config: TrainConfig):
    """Adam with decoupled weight decay over the two parameter groups.
    Returns (optimizer, base learning rates in group order)."""
    groups = model.parameter_groups()
    optimizer = torch.optim.AdamW(
        [
            {"params": [p for _, p in groups["encoder"]], "lr": config.lr_encoder,
             "weight_decay": config.weight_decay_encoder},
            {"params": [p for _, p in groups["task"]], "lr": config.lr_task,
             "weight_decay": 0.0},
        ],
        betas=(config.adam_beta1, config.adam_beta2),
        eps=config.adam_eps,
    )
    return optimizer, (config.lr_encoder, config.lr_task)


def train(documents: list[Document], model: SpanRankingModel, config: TrainConfig,
          log_stream=None) -> list[float]:
    """Train in place; returns the per-step loss history.

    Deterministic given the seed: document order, truncation windows, and
    dropout all draw from streams seeded here. The optional log_stream gets
    one tab-separated line per step: step, epoch, doc_key, loss, lr_encoder,
    lr_task.
    """
    if not documents:
        raise ConfigError("need at least one training document")
    torch.manual_seed(config.seed)
    rng = random.Random(config.seed)
    set_dropout_rate(model, config.dropout)

    optimizer, base_lrs = build_optimizer(model, config)
    total_steps = config.epochs * len(documents)

    fixed_views: dict[str, Document] = {}
    history: list[float] = []
    step = 0
    for epoch in range(config.epochs):
        order = list(range(len(documents)))
        rng.shuffle(order)
        for doc_index in order:
            doc = documents[doc_index]
            if config.resample_truncation:
                segments = segment_document(doc, model.segmentation_config)
                view = truncate_document(doc, segments, config.max_training_segments, rng)
            else:
                if doc.doc_key not in fixed_views:
                    segments = segment_document(doc, model.segmentation_config)
                    fixed_views[doc.doc_key] = truncate_document(
                        doc, segments, config.max_training_segments, rng)
                view = fixed_views[doc.doc_key]

            loss, _ = model.loss(view, TRAIN)
            loss_value = float(loss.detach())
            if not math.isfinite(loss_value):
                raise TrainingDivergedError(step, loss_value)

            optimizer.zero_grad()
            loss.backward()
            if config.grad_clip_norm:
                torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip_norm)
            lrs = [lr_schedule(step, total_steps, base) for base in base_lrs]
            for group, lr in zip(optimizer.param_groups, lrs):
                group["lr"] = lr
            optimizer.step()

            history.append(loss_value)
            if log_stream is not None:
                log_stream.write(
                    f"{step}\t{epoch}\t{view.doc_key}\t{loss_value:.10g}\t{lrs[0]:.10g}\t{lrs[1]:.10g}\n"
                )
            step += 1
    return history


@dataclass(frozen=True)
class GroupGradientCheck:
    group: str
    max_relative_error: float
    worst_parameter: str
    passed: bool


@dataclass(frozen=True)
class GradientCheckReport:
    groups: tuple[GroupGradientCheck, ...]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.groups)

    def __str__(self) -> str:
        lines = []
        for g in self.groups:
            status = "pass" if g.passed else "FAIL"
            lines.append(
                f"[{status}] {g.group}: max relative error {g.max_relative_error:.3e} "
                f"(worst: {g.worst_parameter}, tolerance {self.tolerance:g})"
            )
        return "\n".join(lines)


def gradient_check(model: SpanRankingModel, doc: Document, tolerance: float = 1e-4,
                   step_size: float = 3e-4, _corrupt_parameter: str | None = None) -> GradientCheckReport:
    """Analytic loss gradients vs central finite differences, per group.

    Relative error uses a max(|analytic|, |numeric|, 1e-12) denominator.
    Dropout is disabled; requires the 64-bit configuration. The default step
    sits in the window where float64 cancellation noise (small steps) and
    ReLU kink crossings (large steps) both stay below a 1e-4 tolerance.
    """
    if model.encoder_config.dtype != "float64":
        raise ConfigError("gradient_check requires the float64 configuration")
    if doc.num_pieces > 30:
        raise ConfigError("gradient_check expects a document of at most 30 word pieces")

    # the sweep is thousands of tiny forwards; thread fan-out only adds overhead
    num_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        return _gradient_check(model, doc, tolerance, step_size, _corrupt_parameter)
    finally:
        torch.set_num_threads(num_threads)


def _gradient_check(model: SpanRankingModel, doc: Document, tolerance: float,
                    step_size: float, _corrupt_parameter: str | None) -> GradientCheckReport:
    model.zero_grad(set_to_none=True)
    loss, _ = model.loss(doc, mode=EVAL)
    loss.backward()
    analytic = {
        name: (param.grad.detach().clone() if param.grad is not None else torch.zeros_like(param))
        for name, param in model.named_parameters()
    }
    if _corrupt_parameter is not None:
        analytic[_corrupt_parameter] = analytic[_corrupt_parameter] + 1.0

    def loss_at() -> float:
        with torch.no_grad():
            value, _ = model.loss(doc, mode=EVAL)
        return float(value)

    results = []
    for group_name, params in model.parameter_groups().items():
        worst_err, worst_name = 0.0, "-"
        for name, param in params:
            grad = analytic[name]
            flat = param.data.view(-1)
            for i in range(flat.numel()):
                original = float(flat[i])
                flat[i] = original + step_size
                up = loss_at()
                flat[i] = original - step_size
                down = loss_at()
                flat[i] = original
                numeric = (up - down) / (2.0 * step_size)
                a = float(grad.view(-1)[i])
                err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
                if err > worst_err:
                    worst_err, worst_name = err, f"{name}[{i}]"
        results.append(GroupGradientCheck(
            group=group_name,
            max_relative_error=worst_err,
            worst_parameter=worst_name,
            passed=worst_err < tolerance,
        ))
    return GradientCheckReport(tuple(results), tolerance)
