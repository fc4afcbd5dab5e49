"""Memory-free distillation from a frozen pre-handover teacher.

After each task the student weights are cloned into an immutable teacher;
on later tasks the training loss mixes the task NMSE with the normalized
squared gap between teacher and student predictions on the same inputs.
Two mixing conventions ship: a convex combination (default) and an
additive form where the distillation term has a free weight.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .models import PredictorConfig, make_backbone
from .models.params import ParameterVector

__all__ = ["TeacherSnapshot", "advance_teacher", "distill_loss", "lwf_total"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TeacherSnapshot:
    """Frozen copy of the student at a task boundary."""

    theta_old: ParameterVector
    config: PredictorConfig


def advance_teacher(theta: ParameterVector, config: PredictorConfig) -> TeacherSnapshot:
    """Clone the current student into a new frozen teacher."""
    return TeacherSnapshot(theta_old=theta.copy(), config=config)


def distill_loss(theta: ParameterVector, teacher: TeacherSnapshot, features,
                 config: PredictorConfig, want_grad=True):
    """Mean normalized gap between student and teacher predictions.

    For each input window the teacher output is the regression target and
    the normalizer: ||y_old - y||^2 / ||y_old||^2, averaged over the
    batch.  Ground truth never enters.  Windows where the teacher output
    has zero norm are skipped and counted.

    Args:
        theta: student parameters.
        teacher: frozen snapshot (must share the student architecture).
        features: real input features (B, T, d_in).
        config: student architecture.
        want_grad: also backprop through the student.

    Returns:
        (loss, grad_or_None, n_skipped)
    """
    if teacher.config != config:
        raise ConfigError("teacher and student architectures differ")
    model = make_backbone(config)
    y_old, _ = model.forward(teacher.theta_old, features)
    y, cache = model.forward(theta, features, want_cache=want_grad)
    denom = np.sum(y_old * y_old, axis=1)
    keep = denom > 0.0
    n_skipped = int(np.sum(~keep))
    if n_skipped:
        log.warning("distillation skipped %d zero-norm teacher outputs", n_skipped)
    if not np.any(keep):
        return 0.0, (np.zeros(theta.size) if want_grad else None), n_skipped
    err = y - y_old
    per_sample = np.where(keep, np.sum(err * err, axis=1) / np.where(keep, denom, 1.0), 0.0)
    kept = int(np.sum(keep))
    loss = float(np.sum(per_sample) / kept)
    if not want_grad:
        return loss, None, n_skipped
    dy = np.where(keep[:, None], (2.0 / kept) * err / np.where(keep, denom, 1.0)[:, None], 0.0)
    grad = model.backward(theta, cache, dy)
    return loss, grad, n_skipped


def lwf_total(task_loss, task_grad, distill, distill_grad, weight, variant="convex"):
    """Combine task and distillation terms.

    convex:   weight * task + (1 - weight) * distill   (weight in [0, 1])
    additive: task + weight * distill                  (weight >= 0)

    A convex weight of exactly 1 (or additive weight 0) returns the task
    term untouched, bit for bit.
    """
    if variant == "convex":
        if not 0.0 <= weight <= 1.0:
            raise ConfigError("convex mixing weight must lie in [0, 1]")
        if weight == 1.0:
            return task_loss, task_grad
        return (weight * task_loss + (1.0 - weight) * distill,
                weight * task_grad + (1.0 - weight) * distill_grad)
    if variant == "additive":
        if weight < 0.0:
            raise ConfigError("additive distillation weight must be >= 0")
        if weight == 0.0:
            return task_loss, task_grad
        return task_loss + weight * distill, task_grad + weight * distill_grad
    raise ConfigError(f"unknown lwf variant '{variant}'")
