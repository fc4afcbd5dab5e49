"""Parameter-anchoring regularizers: diagonal-Fisher weight consolidation
and online synaptic-importance accumulation.

Both methods produce a quadratic penalty around reference parameters and
its closed-form gradient, which the trainer adds to whatever base
objective is active.  The Fisher variant snapshots (theta*, F) once per
finished task into a growing bank; the synaptic variant accumulates
per-step squared gradients online and consolidates them into importances
at task boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonFiniteValueError, ShapeMismatchError

__all__ = [
    "FisherSnapshot",
    "EwcState",
    "SiState",
    "compute_fisher",
    "ewc_penalty",
    "end_task_ewc",
    "si_accumulate",
    "si_consolidate",
    "si_penalty",
]


@dataclass
class FisherSnapshot:
    """Frozen post-task optimum and its diagonal Fisher estimate."""

    theta_star: np.ndarray
    fisher: np.ndarray
    task_id: str = ""

    def __post_init__(self):
        self.theta_star = np.asarray(self.theta_star, dtype=float).copy()
        self.fisher = np.asarray(self.fisher, dtype=float).copy()
        if self.theta_star.shape != self.fisher.shape:
            raise ShapeMismatchError(self.theta_star.shape, self.fisher.shape)
        if np.any(self.fisher < 0):
            raise ConfigError("Fisher entries must be nonnegative")


@dataclass
class EwcState:
    """Bank of per-task snapshots plus the stability coefficient."""

    alpha: float = 0.4
    bank: list = field(default_factory=list)


@dataclass
class SiState:
    """Consolidated importances, running accumulator, and reference point."""

    omega: np.ndarray
    omega_tilde: np.ndarray
    theta_ref: np.ndarray
    beta: float = 0.6
    xi: float = 1e-3

    @classmethod
    def fresh(cls, theta, beta=0.6, xi=1e-3) -> "SiState":
        theta = np.asarray(theta, dtype=float)
        return cls(omega=np.zeros_like(theta), omega_tilde=np.zeros_like(theta),
                   theta_ref=theta.copy(), beta=beta, xi=xi)


def compute_fisher(samples, theta, model, batch_size=1):
    """Diagonal Fisher estimate: mean of squared per-sample loss gradients.

    Args:
        samples: sequence of items accepted by ``model.loss_and_grad``.
        theta: parameters at which to evaluate (the post-task optimum).
        model: object exposing ``loss_and_grad(theta, batch) -> (loss, grad)``.
        batch_size: 1 evaluates the exact per-sample sum; larger values
            trade fidelity for speed by averaging gradients within
            mini-batches before squaring.

    Returns:
        Nonnegative vector with one entry per parameter.
    """
    n = len(samples)
    if n == 0:
        raise ConfigError("cannot estimate Fisher information from no data")
    fisher = None
    groups = [samples[i:i + batch_size] for i in range(0, n, batch_size)]
    for group in groups:
        _, grad = model.loss_and_grad(theta, group)
        grad = np.asarray(grad, dtype=float)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteValueError("non-finite gradient in Fisher sweep")
        sq = grad * grad * len(group)
        fisher = sq if fisher is None else fisher + sq
    return fisher / n


def ewc_penalty(theta, state: EwcState):
    """Quadratic pull toward every banked optimum, Fisher-weighted.

    Returns (penalty, gradient); an empty bank gives exactly (0, zeros),
    so first-task training is untouched.
    """
    theta = np.asarray(theta, dtype=float)
    grad = np.zeros_like(theta)
    if state.alpha == 0.0 or not state.bank:
        return 0.0, grad
    penalty = 0.0
    for snap in state.bank:
        if snap.theta_star.shape != theta.shape:
            raise ShapeMismatchError(theta.shape, snap.theta_star.shape)
        delta = theta - snap.theta_star
        penalty += 0.5 * state.alpha * float(np.sum(snap.fisher * delta * delta))
        grad += state.alpha * snap.fisher * delta
    return penalty, grad


def end_task_ewc(state: EwcState, theta, samples, model, task_id="", batch_size=1):
    """Snapshot (copy of theta, Fisher over the finished task's data)."""
    fisher = compute_fisher(samples, theta, model, batch_size=batch_size)
    state.bank.append(FisherSnapshot(theta_star=np.asarray(theta, dtype=float),
                                     fisher=fisher, task_id=task_id))
    return state


def si_accumulate(state: SiState, grad, eta):
    """Per-step accumulation: omega_tilde += grad^2 * learning rate."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape != state.omega_tilde.shape:
        raise ShapeMismatchError(state.omega_tilde.shape, grad.shape)
    state.omega_tilde += grad * grad * eta
    return state


def si_consolidate(state: SiState, theta):
    """Fold the accumulator into importances at a task boundary.

    omega += omega_tilde / (delta_theta^2 + xi): weights that were pulled
    hard but barely moved earn large importance.  The accumulator resets
    and the reference point advances to the current parameters, which
    anchors the next task's penalty at this task's end point.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != state.omega.shape:
        raise ShapeMismatchError(state.omega.shape, theta.shape)
    delta = theta - state.theta_ref
    state.omega += state.omega_tilde / (delta * delta + state.xi)
    state.omega_tilde = np.zeros_like(state.omega_tilde)
    state.theta_ref = theta.copy()
    return state


def si_penalty(theta, state: SiState):
    """(beta/2) sum omega_i (theta_i - ref_i)^2 and its gradient."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != state.omega.shape:
        raise ShapeMismatchError(state.omega.shape, theta.shape)
    if state.beta == 0.0:
        return 0.0, np.zeros_like(theta)
    delta = theta - state.theta_ref
    penalty = 0.5 * state.beta * float(np.sum(state.omega * delta * delta))
    return penalty, state.beta * state.omega * delta
