"""Experience replay: fixed-capacity buffer, reservoir and loss-aware
eviction, mini-batch composition, and the mixed rehearsal objective.

The buffer treats training as a stream: every offered item bumps the
stream counter; once full, an item is admitted with probability
capacity / counter (classical reservoir), and the evicted victim is
either uniform or drawn inversely to stored loss so hard samples persist.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .channel import read_ctns, write_ctns

__all__ = [
    "Experience",
    "ReplayBuffer",
    "MixConfig",
    "lars_victim",
    "compose_batch",
    "mixed_loss",
    "save_buffer",
    "load_buffer",
]


@dataclass
class Experience:
    """One stored observation: input window, target, last known loss."""

    window: np.ndarray
    target: np.ndarray
    loss: float

    def __post_init__(self):
        if not (self.loss >= 0.0 and np.isfinite(self.loss)):
            raise ConfigError("stored loss must be finite and nonnegative")


def lars_victim(losses, epsilon, rng):
    """Pick an eviction victim with probability proportional to 1/(loss+eps).

    Low-loss (already mastered) items are evicted preferentially; hard
    items survive.  Equal losses give a uniform victim distribution.
    """
    losses = np.asarray(losses, dtype=float)
    if losses.size == 0:
        raise ConfigError("cannot pick a victim from an empty list")
    if np.any(losses < 0) or epsilon <= 0:
        raise ConfigError("losses must be >= 0 and epsilon > 0")
    weights = 1.0 / (losses + epsilon)
    cumulative = np.cumsum(weights)
    draw = rng.random() * cumulative[-1]
    return int(np.searchsorted(cumulative, draw, side="right"))


class ReplayBuffer:
    """Fixed-capacity reservoir of experiences, retained across tasks."""

    def __init__(self, capacity, mode="uniform", epsilon=1e-8):
        if capacity < 0:
            raise ConfigError("capacity must be >= 0")
        if mode not in ("uniform", "lars"):
            raise ConfigError(f"unknown buffer mode '{mode}'")
        if epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        self.capacity = int(capacity)
        self.mode = mode
        self.epsilon = float(epsilon)
        self.items: list[Experience] = []
        self.stream_counter = 0
        # Cached loss vector so LARS draws stay O(n) without attribute chasing.
        self._losses = np.zeros(0, dtype=float)

    def __len__(self):
        return len(self.items)

    @property
    def losses(self):
        return self._losses[:len(self.items)].copy()

    def insert(self, experience: Experience, rng):
        """Offer one experience to the reservoir."""
        self.insert_many([experience], rng)

    def insert_many(self, experiences, rng):
        """Offer a batch of experiences in stream order.

        One admission decision is made per offered item at its own stream
        position (the draws are batched for speed); each accepted item
        then evicts a victim from the buffer state it encounters.
        """
        experiences = list(experiences)
        idx = 0
        # Fill phase: everything is stored until the buffer is full.
        while idx < len(experiences) and len(self.items) < self.capacity:
            self.stream_counter += 1
            self.items.append(experiences[idx])
            idx += 1
        remaining = len(experiences) - idx
        if remaining == 0:
            self._rebuild_losses()
            return
        if self.capacity == 0:
            # Still consume admission draws so the stream semantics (one
            # decision per offered item) are preserved.
            rng.random(remaining)
            self.stream_counter += remaining
            return
        t = self.stream_counter + 1 + np.arange(remaining)
        accept = rng.random(remaining) < (self.capacity / t)
        self.stream_counter += remaining
        self._rebuild_losses()
        for off in np.nonzero(accept)[0]:
            exp = experiences[idx + int(off)]
            if self.mode == "lars":
                victim = lars_victim(self._losses[:len(self.items)], self.epsilon, rng)
            else:
                victim = int(rng.integers(0, len(self.items)))
            self.items[victim] = exp
            self._losses[victim] = exp.loss

    def _rebuild_losses(self):
        self._losses = np.array([e.loss for e in self.items], dtype=float)

    def refresh_loss(self, index, new_loss):
        """Replace a stored loss with the most recent rehearsal NMSE."""
        if not 0 <= index < len(self.items):
            raise IndexError(f"buffer index {index} out of range")
        if not (new_loss >= 0.0 and np.isfinite(new_loss)):
            raise ConfigError("stored loss must be finite and nonnegative")
        self.items[index].loss = float(new_loss)
        if index < self._losses.size:
            self._losses[index] = float(new_loss)

    def sample(self, n, rng):
        """Uniform sample without replacement, capped at the buffer size.

        Returns (indices, experiences); empty when the buffer is empty.
        """
        count = min(int(n), len(self.items))
        if count <= 0:
            return np.zeros(0, dtype=int), []
        indices = rng.choice(len(self.items), size=count, replace=False)
        return indices, [self.items[int(i)] for i in indices]


@dataclass
class MixConfig:
    """Weighting between the live-task loss and the rehearsal loss."""

    mix_lambda: float = 0.5
    current_batch: int = 32
    replay_batch: int = 32

    def __post_init__(self):
        if not 0.0 <= self.mix_lambda <= 1.0:
            raise ConfigError("lambda must lie in [0, 1]")


def compose_batch(current_batch, buffer: ReplayBuffer | None, replay_size, rng):
    """Pair the live mini-batch with a uniformly sampled rehearsal batch.

    An absent or empty buffer yields an empty rehearsal batch (the mixed
    objective then degenerates to the current term).
    """
    if buffer is None or len(buffer) == 0:
        return current_batch, np.zeros(0, dtype=int), []
    indices, picked = buffer.sample(replay_size, rng)
    return current_batch, indices, picked


def mixed_loss(loss_fn, theta, current_batch, replay_batch, mix_lambda):
    """lambda * L(current) + (1 - lambda) * L(replay).

    ``loss_fn(theta, batch)`` evaluates the batch-mean NMSE.  With an
    empty rehearsal batch the weight collapses onto the current term
    exactly (no residual (1 - lambda) * 0 arithmetic), so a rehearsal-free
    step is bit-identical to plain training when lambda = 1.
    """
    if not 0.0 <= mix_lambda <= 1.0:
        raise ConfigError("lambda must lie in [0, 1]")
    current = loss_fn(theta, current_batch)
    if replay_batch is None or len(replay_batch) == 0:
        return current
    return mix_lambda * current + (1.0 - mix_lambda) * loss_fn(theta, replay_batch)


# --- snapshot / resume -------------------------------------------------------


def save_buffer(buffer: ReplayBuffer, prefix):
    """Persist buffer contents for pause/resume of a continual run."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    if buffer.items:
        windows = np.stack([e.window for e in buffer.items]).astype(np.complex128)
        targets = np.stack([e.target for e in buffer.items]).astype(np.complex128)
    else:
        windows = np.zeros((0,), dtype=np.complex128)
        targets = np.zeros((0,), dtype=np.complex128)
    write_ctns(prefix.parent / (prefix.name + "_x.ctns"), windows)
    write_ctns(prefix.parent / (prefix.name + "_h.ctns"), targets)
    manifest = {
        "capacity": buffer.capacity,
        "mode": buffer.mode,
        "epsilon": buffer.epsilon,
        "stream_counter": buffer.stream_counter,
        "losses": [float(e.loss) for e in buffer.items],
    }
    with open(prefix.parent / (prefix.name + ".json"), "w") as fh:
        json.dump(manifest, fh, indent=1)


def load_buffer(prefix) -> ReplayBuffer:
    prefix = Path(prefix)
    meta_path = prefix.parent / (prefix.name + ".json")
    if not meta_path.exists():
        raise DataError(f"missing buffer manifest: {meta_path}")
    with open(meta_path) as fh:
        manifest = json.load(fh)
    buffer = ReplayBuffer(manifest["capacity"], manifest["mode"], manifest["epsilon"])
    windows = read_ctns(prefix.parent / (prefix.name + "_x.ctns"))
    targets = read_ctns(prefix.parent / (prefix.name + "_h.ctns"))
    losses = manifest["losses"]
    if len(losses) != (windows.shape[0] if windows.ndim else 0):
        raise DataError(f"{prefix}: manifest/payload length mismatch")
    for i, loss in enumerate(losses):
        buffer.items.append(Experience(window=windows[i], target=targets[i], loss=loss))
    buffer.stream_counter = manifest["stream_counter"]
    buffer._rebuild_losses()
    return buffer
