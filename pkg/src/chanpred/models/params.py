"""Flat parameter storage with named block views, and the SGD update.

A ``ParameterVector`` owns one contiguous float64 array; each named block
(gate matrix, bias, projection, ...) is a reshaped view into it, so the
flat form used by the optimizers and the regularizers always aliases the
block form used by the forward passes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError, ShapeMismatchError

_MAGIC = b"CPKT"


class ParameterVector:
    """Named float64 parameter blocks over a single flat buffer."""

    def __init__(self, spec, data=None):
        """
        Args:
            spec: ordered mapping or list of (name, shape) pairs.
            data: optional flat array to adopt (copied when not float64
                or not the exact size).
        """
        items = list(spec.items()) if hasattr(spec, "items") else list(spec)
        self._spec = [(name, tuple(shape)) for name, shape in items]
        total = sum(int(np.prod(shape)) for _, shape in self._spec)
        if data is None:
            self.flat = np.zeros(total, dtype=np.float64)
        else:
            data = np.asarray(data, dtype=np.float64).ravel()
            if data.size != total:
                raise ShapeMismatchError((total,), (data.size,))
            self.flat = data.copy()
        self._views = {}
        offset = 0
        for name, shape in self._spec:
            size = int(np.prod(shape))
            self._views[name] = self.flat[offset:offset + size].reshape(shape)
            offset += size

    def __getitem__(self, name) -> np.ndarray:
        return self._views[name]

    def __contains__(self, name) -> bool:
        return name in self._views

    @property
    def size(self) -> int:
        return self.flat.size

    @property
    def spec(self):
        return list(self._spec)

    def block_names(self):
        return [name for name, _ in self._spec]

    def copy(self) -> "ParameterVector":
        return ParameterVector(self._spec, self.flat)

    def zeros_like(self) -> "ParameterVector":
        return ParameterVector(self._spec)


@dataclass
class OptimConfig:
    """Plain SGD settings."""

    learning_rate: float = 0.05
    batch_size: int = 32
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


def clip_gradient(grad, clip_norm):
    """Rescale ``grad`` so its 2-norm is at most ``clip_norm`` (0 disables)."""
    if clip_norm and clip_norm > 0:
        norm = float(np.linalg.norm(grad))
        if norm > clip_norm:
            return grad * (clip_norm / norm)
    return grad


def sgd_step(theta: ParameterVector, grad, optim: OptimConfig) -> ParameterVector:
    """In-place update theta <- theta - lr * clip(grad); returns theta."""
    grad = np.asarray(grad, dtype=np.float64).ravel()
    if grad.size != theta.size:
        raise ShapeMismatchError((theta.size,), (grad.size,))
    grad = clip_gradient(grad, optim.clip_norm)
    theta.flat -= optim.learning_rate * grad
    return theta


def save_checkpoint(path, theta: ParameterVector, config=None):
    """Write a checkpoint: JSON block manifest + raw little-endian float64.

    Byte-stable: identical parameters and manifest produce identical files.
    """
    manifest = {
        "blocks": [{"name": n, "shape": list(s)} for n, s in theta.spec],
        "config": dict(config) if config else {},
    }
    blob = json.dumps(manifest, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(theta.flat.astype("<f8", copy=False).tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (ParameterVector, config dict)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such checkpoint: {path}")
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise DataError(f"{path}: not a checkpoint file")
        (blob_len,) = struct.unpack("<I", fh.read(4))
        manifest = json.loads(fh.read(blob_len).decode())
        payload = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
    spec = [(b["name"], tuple(b["shape"])) for b in manifest["blocks"]]
    theta = ParameterVector(spec, payload)
    return theta, manifest.get("config", {})
