"""Shared predictor configuration, feature packing, and the NMSE loss head.

Every backbone maps a real feature sequence (B, T, d_in) to a real output
(B, d_in), where d_in = 2 * n_rb * n_tx * n_rx is the flattened spatial
slice with real parts first and imaginary parts second.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from ..errors import ConfigError, DegenerateSampleError, DivergenceError, ShapeMismatchError


@dataclass(frozen=True)
class PredictorConfig:
    backbone: str = "lstm"        # lstm | gru | transformer
    d_in: int = 96
    seq_len: int = 32
    n_layers: int = 3
    d_hid: int = 32
    d_model: int = 128
    n_heads: int = 4
    d_ff: int = 0                 # 0 means 4 * d_model

    def __post_init__(self):
        if self.backbone not in ("lstm", "gru", "transformer"):
            raise ConfigError(f"unknown backbone '{self.backbone}'")
        if self.d_in < 1 or self.seq_len < 1:
            raise ConfigError("d_in and seq_len must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise ConfigError("d_model must be divisible by n_heads")

    @property
    def ff_width(self) -> int:
        return self.d_ff if self.d_ff > 0 else 4 * self.d_model

    @classmethod
    def for_channel(cls, n_rb, n_tx, n_rx, backbone="lstm", seq_len=32, **kw):
        return cls(backbone=backbone, d_in=2 * n_rb * n_tx * n_rx,
                   seq_len=seq_len, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "PredictorConfig":
        return cls(**d)


def pack_windows(windows: np.ndarray) -> np.ndarray:
    """Complex windows (B, T, rb, tx, rx) -> real features (B, T, d_in)."""
    w = np.asarray(windows)
    b, t = w.shape[:2]
    flat = w.reshape(b, t, -1)
    return np.concatenate([flat.real, flat.imag], axis=-1).astype(np.float64)


def pack_targets(targets: np.ndarray) -> np.ndarray:
    """Complex targets (B, rb, tx, rx) -> real vectors (B, d_in)."""
    t = np.asarray(targets)
    flat = t.reshape(t.shape[0], -1)
    return np.concatenate([flat.real, flat.imag], axis=-1).astype(np.float64)


def unpack_outputs(y: np.ndarray, spatial_shape) -> np.ndarray:
    """Real outputs (B, d_in) -> complex channels (B, *spatial_shape)."""
    half = y.shape[-1] // 2
    cplx = y[..., :half] + 1j * y[..., half:]
    return cplx.reshape(y.shape[0], *spatial_shape)


def nmse_head(y: np.ndarray, targets: np.ndarray):
    """Batch-mean NMSE plus its gradient with respect to the outputs.

    Returns (loss, dy, per_sample) where per_sample holds the individual
    ratios (used to annotate replay experiences).
    """
    if y.shape != targets.shape:
        raise ShapeMismatchError(targets.shape, y.shape)
    batch = y.shape[0]
    err = y - targets
    denom = np.sum(targets * targets, axis=1)
    if np.any(denom <= 0.0):
        raise DegenerateSampleError("zero-energy target in batch")
    per_sample = np.sum(err * err, axis=1) / denom
    loss = float(np.mean(per_sample))
    if not np.isfinite(loss):
        raise DivergenceError("NMSE loss is not finite")
    dy = (2.0 / batch) * err / denom[:, None]
    return loss, dy, per_sample
