"""Sequence predictors mapping a channel history window to the next slot.

Three backbones share one contract: a real feature sequence (B, T, d_in)
in, a real vector (B, d_in) out, plus an exact reverse-mode gradient of
any loss expressed through a gradient on the outputs.  Use
:func:`make_backbone` for the low-level interface, or :func:`forward` /
:func:`loss_and_grad` to work directly with complex channel tensors.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ShapeMismatchError
from .attention import TransformerBackbone, positional_encoding
from .base import (PredictorConfig, nmse_head, pack_targets, pack_windows,
                   unpack_outputs)
from .gru import GruBackbone
from .lstm import LstmBackbone
from .params import (OptimConfig, ParameterVector, clip_gradient,
                     load_checkpoint, save_checkpoint, sgd_step)

__all__ = [
    "PredictorConfig", "ParameterVector", "OptimConfig",
    "make_backbone", "param_count", "forward", "loss_and_grad",
    "sgd_step", "clip_gradient", "positional_encoding",
    "pack_windows", "pack_targets", "unpack_outputs", "nmse_head",
    "save_checkpoint", "load_checkpoint",
]

_BACKBONES = {
    "lstm": LstmBackbone,
    "gru": GruBackbone,
    "transformer": TransformerBackbone,
}


def make_backbone(config: PredictorConfig):
    try:
        cls = _BACKBONES[config.backbone]
    except KeyError:
        raise ConfigError(f"unknown backbone '{config.backbone}'") from None
    return cls(config)


def param_count(config: PredictorConfig) -> int:
    """Exact trainable-parameter count, biases included.

    Note this is slightly above the usual 4 d_hid (d_in + d_hid) per-layer
    rule of thumb for the LSTM, which ignores the bias vector.
    """
    spec = make_backbone(config).param_spec()
    return int(sum(np.prod(shape) for _, shape in spec))


def forward(window, theta: ParameterVector, config: PredictorConfig):
    """Predict the next-slot channel from a complex history window.

    Accepts one window (T, rb, tx, rx) or a batch (B, T, ...); returns
    complex channels of the corresponding spatial shape.
    """
    window = np.asarray(window)
    single = window.ndim == 4
    if single:
        window = window[None]
    if window.shape[1] != config.seq_len:
        raise ShapeMismatchError((config.seq_len,), (window.shape[1],))
    feats = pack_windows(window)
    if feats.shape[-1] != config.d_in:
        raise ShapeMismatchError((config.d_in,), (feats.shape[-1],))
    y, _ = make_backbone(config).forward(theta, feats)
    out = unpack_outputs(y, window.shape[2:])
    return out[0] if single else out


def loss_and_grad(windows, targets, theta: ParameterVector, config: PredictorConfig):
    """Batch-mean NMSE and its exact gradient for complex-channel batches."""
    feats = pack_windows(np.asarray(windows))
    tvec = pack_targets(np.asarray(targets))
    model = make_backbone(config)
    y, cache = model.forward(theta, feats, want_cache=True)
    loss, dy, _ = nmse_head(y, tvec)
    grad = model.backward(theta, cache, dy)
    return loss, grad
