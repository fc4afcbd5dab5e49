"""One-encoder / one-decoder attention predictor with exact gradients.

The input sequence is projected to the model width, tagged with a
sinusoidal multi-period positional code, and passed through a single
post-norm encoder layer (multi-head self-attention + GELU feedforward).
A single learned start token queries the encoder memory through one
decoder layer (self-attention over the lone token, cross-attention,
feedforward); its output is mapped linearly back to the channel vector.

Every sub-block caches what its hand-written backward needs; no autodiff.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from .base import PredictorConfig
from .params import ParameterVector

_LN_EPS = 1e-6
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def positional_encoding(t, d_model, seq_len=32):
    """Sinusoidal code for one step over a geometric ladder of periods.

    Period index k (of d_model // 2 pairs) oscillates with period
    2 * (2 seq_len)^(k / (K-1)) steps, spanning 2 .. 4 seq_len, so the
    slowest component stays injective over any window while the fastest
    resolves adjacent steps.  Components are ordered (sin, cos) per pair;
    step 0 therefore has every cosine component equal to 1.
    """
    table = _pe_table(max(int(t) + 1, 1), d_model, seq_len)
    return table[int(t)]


def _pe_table(n_steps, d_model, seq_len):
    pairs = d_model // 2
    k = np.arange(pairs)
    exponent = k / (pairs - 1) if pairs > 1 else np.full(1, 0.5)
    periods = 2.0 * (2.0 * seq_len) ** exponent
    t = np.arange(n_steps)[:, None]
    ang = 2.0 * math.pi * t / periods[None, :]
    table = np.zeros((n_steps, d_model))
    table[:, 0::2] = np.sin(ang)
    table[:, 1::2] = np.cos(ang)
    return table


def _gelu_forward(x):
    phi = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    return x * phi, (x, phi)


def _gelu_backward(dy, cache):
    x, phi = cache
    return dy * (phi + x * np.exp(-0.5 * x * x) * _INV_SQRT_2PI)


def _ln_forward(x, gamma, beta):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt(np.mean(xc * xc, axis=-1, keepdims=True) + _LN_EPS)
    xhat = xc * inv
    return gamma * xhat + beta, (xhat, inv)


def _ln_backward(dy, gamma, cache):
    xhat, inv = cache
    axes = tuple(range(dy.ndim - 1))
    dgamma = np.sum(dy * xhat, axis=axes)
    dbeta = np.sum(dy, axis=axes)
    dxhat = dy * gamma
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    return dx, dgamma, dbeta


def _split_heads(x, n_heads):
    b, t, dm = x.shape
    return x.reshape(b, t, n_heads, dm // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def _mha_forward(q_in, kv_in, w, n_heads):
    """w = (wq, bq, wk, bk, wv, bv, wo, bo)."""
    wq, bq, wk, bk, wv, bv, wo, bo = w
    q = _split_heads(q_in @ wq + bq, n_heads)
    k = _split_heads(kv_in @ wk + bk, n_heads)
    v = _split_heads(kv_in @ wv + bv, n_heads)
    scale = 1.0 / math.sqrt(q.shape[-1])
    scores = (q @ k.transpose(0, 1, 3, 2)) * scale
    scores = scores - scores.max(axis=-1, keepdims=True)
    expo = np.exp(scores)
    attn = expo / expo.sum(axis=-1, keepdims=True)
    merged = _merge_heads(attn @ v)
    out = merged @ wo + bo
    return out, (q_in, kv_in, q, k, v, attn, merged, scale)


def _mha_backward(d_out, cache, w, n_heads):
    q_in, kv_in, q, k, v, attn, merged, scale = cache
    wq, _, wk, _, wv, _, wo, _ = w
    dm = q_in.shape[-1]
    d_wo = merged.reshape(-1, dm).T @ d_out.reshape(-1, dm)
    d_bo = d_out.sum(axis=(0, 1))
    d_merged = d_out @ wo.T
    d_o = _split_heads(d_merged, n_heads)
    d_attn = d_o @ v.transpose(0, 1, 3, 2)
    d_v = attn.transpose(0, 1, 3, 2) @ d_o
    d_scores = attn * (d_attn - np.sum(d_attn * attn, axis=-1, keepdims=True))
    d_scores *= scale
    d_q = d_scores @ k
    d_k = d_scores.transpose(0, 1, 3, 2) @ q
    d_qm = _merge_heads(d_q)
    d_km = _merge_heads(d_k)
    d_vm = _merge_heads(d_v)
    d_wq = q_in.reshape(-1, dm).T @ d_qm.reshape(-1, dm)
    d_bq = d_qm.sum(axis=(0, 1))
    d_wk = kv_in.reshape(-1, dm).T @ d_km.reshape(-1, dm)
    d_bk = d_km.sum(axis=(0, 1))
    d_wv = kv_in.reshape(-1, dm).T @ d_vm.reshape(-1, dm)
    d_bv = d_vm.sum(axis=(0, 1))
    d_qin = d_qm @ wq.T
    d_kvin = d_km @ wk.T + d_vm @ wv.T
    grads = (d_wq, d_bq, d_wk, d_bk, d_wv, d_bv, d_wo, d_bo)
    return d_qin, d_kvin, grads


def _ffn_forward(x, w1, b1, w2, b2):
    pre = x @ w1 + b1
    act, gc = _gelu_forward(pre)
    return act @ w2 + b2, (x, act, gc)


def _ffn_backward(dy, cache, w1, w2):
    x, act, gc = cache
    d_ff = act.shape[-1]
    dm = x.shape[-1]
    d_w2 = act.reshape(-1, d_ff).T @ dy.reshape(-1, dm)
    d_b2 = dy.sum(axis=(0, 1))
    d_act = dy @ w2.T
    d_pre = _gelu_backward(d_act, gc)
    d_w1 = x.reshape(-1, dm).T @ d_pre.reshape(-1, d_ff)
    d_b1 = d_pre.sum(axis=(0, 1))
    dx = d_pre @ w1.T
    return dx, (d_w1, d_b1, d_w2, d_b2)


_ATTN_NAMES = ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")


class TransformerBackbone:
    def __init__(self, config: PredictorConfig):
        self.config = config

    def _attn_spec(self, prefix):
        dm = self.config.d_model
        shapes = [(dm, dm), (dm,)] * 4
        return [(f"{prefix}_{n}", shp) for n, shp in zip(_ATTN_NAMES, shapes)]

    def param_spec(self):
        cfg = self.config
        dm, dff = cfg.d_model, cfg.ff_width
        spec = [("embed_w", (cfg.d_in, dm)), ("embed_b", (dm,))]
        spec += self._attn_spec("enc")
        spec += [("enc_ln1_g", (dm,)), ("enc_ln1_b", (dm,)),
                 ("enc_w1", (dm, dff)), ("enc_b1", (dff,)),
                 ("enc_w2", (dff, dm)), ("enc_b2", (dm,)),
                 ("enc_ln2_g", (dm,)), ("enc_ln2_b", (dm,))]
        spec += self._attn_spec("dec_self")
        spec += [("dec_ln1_g", (dm,)), ("dec_ln1_b", (dm,))]
        spec += self._attn_spec("dec_cross")
        spec += [("dec_ln2_g", (dm,)), ("dec_ln2_b", (dm,)),
                 ("dec_w1", (dm, dff)), ("dec_b1", (dff,)),
                 ("dec_w2", (dff, dm)), ("dec_b2", (dm,)),
                 ("dec_ln3_g", (dm,)), ("dec_ln3_b", (dm,)),
                 ("start_token", (dm,)),
                 ("out_w", (dm, cfg.d_in)), ("out_b", (cfg.d_in,))]
        return spec

    def init(self, rng) -> ParameterVector:
        theta = ParameterVector(self.param_spec())
        for name, shape in theta.spec:
            block = theta[name]
            if name.endswith(("_g",)) and "ln" in name:
                block[:] = 1.0
            elif len(shape) == 2:
                bound = 1.0 / math.sqrt(shape[0])
                block[:] = rng.uniform(-bound, bound, shape)
            elif name == "start_token":
                bound = 1.0 / math.sqrt(shape[0])
                block[:] = rng.uniform(-bound, bound, shape)
        return theta

    def _attn_weights(self, theta, prefix):
        return tuple(theta[f"{prefix}_{n}"] for n in _ATTN_NAMES)

    def forward(self, theta: ParameterVector, x: np.ndarray, want_cache=False):
        cfg = self.config
        batch, steps, _ = x.shape
        heads = cfg.n_heads
        pe = _pe_table(steps, cfg.d_model, cfg.seq_len)
        enc_in = x @ theta["embed_w"] + theta["embed_b"] + pe[None, :, :]

        w_enc = self._attn_weights(theta, "enc")
        m, mc = _mha_forward(enc_in, enc_in, w_enc, heads)
        r1 = enc_in + m
        n1, ln1c = _ln_forward(r1, theta["enc_ln1_g"], theta["enc_ln1_b"])
        f, fc = _ffn_forward(n1, theta["enc_w1"], theta["enc_b1"],
                             theta["enc_w2"], theta["enc_b2"])
        r2 = n1 + f
        memory, ln2c = _ln_forward(r2, theta["enc_ln2_g"], theta["enc_ln2_b"])

        q0 = np.tile(theta["start_token"][None, None, :], (batch, 1, 1))
        w_self = self._attn_weights(theta, "dec_self")
        m1, m1c = _mha_forward(q0, q0, w_self, heads)
        s1 = q0 + m1
        n3, ln3c = _ln_forward(s1, theta["dec_ln1_g"], theta["dec_ln1_b"])
        w_cross = self._attn_weights(theta, "dec_cross")
        m2, m2c = _mha_forward(n3, memory, w_cross, heads)
        s2 = n3 + m2
        n4, ln4c = _ln_forward(s2, theta["dec_ln2_g"], theta["dec_ln2_b"])
        f2, f2c = _ffn_forward(n4, theta["dec_w1"], theta["dec_b1"],
                               theta["dec_w2"], theta["dec_b2"])
        s3 = n4 + f2
        n5, ln5c = _ln_forward(s3, theta["dec_ln3_g"], theta["dec_ln3_b"])
        y = n5[:, 0, :] @ theta["out_w"] + theta["out_b"]
        if not want_cache:
            return y, None
        cache = dict(x=x, enc_in=enc_in, mc=mc, ln1c=ln1c, n1=n1, fc=fc,
                     ln2c=ln2c, memory=memory, q0=q0, m1c=m1c, ln3c=ln3c,
                     n3=n3, m2c=m2c, ln4c=ln4c, n4=n4, f2c=f2c, ln5c=ln5c,
                     n5=n5)
        return y, cache

    def backward(self, theta: ParameterVector, cache, dy: np.ndarray) -> np.ndarray:
        cfg = self.config
        heads = cfg.n_heads
        grad = ParameterVector(self.param_spec())

        grad["out_w"][:] = cache["n5"][:, 0, :].T @ dy
        grad["out_b"][:] = dy.sum(axis=0)
        d_n5 = np.zeros_like(cache["n5"])
        d_n5[:, 0, :] = dy @ theta["out_w"].T

        d_s3, dg, db = _ln_backward(d_n5, theta["dec_ln3_g"], cache["ln5c"])
        grad["dec_ln3_g"][:] = dg
        grad["dec_ln3_b"][:] = db
        d_n4_ffn, ffn_grads = _ffn_backward(d_s3, cache["f2c"],
                                            theta["dec_w1"], theta["dec_w2"])
        for name, g in zip(("dec_w1", "dec_b1", "dec_w2", "dec_b2"), ffn_grads):
            grad[name][:] = g
        d_n4 = d_s3 + d_n4_ffn

        d_s2, dg, db = _ln_backward(d_n4, theta["dec_ln2_g"], cache["ln4c"])
        grad["dec_ln2_g"][:] = dg
        grad["dec_ln2_b"][:] = db
        w_cross = self._attn_weights(theta, "dec_cross")
        d_n3_attn, d_memory, cross_grads = _mha_backward(d_s2, cache["m2c"], w_cross, heads)
        for name, g in zip(_ATTN_NAMES, cross_grads):
            grad[f"dec_cross_{name}"][:] = g
        d_n3 = d_s2 + d_n3_attn

        d_s1, dg, db = _ln_backward(d_n3, theta["dec_ln1_g"], cache["ln3c"])
        grad["dec_ln1_g"][:] = dg
        grad["dec_ln1_b"][:] = db
        w_self = self._attn_weights(theta, "dec_self")
        d_q0_attn, d_q0_kv, self_grads = _mha_backward(d_s1, cache["m1c"], w_self, heads)
        for name, g in zip(_ATTN_NAMES, self_grads):
            grad[f"dec_self_{name}"][:] = g
        d_q0 = d_s1 + d_q0_attn + d_q0_kv
        grad["start_token"][:] = d_q0.sum(axis=(0, 1))

        d_memory2, dg, db = _ln_backward(d_memory, theta["enc_ln2_g"], cache["ln2c"])
        grad["enc_ln2_g"][:] = dg
        grad["enc_ln2_b"][:] = db
        d_n1_ffn, ffn_grads = _ffn_backward(d_memory2, cache["fc"],
                                            theta["enc_w1"], theta["enc_w2"])
        for name, g in zip(("enc_w1", "enc_b1", "enc_w2", "enc_b2"), ffn_grads):
            grad[name][:] = g
        d_n1 = d_memory2 + d_n1_ffn

        d_r1, dg, db = _ln_backward(d_n1, theta["enc_ln1_g"], cache["ln1c"])
        grad["enc_ln1_g"][:] = dg
        grad["enc_ln1_b"][:] = db
        w_enc = self._attn_weights(theta, "enc")
        d_enc_q, d_enc_kv, enc_grads = _mha_backward(d_r1, cache["mc"], w_enc, heads)
        for name, g in zip(_ATTN_NAMES, enc_grads):
            grad[f"enc_{name}"][:] = g
        d_enc_in = d_r1 + d_enc_q + d_enc_kv

        d_in = cfg.d_in
        dm = cfg.d_model
        grad["embed_w"][:] = cache["x"].reshape(-1, d_in).T @ d_enc_in.reshape(-1, dm)
        grad["embed_b"][:] = d_enc_in.sum(axis=(0, 1))
        return grad.flat
