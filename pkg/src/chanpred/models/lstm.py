"""Stacked LSTM with exact reverse-mode gradients (backprop through time).

Gate order in the fused matrices is [input, forget, cell, output]; the
forget-gate bias is initialized to 1 so early training keeps memory open.
The final hidden state of the top layer feeds a linear readout.

Input projections and weight-gradient contractions are hoisted out of the
time loop; only the recurrent matmul stays sequential.
"""

from __future__ import annotations

import numpy as np

from .base import PredictorConfig
from .params import ParameterVector


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class LstmBackbone:
    def __init__(self, config: PredictorConfig):
        self.config = config

    def param_spec(self):
        cfg = self.config
        spec = []
        d = cfg.d_in
        for layer in range(cfg.n_layers):
            spec.append((f"l{layer}_wx", (d, 4 * cfg.d_hid)))
            spec.append((f"l{layer}_wh", (cfg.d_hid, 4 * cfg.d_hid)))
            spec.append((f"l{layer}_b", (4 * cfg.d_hid,)))
            d = cfg.d_hid
        spec.append(("out_w", (cfg.d_hid, cfg.d_in)))
        spec.append(("out_b", (cfg.d_in,)))
        return spec

    def init(self, rng) -> ParameterVector:
        cfg = self.config
        theta = ParameterVector(self.param_spec())
        d = cfg.d_in
        for layer in range(cfg.n_layers):
            bound = 1.0 / np.sqrt(d)
            theta[f"l{layer}_wx"][:] = rng.uniform(-bound, bound, theta[f"l{layer}_wx"].shape)
            hb = 1.0 / np.sqrt(cfg.d_hid)
            theta[f"l{layer}_wh"][:] = rng.uniform(-hb, hb, theta[f"l{layer}_wh"].shape)
            theta[f"l{layer}_b"][cfg.d_hid:2 * cfg.d_hid] = 1.0
            d = cfg.d_hid
        ob = 1.0 / np.sqrt(cfg.d_hid)
        theta["out_w"][:] = rng.uniform(-ob, ob, theta["out_w"].shape)
        return theta

    def forward(self, theta: ParameterVector, x: np.ndarray, want_cache=False):
        cfg = self.config
        batch, steps, _ = x.shape
        hid = cfg.d_hid
        caches = []
        inp = x
        for layer in range(cfg.n_layers):
            wx, wh, b = theta[f"l{layer}_wx"], theta[f"l{layer}_wh"], theta[f"l{layer}_b"]
            ax = inp @ wx + b                       # (B, T, 4H)
            h = np.zeros((batch, hid))
            c = np.zeros((batch, hid))
            hs = np.empty((batch, steps, hid))
            if want_cache:
                st = {k: np.empty((batch, steps, hid))
                      for k in ("i", "f", "g", "o", "tc", "c_prev", "h_prev")}
            for t in range(steps):
                a = ax[:, t] + h @ wh
                gi = _sigmoid(a[:, :hid])
                gf = _sigmoid(a[:, hid:2 * hid])
                gg = np.tanh(a[:, 2 * hid:3 * hid])
                go = _sigmoid(a[:, 3 * hid:])
                if want_cache:
                    st["c_prev"][:, t] = c
                    st["h_prev"][:, t] = h
                c = gf * c + gi * gg
                tc = np.tanh(c)
                h = go * tc
                hs[:, t] = h
                if want_cache:
                    st["i"][:, t] = gi
                    st["f"][:, t] = gf
                    st["g"][:, t] = gg
                    st["o"][:, t] = go
                    st["tc"][:, t] = tc
            if want_cache:
                st["inp"] = inp
                caches.append(st)
            inp = hs
        h_last = inp[:, -1, :]
        y = h_last @ theta["out_w"] + theta["out_b"]
        return (y, {"layers": caches, "h_last": h_last}) if want_cache else (y, None)

    def backward(self, theta: ParameterVector, cache, dy: np.ndarray) -> np.ndarray:
        cfg = self.config
        hid = cfg.d_hid
        grad = ParameterVector(self.param_spec())
        grad["out_w"][:] = cache["h_last"].T @ dy
        grad["out_b"][:] = dy.sum(axis=0)
        batch = dy.shape[0]
        steps = cache["layers"][0]["inp"].shape[1]
        d_hs = np.zeros((batch, steps, hid))
        d_hs[:, -1] = dy @ theta["out_w"].T
        for layer in reversed(range(cfg.n_layers)):
            st = cache["layers"][layer]
            wx, wh = theta[f"l{layer}_wx"], theta[f"l{layer}_wh"]
            inp = st["inp"]
            da = np.empty((batch, steps, 4 * hid))
            dh_carry = np.zeros((batch, hid))
            dc_carry = np.zeros((batch, hid))
            wh_t = wh.T
            for t in reversed(range(steps)):
                dh = d_hs[:, t] + dh_carry
                gi, gf, gg, go = st["i"][:, t], st["f"][:, t], st["g"][:, t], st["o"][:, t]
                tc = st["tc"][:, t]
                do = dh * tc
                dc = dc_carry + dh * go * (1.0 - tc * tc)
                di = dc * gg
                dg = dc * gi
                df = dc * st["c_prev"][:, t]
                dc_carry = dc * gf
                da[:, t, :hid] = di * gi * (1.0 - gi)
                da[:, t, hid:2 * hid] = df * gf * (1.0 - gf)
                da[:, t, 2 * hid:3 * hid] = dg * (1.0 - gg * gg)
                da[:, t, 3 * hid:] = do * go * (1.0 - go)
                dh_carry = da[:, t] @ wh_t
            flat_da = da.reshape(-1, 4 * hid)
            grad[f"l{layer}_wx"][:] = inp.reshape(-1, inp.shape[-1]).T @ flat_da
            grad[f"l{layer}_wh"][:] = st["h_prev"].reshape(-1, hid).T @ flat_da
            grad[f"l{layer}_b"][:] = flat_da.sum(axis=0)
            d_hs = da @ wx.T
        return grad.flat
