"""Backbone contracts: shapes, purity, counts, exact gradients, checkpoints."""

import numpy as np
import pytest

from chanpred.errors import ShapeMismatchError
from chanpred.models import (OptimConfig, ParameterVector, PredictorConfig,
                             forward, load_checkpoint, loss_and_grad,
                             make_backbone, nmse_head, pack_targets,
                             pack_windows, param_count, positional_encoding,
                             save_checkpoint, sgd_step, unpack_outputs)
from chanpred.numerics import finite_diff_grad, max_relative_error

TINY = {
    "lstm": PredictorConfig(backbone="lstm", d_in=8, seq_len=4, d_hid=4, n_layers=3),
    "gru": PredictorConfig(backbone="gru", d_in=8, seq_len=4, d_hid=4, n_layers=3),
    "transformer": PredictorConfig(backbone="transformer", d_in=8, seq_len=4,
                                   d_model=16, n_heads=4, d_ff=32),
}
BACKBONES = sorted(TINY)


def make_batch(cfg, batch=3, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(batch, cfg.seq_len, cfg.d_in))
    t = rng.normal(size=(batch, cfg.d_in))
    return x, t


class TestShapesAndPurity:
    @pytest.mark.parametrize("backbone", BACKBONES)
    def test_output_shape(self, backbone):
        cfg = TINY[backbone]
        model = make_backbone(cfg)
        theta = model.init(np.random.default_rng(1))
        x, _ = make_batch(cfg)
        y, _ = model.forward(theta, x)
        assert y.shape == (3, cfg.d_in)

    @pytest.mark.parametrize("backbone", BACKBONES)
    def test_repeatable(self, backbone):
        cfg = TINY[backbone]
        model = make_backbone(cfg)
        theta = model.init(np.random.default_rng(1))
        x, _ = make_batch(cfg)
        y1, _ = model.forward(theta, x)
        y2, _ = model.forward(theta, x)
        assert np.array_equal(y1, y2)

    @pytest.mark.parametrize("backbone", ["lstm", "gru"])
    def test_zero_window_zero_biases_zero_output(self, backbone):
        cfg = TINY[backbone]
        model = make_backbone(cfg)
        theta = model.init(np.random.default_rng(1))
        for name, _ in theta.spec:
            if name.endswith("_b") or name == "out_b":
                theta[name][:] = 0.0
        x = np.zeros((2, cfg.seq_len, cfg.d_in))
        y, _ = model.forward(theta, x)
        assert np.allclose(y, 0.0)

    def test_complex_forward_round_trip_shapes(self):
        cfg = PredictorConfig(backbone="gru", d_in=2 * 3 * 2 * 2, seq_len=5,
                              d_hid=4, n_layers=2)
        model = make_backbone(cfg)
        theta = model.init(np.random.default_rng(0))
        rng = np.random.default_rng(1)
        window = rng.normal(size=(5, 3, 2, 2)) + 1j * rng.normal(size=(5, 3, 2, 2))
        out = forward(window, theta, cfg)
        assert out.shape == (3, 2, 2)
        assert np.iscomplexobj(out)
        batch = forward(np.stack([window, window]), theta, cfg)
        assert batch.shape == (2, 3, 2, 2)
        assert np.array_equal(batch[0], batch[1])

    def test_forward_shape_mismatch(self):
        cfg = TINY["gru"]
        model_theta = make_backbone(cfg).init(np.random.default_rng(0))
        bad = np.zeros((2, cfg.seq_len + 1, 2, 1, 2), dtype=complex)
        with pytest.raises(ShapeMismatchError):
            forward(bad, model_theta, cfg)


class TestPacking:
    def test_round_trip(self):
        rng = np.random.default_rng(2)
        w = rng.normal(size=(2, 4, 3, 2, 2)) + 1j * rng.normal(size=(2, 4, 3, 2, 2))
        feats = pack_windows(w)
        assert feats.shape == (2, 4, 2 * 12)
        t = rng.normal(size=(2, 3, 2, 2)) + 1j * rng.normal(size=(2, 3, 2, 2))
        vec = pack_targets(t)
        back = unpack_outputs(vec, (3, 2, 2))
        assert np.allclose(back, t)

    def test_split_layout_real_then_imag(self):
        w = np.full((1, 1, 1, 1, 2), 1 + 2j)
        feats = pack_windows(w)
        assert np.array_equal(feats[0, 0], [1.0, 1.0, 2.0, 2.0])


class TestParamCount:
    def test_lstm_layer_count(self):
        spec = make_backbone(TINY["lstm"]).param_spec()
        sizes = {name: int(np.prod(shape)) for name, shape in spec}
        # 4 h (d + h) + 4 h = 208 for the first layer; the rule of thumb
        # 4 h (d + h) = 192 ignores the bias
        assert sizes["l0_wx"] + sizes["l0_wh"] + sizes["l0_b"] == 208

    def test_gru_layer_count(self):
        spec = make_backbone(TINY["gru"]).param_spec()
        sizes = {name: int(np.prod(shape)) for name, shape in spec}
        assert sizes["l0_wx"] + sizes["l0_wh"] + sizes["l0_b"] == 156

    def test_total_matches_flat_length(self):
        for cfg in TINY.values():
            model = make_backbone(cfg)
            theta = model.init(np.random.default_rng(0))
            assert param_count(cfg) == theta.size

    def test_quadratic_scaling_in_width(self):
        small = PredictorConfig(backbone="lstm", d_in=8, seq_len=4, d_hid=8, n_layers=1)
        big = PredictorConfig(backbone="lstm", d_in=8, seq_len=4, d_hid=16, n_layers=1)

        def recurrent_block(cfg):
            spec = make_backbone(cfg).param_spec()
            return sum(int(np.prod(s)) for n, s in spec if n.startswith("l0_wh"))

        ratio = recurrent_block(big) / recurrent_block(small)
        assert ratio == pytest.approx(4.0)


class TestPositionalEncoding:
    def test_step_zero_cosines(self):
        vec = positional_encoding(0, 16, seq_len=8)
        assert np.allclose(vec[1::2], 1.0)
        assert np.allclose(vec[0::2], 0.0)

    def test_bounded(self):
        for t in range(32):
            vec = positional_encoding(t, 16, seq_len=32)
            assert np.all(np.abs(vec) <= 1.0 + 1e-12)

    def test_injective_on_window(self):
        vecs = [tuple(np.round(positional_encoding(t, 16, seq_len=32), 12))
                for t in range(32)]
        assert len(set(vecs)) == 32


class TestGradients:
    @pytest.mark.parametrize("backbone", BACKBONES)
    def test_nmse_gradient_matches_finite_differences(self, backbone):
        cfg = TINY[backbone]
        model = make_backbone(cfg)
        theta = model.init(np.random.default_rng(1))
        x, t = make_batch(cfg)
        y, cache = model.forward(theta, x, want_cache=True)
        loss, dy, _ = nmse_head(y, t)
        analytic = model.backward(theta, cache, dy)

        def lossfn(flat):
            pv = ParameterVector(model.param_spec(), flat)
            yy, _ = model.forward(pv, x)
            return nmse_head(yy, t)[0]

        fd = finite_diff_grad(lossfn, theta.flat, 1e-5)
        assert max_relative_error(analytic, fd) <= 1e-4

    @pytest.mark.parametrize("backbone", BACKBONES)
    def test_perfect_fit_zero_loss_zero_grad(self, backbone):
        cfg = TINY[backbone]
        model = make_backbone(cfg)
        theta = model.init(np.random.default_rng(1))
        x, _ = make_batch(cfg)
        y, cache = model.forward(theta, x, want_cache=True)
        loss, dy, _ = nmse_head(y, y.copy())
        grad = model.backward(theta, cache, dy)
        assert loss == 0.0
        assert np.allclose(grad, 0.0)

    def test_duplicated_sample_invariance(self):
        cfg = TINY["gru"]
        model = make_backbone(cfg)
        theta = model.init(np.random.default_rng(1))
        x, t = make_batch(cfg)
        y, cache = model.forward(theta, x, want_cache=True)
        l1, dy, _ = nmse_head(y, t)
        g1 = model.backward(theta, cache, dy)
        x2, t2 = np.concatenate([x, x]), np.concatenate([t, t])
        y2, cache2 = model.forward(theta, x2, want_cache=True)
        l2, dy2, _ = nmse_head(y2, t2)
        g2 = model.backward(theta, cache2, dy2)
        assert l2 == pytest.approx(l1)
        assert np.allclose(g1, g2, rtol=1e-12, atol=1e-15)

    def test_batch_permutation_invariance(self):
        cfg = TINY["lstm"]
        model = make_backbone(cfg)
        theta = model.init(np.random.default_rng(1))
        x, t = make_batch(cfg, batch=5)
        perm = np.array([3, 1, 4, 0, 2])
        y, cache = model.forward(theta, x, want_cache=True)
        l1, dy, _ = nmse_head(y, t)
        g1 = model.backward(theta, cache, dy)
        y2, cache2 = model.forward(theta, x[perm], want_cache=True)
        l2, dy2, _ = nmse_head(y2, t[perm])
        g2 = model.backward(theta, cache2, dy2)
        assert l2 == pytest.approx(l1)
        assert np.allclose(g1, g2, rtol=1e-12, atol=1e-14)

    def test_complex_api_loss_and_grad(self):
        cfg = PredictorConfig(backbone="gru", d_in=2 * 3 * 2 * 2, seq_len=4,
                              d_hid=4, n_layers=2)
        model = make_backbone(cfg)
        theta = model.init(np.random.default_rng(0))
        rng = np.random.default_rng(5)
        w = rng.normal(size=(3, 4, 3, 2, 2)) + 1j * rng.normal(size=(3, 4, 3, 2, 2))
        h = rng.normal(size=(3, 3, 2, 2)) + 1j * rng.normal(size=(3, 3, 2, 2))
        loss, grad = loss_and_grad(w, h, theta, cfg)

        def lossfn(flat):
            pv = ParameterVector(model.param_spec(), flat)
            feats = pack_windows(w)
            y, _ = model.forward(pv, feats)
            return nmse_head(y, pack_targets(h))[0]

        fd = finite_diff_grad(lossfn, theta.flat, 1e-5)
        assert max_relative_error(grad, fd) <= 1e-4


class TestSgd:
    def test_zero_gradient_fixed_point(self):
        theta = ParameterVector([("w", (3,))], np.array([1.0, -2.0, 3.0]))
        sgd_step(theta, np.zeros(3), OptimConfig(learning_rate=0.1))
        assert np.array_equal(theta.flat, [1.0, -2.0, 3.0])

    def test_hand_arithmetic(self):
        theta = ParameterVector([("w", (1,))], np.array([1.0]))
        sgd_step(theta, np.array([2.0]), OptimConfig(learning_rate=0.1, clip_norm=0.0))
        assert theta.flat[0] == pytest.approx(0.8)

    def test_clip_rescales(self):
        theta = ParameterVector([("w", (1,))], np.array([0.0]))
        sgd_step(theta, np.array([10.0]), OptimConfig(learning_rate=1.0, clip_norm=1.0))
        assert theta.flat[0] == pytest.approx(-1.0)

    def test_recurrent_state_width_constant(self):
        cfg = TINY["gru"]
        model = make_backbone(cfg)
        theta = model.init(np.random.default_rng(0))
        x, _ = make_batch(cfg, batch=2)
        _, cache = model.forward(theta, x, want_cache=True)
        for st in cache["layers"]:
            assert st["h_prev"].shape[-1] == cfg.d_hid


class TestParameterVector:
    def test_views_alias_flat(self):
        pv = ParameterVector([("a", (2, 2)), ("b", (3,))])
        pv["a"][0, 0] = 5.0
        assert pv.flat[0] == 5.0
        pv.flat[4] = 7.0
        assert pv["b"][0] == 7.0

    def test_copy_detaches(self):
        pv = ParameterVector([("a", (2,))], np.array([1.0, 2.0]))
        other = pv.copy()
        other.flat[0] = 9.0
        assert pv.flat[0] == 1.0

    def test_checkpoint_round_trip(self, tmp_path):
        cfg = TINY["transformer"]
        model = make_backbone(cfg)
        theta = model.init(np.random.default_rng(3))
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, theta, config=cfg.to_dict())
        back, meta = load_checkpoint(path)
        assert np.array_equal(back.flat, theta.flat)
        assert back.spec == theta.spec
        assert PredictorConfig.from_dict(meta) == cfg
        # byte stability
        save_checkpoint(tmp_path / "again.ckpt", back, config=meta)
        assert (tmp_path / "model.ckpt").read_bytes() == (tmp_path / "again.ckpt").read_bytes()
