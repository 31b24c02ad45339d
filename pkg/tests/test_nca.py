"""Cell-grid mechanics: seeding, perception, stepping, growth, determinism."""

import numpy as np
import pytest

from ncam import autodiff as ad
from ncam import nca
from ncam.autodiff import Tensor
from ncam.nca import CellGrid, NcaConfig, NcaParams, param_count


def make_params(cfg, rng=None, scale=0.1, batch=None):
    rng = rng or np.random.default_rng(0)
    pch = cfg.perception_channels
    lead = (batch,) if batch else ()

    def t(*shape):
        return Tensor((rng.standard_normal(lead + shape) * scale).astype(np.float32),
                      requires_grad=True)

    return NcaParams(w1=t(cfg.hidden, pch, 1, 1), b1=t(cfg.hidden),
                     w2=t(cfg.channels, cfg.hidden, 1, 1), b2=t(cfg.channels))


def zero_params(cfg):
    pch = cfg.perception_channels
    z = lambda *s: Tensor(np.zeros(s, dtype=np.float32))
    return NcaParams(z(cfg.hidden, pch, 1, 1), z(cfg.hidden),
                     z(cfg.channels, cfg.hidden, 1, 1), z(cfg.channels))


class TestConfig:
    def test_rejects_bad_channel_count(self):
        with pytest.raises(ValueError, match="channels"):
            NcaConfig(channels=12)

    def test_rejects_bad_update_prob(self):
        with pytest.raises(ValueError, match="update_prob"):
            NcaConfig(update_prob=0.0)

    def test_leak_factor_initial_value_and_bounds(self):
        cfg = NcaConfig()
        assert cfg.leak_factor.item() == pytest.approx(0.1)
        cfg.leak_factor.data = np.float32(5e4)
        nca.clamp_leak_factor(cfg.leak_factor)
        assert cfg.leak_factor.item() == pytest.approx(nca.LF_MAX)
        cfg.leak_factor.data = np.float32(1e-9)
        nca.clamp_leak_factor(cfg.leak_factor)
        assert cfg.leak_factor.item() == pytest.approx(nca.LF_MIN)

    def test_no_lf_ablation_freezes_at_one(self):
        cfg = NcaConfig(use_lf=False)
        assert cfg.leak_factor.item() == 1.0
        assert not cfg.leak_factor.requires_grad


class TestSeedGrid:
    def test_rgba_seed_nonzero_count(self):
        cfg = NcaConfig(channels=16, visible=4)
        grid = nca.seed_grid(3, 3, cfg)
        nz = np.nonzero(grid.state.data)
        assert len(nz[0]) == 13  # alpha + 12 hidden
        assert np.all(grid.state.data[nz] == 1.0)
        assert set(zip(nz[1], nz[2])) == {(1, 1)}

    def test_rgb_seed_nonzero_count(self):
        cfg = NcaConfig(channels=16, visible=3)
        grid = nca.seed_grid(3, 3, cfg)
        assert np.count_nonzero(grid.state.data) == 13  # 13 hidden channels

    @pytest.mark.parametrize("channels,visible", [(16, 4), (16, 3), (32, 4), (32, 3)])
    def test_seed_sum_formula(self, channels, visible):
        cfg = NcaConfig(channels=channels, visible=visible)
        grid = nca.seed_grid(9, 7, cfg)
        want = channels - visible + (1 if visible == 4 else 0)
        assert grid.state.data.sum() == want

    def test_rejects_tiny_grid(self):
        with pytest.raises(ValueError, match="3x3"):
            nca.seed_grid(2, 5, NcaConfig())


class TestPerceive:
    def test_output_shape(self):
        cfg = NcaConfig(channels=16, visible=4)
        grid = nca.seed_grid(64, 64, cfg)
        assert nca.perceive(grid, cfg).shape == (48, 64, 64)

    def test_constant_grid_has_zero_sobel_response(self):
        # zero at every interior cell; border cells see the zero padding
        cfg = NcaConfig(normalize_perception=False)
        grid = CellGrid(Tensor(np.full((16, 6, 6), 3.25, dtype=np.float32)))
        out = nca.perceive(grid, cfg).data
        assert np.allclose(out[16:, 1:-1, 1:-1], 0.0)  # both Sobel bands
        assert np.array_equal(out[:16], grid.state.data)

    def test_seed_sobel_x_antisymmetry(self):
        cfg = NcaConfig(normalize_perception=False)
        grid = nca.seed_grid(7, 7, cfg)
        sx = nca.perceive(grid, cfg).data[16:32]
        assert np.allclose(sx[:, :, :3], -sx[:, :, :3:-1])  # mirrored columns flip sign
        assert np.allclose(sx[:, :, 3], 0.0)

    def test_normalized_statistics(self):
        cfg = NcaConfig()
        rng = np.random.default_rng(3)
        grid = CellGrid(Tensor(rng.standard_normal((16, 12, 12)).astype(np.float32)))
        out = nca.perceive(grid, cfg).data
        assert np.all(np.abs(out.mean(axis=(-2, -1))) < 1e-4)
        assert np.all(np.abs(out.var(axis=(-2, -1)) - 1.0) < 1e-2)


class TestStep:
    def test_zero_params_keep_state(self):
        cfg = NcaConfig(update_prob=1.0)
        grid = nca.seed_grid(8, 8, cfg)
        out = nca.step(grid, zero_params(cfg), cfg)
        assert np.array_equal(out.state.data, grid.state.data)
        assert out.step_index == 1

    def test_synchronous_determinism(self):
        cfg = NcaConfig(update_prob=1.0)
        params = make_params(cfg)
        a = nca.step(nca.seed_grid(8, 8, cfg), params, cfg)
        b = nca.step(nca.seed_grid(8, 8, cfg), params, cfg)
        assert np.array_equal(a.state.data, b.state.data)

    def test_stochastic_requires_rng(self):
        cfg = NcaConfig(update_prob=0.5)
        with pytest.raises(ValueError, match="rng"):
            nca.step(nca.seed_grid(8, 8, cfg), make_params(cfg), cfg)

    def test_mask_rate_is_about_p(self):
        cfg = NcaConfig(update_prob=0.5)
        mask = nca._sample_mask(np.random.default_rng(7), cfg, (), 100, 100)
        frac = mask.data.mean()
        assert 0.48 <= frac <= 0.52

    def test_mask_shared_across_channels(self):
        cfg = NcaConfig(update_prob=0.5)
        params = make_params(cfg, scale=0.5)
        grid = nca.seed_grid(10, 10, cfg)
        out = nca.step(grid, params, cfg, rng_seed=11)
        changed = np.any(out.state.data != grid.state.data, axis=0)
        ref = nca.step(grid, params, cfg, rng_seed=11)  # same mask, same result
        assert np.array_equal(out.state.data, ref.state.data)
        # cells either update all channels or none: recompute without mask
        full = nca.step(grid, params, NcaConfig(update_prob=1.0,
                                                lf_init=cfg.lf_init), rng_seed=0)
        delta_cells = np.any(full.state.data != grid.state.data, axis=0)
        assert np.all(changed <= delta_cells)

    def test_rejects_mismatched_params(self):
        cfg = NcaConfig(hidden=32)
        other = NcaConfig(hidden=16)
        with pytest.raises(ValueError, match="NcaParams"):
            nca.step(nca.seed_grid(6, 6, cfg), make_params(other), cfg)


class TestGrow:
    def test_rejects_zero_steps(self):
        with pytest.raises(ValueError, match="steps"):
            NcaConfig(steps=0)

    def test_frame_count_matches_stride(self):
        cfg = NcaConfig(steps=32, update_prob=1.0)
        _, frames = nca.grow(zero_params(cfg), cfg, 8, 8, frames_every=4)
        assert len(frames) == 8  # ceil(32 / 4)
        cfg2 = NcaConfig(steps=10, update_prob=1.0)
        _, frames2 = nca.grow(zero_params(cfg2), cfg2, 8, 8, frames_every=4)
        assert len(frames2) == 3  # ceil(10 / 4): steps 4, 8, 10

    def test_synchronous_growth_repeatable(self):
        cfg = NcaConfig(steps=8, update_prob=1.0)
        params = make_params(cfg, scale=0.2)
        g1, _ = nca.grow(params, cfg, 9, 9)
        g2, _ = nca.grow(params, cfg, 9, 9)
        assert np.array_equal(g1.state.data, g2.state.data)
        assert g1.step_index == 8

    def test_stochastic_growth_repeatable_under_seed(self):
        cfg = NcaConfig(steps=8, update_prob=0.5)
        params = make_params(cfg, scale=0.2)
        g1, _ = nca.grow(params, cfg, 9, 9, rng_seed=42)
        g2, _ = nca.grow(params, cfg, 9, 9, rng_seed=42)
        g3, _ = nca.grow(params, cfg, 9, 9, rng_seed=43)
        assert np.array_equal(g1.state.data, g2.state.data)
        assert not np.array_equal(g1.state.data, g3.state.data)

    def test_gradients_reach_params_and_leak_factor(self):
        cfg = NcaConfig(steps=5, update_prob=1.0, hidden=8)
        params = make_params(cfg, scale=0.3)
        grid, _ = nca.grow(params, cfg, 8, 8)
        target = Tensor(np.zeros((4, 8, 8), dtype=np.float32))
        loss = ad.mse(ad.slice_axis(grid.state, 0, 0, 4), target)
        loss.backward()
        for t in (params.w1, params.b1, params.w2, params.b2, cfg.leak_factor):
            assert t.grad is not None and np.any(t.grad != 0)

    def test_gradients_flow_through_stochastic_mask(self):
        cfg = NcaConfig(steps=4, update_prob=0.5, hidden=8)
        params = make_params(cfg, scale=0.3)
        grid, _ = nca.grow(params, cfg, 8, 8, rng_seed=5)
        loss = ad.mse(ad.slice_axis(grid.state, 0, 0, 4),
                      Tensor(np.zeros((4, 8, 8), dtype=np.float32)))
        loss.backward()
        assert params.w1.grad is not None and np.any(params.w1.grad != 0)


class TestBatched:
    def test_batched_matches_single(self):
        cfg = NcaConfig(steps=6, update_prob=1.0, hidden=8)
        rng = np.random.default_rng(21)
        batched = make_params(cfg, rng=rng, scale=0.2, batch=3)
        state, _ = nca.grow_batch(batched, cfg, 8, 8)
        for i in range(3):
            single = NcaParams(*(Tensor(np.array(t.data[i])) for t in
                                 (batched.w1, batched.b1, batched.w2, batched.b2)))
            grid, _ = nca.grow(single, cfg, 8, 8)
            assert np.allclose(state.data[i], grid.state.data, atol=2e-6)

    def test_param_count_formula(self):
        assert param_count(16, 128) == 8336
        cfg = NcaConfig(channels=16, hidden=32)
        assert make_params(cfg).scalar_count() == param_count(16, 32)

    def test_batch_frames_shape(self):
        cfg = NcaConfig(steps=8, update_prob=1.0, hidden=8)
        params = make_params(cfg, batch=2, scale=0.1)
        state, frames = nca.grow_batch(params, cfg, 8, 8, frames_every=2)
        assert state.shape == (2, 16, 8, 8)
        assert len(frames) == 4 and frames[0].shape == (2, 4, 8, 8)
