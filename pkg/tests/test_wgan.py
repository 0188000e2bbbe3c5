import copy

import numpy as np
import pytest

from foldgan import (
    GanArch,
    GanTrainConfig,
    Heatmap,
    LabelledDataset,
    build_critic,
    build_generator,
    fit_dims,
    gradient_penalty,
    penalty_value,
    sample,
    train_wgan,
)
from foldgan.errors import ConfigError, ShapeError, TrainingDiverged
from foldgan.nn import Adam, Dense, Flatten, Sequential, central_difference
from foldgan.wgan import critic_step, generator_step, interpolate_batch

ARCH8 = GanArch(latent_dim=16, p=8, d=8)


def toy_class_data(n=6, p=8, d=8, label=1, seed=0):
    rng = np.random.default_rng(seed)
    items = [Heatmap(rng.random((p, d)), label=label, normalized=True) for _ in range(n)]
    return LabelledDataset(items, np.full(n, label, dtype=np.int64), seed=seed)


def linear_critic(n_features, weights=None, seed=0):
    rng = np.random.default_rng(seed)
    net = Sequential(
        [("flatten", Flatten()), ("dense", Dense(n_features, 1, rng=rng, dtype=np.float64))],
        dtype=np.float64,
    )
    if weights is not None:
        net.layers[1].W[...] = np.asarray(weights).reshape(n_features, 1)
    net.layers[1].b[...] = 0.0
    return net


class TestArchitectures:
    def test_generator_output_shape_and_range(self):
        gen = build_generator(GanArch(latent_dim=128, p=32, d=32), seed=0)
        out = gen.forward(np.zeros((2, 128), dtype=np.float32), train=False)
        assert out.shape == (2, 1, 32, 32)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_zero_parameters_give_constant_half(self):
        gen = build_generator(ARCH8, seed=0)
        for v in gen.params().values():
            v[...] = 0.0
        out = gen.forward(np.random.default_rng(0).standard_normal((4, 16)).astype(np.float32), train=False)
        assert np.allclose(out, 0.5)

    def test_generator_parameter_count_closed_form(self):
        p, d, latent = 16, 24, 128
        gen = build_generator(GanArch(latent_dim=latent, p=p, d=d), seed=0)
        p8, d8 = p // 8, d // 8
        expected = (
            latent * 128 * p8 * d8 + 128 * p8 * d8  # projection
            + 128 * 64 * 25 + 64 + 2 * 64            # tconv1 + batch norm
            + 64 * 32 * 25 + 32 + 2 * 32             # tconv2 + batch norm
            + 32 * 1 * 25 + 1                        # tconv3
        )
        assert gen.param_count() == expected

    def test_critic_score_shape(self):
        critic = build_critic(GanArch(latent_dim=128, p=32, d=32), seed=0)
        out = critic.forward(np.zeros((3, 1, 32, 32), dtype=np.float32))
        assert out.shape == (3, 1)

    def test_critic_parameter_count_closed_form(self):
        p, d = 16, 24
        critic = build_critic(GanArch(latent_dim=128, p=p, d=d), seed=0)
        flat = 128 * (p // 8) * (d // 8)
        expected = (
            32 * 1 * 25 + 32
            + 64 * 32 * 25 + 64
            + 128 * 64 * 25 + 128
            + flat * 1024 + 1024
            + 1024 * 1 + 1
        )
        assert critic.param_count() == expected

    def test_critic_flatten_size(self):
        critic = build_critic(GanArch(latent_dim=128, p=24, d=64), seed=0)
        assert critic.layers[7].W.shape[0] == 128 * 3 * 8

    def test_final_layer_linearity(self):
        critic = build_critic(ARCH8, seed=1)
        x = np.random.default_rng(2).random((4, 1, 8, 8)).astype(np.float32)
        base = critic.forward(x)
        critic.layers[-1].W *= 2.0
        critic.layers[-1].b *= 2.0
        assert np.array_equal(critic.forward(x), 2.0 * base)

    def test_non_divisible_dims_rejected(self):
        with pytest.raises(ConfigError, match="crop or pad"):
            build_generator(GanArch(latent_dim=8, p=12, d=16), seed=0)
        with pytest.raises(ConfigError, match="crop or pad"):
            build_critic(GanArch(latent_dim=8, p=16, d=20), seed=0)


class TestGradientPenalty:
    def test_unit_norm_linear_critic_gives_zero(self):
        rng = np.random.default_rng(3)
        w = rng.standard_normal(64)
        w /= np.linalg.norm(w)
        critic = linear_critic(64, weights=w)
        real = rng.standard_normal((4, 1, 8, 8))
        fake = rng.standard_normal((4, 1, 8, 8))
        penalty, _ = gradient_penalty(critic, real, fake, 10.0, seed=0)
        assert penalty <= 1e-10

    def test_zero_critic_gives_lambda(self):
        critic = linear_critic(64, weights=np.zeros(64))
        rng = np.random.default_rng(4)
        penalty, grads = gradient_penalty(
            critic, rng.standard_normal((4, 1, 8, 8)), rng.standard_normal((4, 1, 8, 8)), 10.0, seed=1
        )
        assert penalty == 10.0
        # locally constant in the parameters: zero gradient everywhere
        assert all(np.allclose(g, 0.0) for g in grads.values())

    def test_zero_full_critic_gives_lambda(self):
        critic = build_critic(ARCH8, seed=0).astype(np.float64)
        for v in critic.params().values():
            v[...] = 0.0
        rng = np.random.default_rng(5)
        penalty, _ = gradient_penalty(
            critic, rng.standard_normal((2, 1, 8, 8)), rng.standard_normal((2, 1, 8, 8)), 10.0, seed=2
        )
        assert abs(penalty - 10.0) < 1e-12

    def test_negative_lambda_rejected(self):
        critic = linear_critic(4)
        with pytest.raises(ConfigError):
            gradient_penalty(critic, np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 2)), -1.0, seed=0)

    def test_penalty_nonnegative(self):
        rng = np.random.default_rng(6)
        critic = build_critic(ARCH8, seed=3).astype(np.float64)
        for _ in range(5):
            penalty, _ = gradient_penalty(
                critic, rng.random((4, 1, 8, 8)), rng.random((4, 1, 8, 8)), 10.0, seed=int(rng.integers(1 << 30))
            )
            assert penalty >= 0.0

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        critic = build_critic(ARCH8, seed=4).astype(np.float64)
        for v in critic.params().values():
            v[...] = rng.standard_normal(v.shape) * 0.3
        real = rng.standard_normal((4, 1, 8, 8))
        fake = rng.standard_normal((4, 1, 8, 8))
        critic.zero_grad()
        penalty, grads = gradient_penalty(critic, real, fake, 10.0, seed=42)
        xhat = interpolate_batch(real, fake, np.random.default_rng(42))
        assert abs(penalty - penalty_value(critic, xhat, 10.0)) < 1e-9
        worst = 0.0
        for name, arr in critic.params().items():
            idx = np.random.default_rng(8).choice(arr.size, size=min(arr.size, 15), replace=False)
            numeric = central_difference(lambda: penalty_value(critic, xhat, 10.0), arr, idx)
            analytic = grads[name].reshape(-1)[idx]
            scale = np.maximum(np.abs(numeric), np.abs(analytic))
            rel = np.where(scale < 1e-6, 0.0, np.abs(numeric - analytic) / np.maximum(scale, 1e-300))
            worst = max(worst, float(rel.max()))
        assert worst < 1e-3

    def test_accumulation_preserves_existing_gradients(self):
        rng = np.random.default_rng(9)
        critic = linear_critic(16, weights=rng.standard_normal(16))
        critic.zero_grad()
        critic.grads()["dense.W"][...] = 1.0
        _, contribution = gradient_penalty(
            critic, rng.standard_normal((2, 1, 4, 4)), rng.standard_normal((2, 1, 4, 4)), 5.0, seed=3
        )
        assert np.allclose(critic.grads()["dense.W"], 1.0 + contribution["dense.W"])


class TestSteps:
    def _setup(self, seed=0):
        cfg = GanTrainConfig(seed=seed)
        gen = build_generator(ARCH8, seed=1).fuse_storage()
        critic = build_critic(ARCH8, seed=2).fuse_storage()
        adam_c = Adam(critic.opt_params(), lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
        adam_g = Adam(gen.opt_params(), lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
        real = np.random.default_rng(seed).random((4, 1, 8, 8)).astype(np.float32)
        return cfg, gen, critic, adam_c, adam_g, real

    def test_critic_step_deterministic(self):
        results = []
        for _ in range(2):
            cfg, gen, critic, adam_c, _, real = self._setup(seed=5)
            rng = np.random.default_rng(11)
            results.append(critic_step(critic, gen, real, cfg, adam_c, rng))
        assert results[0] == results[1]

    def test_matched_distributions_linear_unit_critic_loss_zero(self):
        rng = np.random.default_rng(12)
        w = rng.standard_normal(64)
        w /= np.linalg.norm(w)
        critic = linear_critic(64, weights=w)
        real = rng.random((4, 1, 8, 8))
        em = float(critic.forward(real).mean() - critic.forward(real.copy()).mean())
        penalty, _ = gradient_penalty(critic, real, real.copy(), 10.0, seed=1)
        assert em == 0.0
        assert abs(-em + penalty) < 1e-10

    def test_critic_step_leaves_generator_untouched(self):
        cfg, gen, critic, adam_c, _, real = self._setup()
        gen_before = {k: v.copy() for k, v in gen.params().items()}
        critic_before = {k: v.copy() for k, v in critic.params().items()}
        critic_step(critic, gen, real, cfg, adam_c, np.random.default_rng(0))
        assert all(np.array_equal(gen.params()[k], v) for k, v in gen_before.items())
        assert any(not np.array_equal(critic.params()[k], v) for k, v in critic_before.items())

    def test_generator_step_leaves_critic_untouched(self):
        cfg, gen, critic, _, adam_g, _ = self._setup()
        critic_before = {k: v.copy() for k, v in critic.params().items()}
        gen_before = {k: v.copy() for k, v in gen.params().items()}
        generator_step(critic, gen, cfg, adam_g, np.random.default_rng(0))
        assert all(np.array_equal(critic.params()[k], v) for k, v in critic_before.items())
        assert any(not np.array_equal(gen.params()[k], v) for k, v in gen_before.items())

    def test_constant_critic_gives_zero_generator_gradient(self):
        cfg, gen, critic, _, adam_g, _ = self._setup()
        for v in critic.params().values():
            v[...] = 0.0
        critic.layers[-1].b[...] = 3.0
        gen_before = {k: v.copy() for k, v in gen.params().items()}
        loss = generator_step(critic, gen, cfg, adam_g, np.random.default_rng(0))
        assert np.isclose(loss, -3.0, atol=1e-6)
        assert all(np.array_equal(gen.params()[k], v) for k, v in gen_before.items())

    def test_wrong_batch_size_rejected(self):
        cfg, gen, critic, adam_c, _, _ = self._setup()
        with pytest.raises(ShapeError):
            critic_step(critic, gen, np.zeros((3, 1, 8, 8), np.float32), cfg, adam_c, np.random.default_rng(0))


class TestTrainWgan:
    def test_zero_epochs_returns_initialization(self):
        data = toy_class_data(n=6, seed=1)
        cfg = GanTrainConfig(epochs=0, seed=9)
        ckpt, log = train_wgan(data, cfg)
        assert log.rows == []
        assert ckpt.epochs_completed == 0
        from foldgan.seeds import derive_seed

        fresh = build_generator(GanArch(latent_dim=128, p=8, d=8), derive_seed(9, 1))
        for k, v in fresh.state_dict().items():
            assert np.array_equal(ckpt.generator_state[k], v)

    def test_training_is_deterministic(self):
        data = toy_class_data(n=6, seed=2)
        cfg = GanTrainConfig(epochs=2, seed=33)
        a, log_a = train_wgan(data, cfg)
        b, log_b = train_wgan(data, cfg)
        for k in a.generator_state:
            assert np.array_equal(a.generator_state[k], b.generator_state[k])
        for k in a.critic_state:
            assert np.array_equal(a.critic_state[k], b.critic_state[k])
        assert log_a.lines() == log_b.lines()

    def test_log_format(self):
        data = toy_class_data(n=5, seed=3)
        _, log = train_wgan(data, GanTrainConfig(epochs=3, seed=1))
        lines = log.lines()
        assert lines[0] == "epoch,em_estimate,penalty,gen_loss"
        assert len(lines) == 4
        assert lines[1].startswith("0,")

    def test_mixed_class_data_rejected(self):
        rng = np.random.default_rng(4)
        items = [Heatmap(rng.random((8, 8)), label=i % 2, normalized=True) for i in range(4)]
        ds = LabelledDataset(items, np.array([0, 1, 0, 1]), seed=0)
        with pytest.raises(ConfigError, match="single class"):
            train_wgan(ds, GanTrainConfig(epochs=1))

    def test_unnormalized_data_rejected(self):
        rng = np.random.default_rng(5)
        items = [Heatmap(rng.random((8, 8)) * 5, label=1, normalized=False) for _ in range(4)]
        ds = LabelledDataset(items, np.ones(4, dtype=np.int64), seed=0)
        with pytest.raises(ConfigError, match="normalized"):
            train_wgan(ds, GanTrainConfig(epochs=1))

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    @pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
    def test_divergence_aborts_with_partial_log_and_checkpoint(self):
        data = toy_class_data(n=6, seed=6)
        cfg = GanTrainConfig(epochs=50, lr=1e12, seed=3)
        with pytest.raises(TrainingDiverged) as excinfo:
            train_wgan(data, cfg)
        err = excinfo.value
        assert err.checkpoint is not None
        assert err.log is not None
        assert len(err.log.rows) < 50

    def test_lr_decays_once_at_midpoint(self):
        data = toy_class_data(n=4, seed=7)
        cfg = GanTrainConfig(epochs=2, lr=1e-4, lr_decay=0.5, seed=8)
        ckpt, _ = train_wgan(data, cfg)
        assert np.isclose(ckpt.gen_opt_state["lr"], 5e-5)
        assert np.isclose(ckpt.critic_opt_state["lr"], 5e-5)

    def test_config_invariants_validated(self):
        for bad in (
            dict(lambda_gp=-1.0),
            dict(n_critic=0),
            dict(lr=0.0),
            dict(batch_size=0),
            dict(lr_decay=0.0),
            dict(epochs=-1),
        ):
            with pytest.raises(ConfigError):
                GanTrainConfig(**bad).validate()

    def test_58_heatmaps_desk_scale_full_schedule(self):
        # the under-represented class size; must run the full default
        # schedule without divergence in a few minutes of CPU
        import time

        from foldgan import SimConfig, simulate_dataset

        cfg = SimConfig(
            P=8, D=8, n_households=118, pool_fraction=0.5,
            peak_hours=(2, 6), pump_daily_window=(2, 6), pump_season_window=(0, 4),
            seed=13,
        )
        pools = simulate_dataset(cfg).class_slice(1).subset(range(58))
        assert len(pools) == 58
        t0 = time.perf_counter()
        ckpt, log = train_wgan(pools, GanTrainConfig(seed=21), GanArch(latent_dim=128, p=8, d=8))
        elapsed = time.perf_counter() - t0
        assert ckpt.epochs_completed == 220
        assert len(log.rows) == 220
        assert all(np.isfinite([r.em_estimate, r.penalty, r.gen_loss]).all() for r in log.rows)
        assert elapsed < 600.0


class TestSample:
    def test_thousands_of_samples_one_label(self):
        ckpt, _ = train_wgan(toy_class_data(n=4, label=1, seed=8), GanTrainConfig(epochs=0, seed=4))
        out = sample(ckpt, 5000, seed=0)
        assert len(out) == 5000
        assert set(out.counts()) == {1}
        assert all(h.normalized for h in out.items[:10])

    def test_same_seed_identical(self):
        ckpt, _ = train_wgan(toy_class_data(n=4, seed=9), GanTrainConfig(epochs=1, seed=5))
        a = sample(ckpt, 8, seed=123)
        b = sample(ckpt, 8, seed=123)
        for ha, hb in zip(a.items, b.items):
            assert np.array_equal(ha.grid, hb.grid)

    def test_zero_weight_generator_constant_half(self):
        ckpt, _ = train_wgan(toy_class_data(n=4, seed=10), GanTrainConfig(epochs=0, seed=6))
        zeroed = {k: np.zeros_like(v) for k, v in ckpt.generator_state.items()}
        zeroed["bn1.running_var"] = ckpt.generator_state["bn1.running_var"].copy()
        zeroed["bn2.running_var"] = ckpt.generator_state["bn2.running_var"].copy()
        ckpt.generator_state.update(zeroed)
        out = sample(ckpt, 3, seed=7)
        for h in out.items:
            assert np.allclose(h.grid, 0.5)

    def test_rejects_non_positive_count(self):
        ckpt, _ = train_wgan(toy_class_data(n=4, seed=11), GanTrainConfig(epochs=0, seed=7))
        with pytest.raises(ConfigError):
            sample(ckpt, 0, seed=0)


class TestFitDims:
    def test_crop_to_multiple_of_8(self):
        h = Heatmap(np.random.default_rng(0).random((96, 395)), normalized=True)
        out = fit_dims(h, "crop")
        assert (out.P, out.D) == (96, 392)
        assert np.array_equal(out.grid, h.grid[:, :392])

    def test_pad_to_multiple_of_8(self):
        h = Heatmap(np.random.default_rng(1).random((96, 395)), normalized=True)
        out = fit_dims(h, "pad")
        assert (out.P, out.D) == (96, 400)
        assert np.array_equal(out.grid[:, :395], h.grid)
        assert np.all(out.grid[:, 395:] == 0.0)

    def test_crop_below_minimum_rejected(self):
        h = Heatmap(np.ones((4, 16)))
        with pytest.raises(ConfigError):
            fit_dims(h, "crop")
        padded = fit_dims(h, "pad")
        assert (padded.P, padded.D) == (8, 16)
