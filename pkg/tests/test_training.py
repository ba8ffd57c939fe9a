"""Loss, optimizer, and both training schemes."""

import math

import numpy as np
import pytest

import tbf
from tbf.layer import SIGMA_FLOOR, SigmaGrad, SigmaParams
from tbf.pipeline import FilterPipeline, pipeline_backward, pipeline_forward
from tbf.training import (
    AdamState,
    TrainConfig,
    adam_step,
    make_pipeline,
    mse_loss,
    n2v_perturb,
    train_n2v,
    train_supervised,
)
from tbf.volume import Volume, flat_index, new_filled

from conftest import random_volume
from oracles import adam_trajectory


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.init_sigma_spatial == 0.5
        assert cfg.init_sigma_range == 0.01
        assert cfg.lr_spatial == 0.01
        assert cfg.lr_range == 0.005
        assert cfg.max_iters == 5000
        assert cfg.n2v_mask_ratio == 0.01
        assert cfg.n2v_window == 5

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"lr_spatial": 0.0},
            {"lr_range": -1.0},
            {"max_iters": 0},
            {"mode": "unsupervised"},
            {"n2v_mask_ratio": 0.0},
            {"n2v_mask_ratio": 1.0},
            {"n2v_window": 4},
            {"n2v_window": 1},
            {"init_sigma_range": 0.0},
            {"adam_beta1": 1.0},
        ],
    )
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestMseLoss:
    def test_identical_volumes(self):
        v = random_volume((3, 3, 3), seed=0)
        loss, grad = mse_loss(v, v)
        assert loss == 0.0
        assert np.all(grad.data == 0.0)

    def test_two_voxel_hand_case(self):
        pred = Volume((2, 1, 1), [1.0, 1.0])
        target = Volume((2, 1, 1), [0.0, 2.0])
        loss, grad = mse_loss(pred, target)
        assert loss == 1.0
        assert grad.data.tolist() == [1.0, -1.0]

    def test_masked_variant(self):
        pred = Volume((2, 1, 1), [1.0, 1.0])
        target = Volume((2, 1, 1), [0.0, 2.0])
        loss, grad = mse_loss(pred, target, mask=np.array([0]))
        assert loss == 1.0
        assert grad.data.tolist() == [2.0, 0.0]

    def test_errors(self):
        a = new_filled((2, 2, 2), 0.0)
        b = new_filled((2, 2, 1), 0.0)
        with pytest.raises(ValueError):
            mse_loss(a, b)
        with pytest.raises(ValueError):
            mse_loss(a, a, mask=np.array([], dtype=int))
        with pytest.raises(ValueError):
            mse_loss(a, a, mask=np.array([8]))
        with pytest.raises(ValueError):
            mse_loss(a, a, mask=np.array([1, 1]))


class TestAdamStep:
    def test_first_step_magnitude_is_learning_rate(self):
        cfg = TrainConfig()
        fp = make_pipeline(1, cfg)
        state = AdamState.for_depth(1)
        adam_step(state, fp, [SigmaGrad(3.7, -120.0, 0.004, 2.0)], cfg)
        p = fp.layers[0]
        assert p.sigma_x == pytest.approx(0.5 - cfg.lr_spatial, rel=1e-6)
        assert p.sigma_y == pytest.approx(0.5 + cfg.lr_spatial, rel=1e-6)
        assert p.sigma_z == pytest.approx(0.5 - cfg.lr_spatial, rel=1e-4)
        assert p.sigma_r == pytest.approx(0.01 - cfg.lr_range, rel=1e-6)

    def test_zero_gradient_leaves_params_unchanged(self):
        cfg = TrainConfig()
        fp = make_pipeline(2, cfg)
        state = AdamState.for_depth(2)
        before = [p.as_array().copy() for p in fp.layers]
        adam_step(state, fp, [SigmaGrad(0, 0, 0, 0)] * 2, cfg)
        for p, b in zip(fp.layers, before):
            assert np.array_equal(p.as_array(), b)

    def test_quadratic_toy_loss_matches_scalar_reference(self):
        # Minimize (sigma_x - 1)^2 from 0.5; remaining widths get zero
        # gradient and must hold still.
        cfg = TrainConfig()
        fp = make_pipeline(1, cfg)
        state = AdamState.for_depth(1)
        seen = [fp.layers[0].sigma_x]
        for _ in range(100):
            g = 2.0 * (fp.layers[0].sigma_x - 1.0)
            adam_step(state, fp, [SigmaGrad(g, 0.0, 0.0, 0.0)], cfg)
            seen.append(fp.layers[0].sigma_x)
        ref = adam_trajectory(
            0.5,
            lambda t: 2.0 * (t - 1.0),
            lr=cfg.lr_spatial,
            steps=100,
            floor=SIGMA_FLOOR,
        )
        np.testing.assert_allclose(seen, ref, rtol=1e-12)
        assert abs(seen[-1] - 1.0) < 0.2
        assert seen[-1] > seen[0]
        assert fp.layers[0].sigma_y == 0.5 and fp.layers[0].sigma_r == 0.01

    def test_clamps_at_floor(self):
        cfg = TrainConfig()
        fp = FilterPipeline([SigmaParams(0.5, 0.5, 0.5, 2e-6)])
        state = AdamState.for_depth(1)
        for _ in range(5):
            adam_step(state, fp, [SigmaGrad(0.0, 0.0, 0.0, 50.0)], cfg)
        assert fp.layers[0].sigma_r == SIGMA_FLOOR

    def test_non_finite_gradient_names_layer_and_param(self):
        cfg = TrainConfig()
        fp = make_pipeline(3, cfg)
        state = AdamState.for_depth(3)
        grads = [SigmaGrad(0, 0, 0, 0), SigmaGrad(0, 0, float("nan"), 0), SigmaGrad(0, 0, 0, 0)]
        with pytest.raises(ValueError, match="layer 1 sigma_z"):
            adam_step(state, fp, grads, cfg)

    def test_state_depth_mismatch(self):
        cfg = TrainConfig()
        fp = make_pipeline(2, cfg)
        with pytest.raises(ValueError):
            adam_step(AdamState.for_depth(3), fp, [SigmaGrad(0, 0, 0, 0)] * 2, cfg)


class TestTrainSupervised:
    def test_noise_free_target_reduces_loss(self, phantom_pair):
        clean, _ = phantom_pair
        cfg = TrainConfig(max_iters=60)
        fp, hist = train_supervised(clean, clean, 1, cfg)
        assert hist[-1].loss < hist[0].loss
        out = pipeline_forward(clean, fp).output
        assert float(np.mean((out.data - clean.data) ** 2)) < hist[0].loss

    def test_denoising_gains_at_least_3db(self, phantom_pair):
        clean, noisy = phantom_pair
        cfg = TrainConfig(max_iters=120)
        fp, _ = train_supervised(noisy, clean, 1, cfg)
        out = pipeline_forward(noisy, fp).output
        mc = tbf.MetricConfig()
        assert tbf.psnr(out, clean, mc) >= tbf.psnr(noisy, clean, mc) + 3.0

    def test_running_best_is_monotone_and_returned(self, phantom_pair):
        clean, noisy = phantom_pair
        cfg = TrainConfig(max_iters=40)
        fp, hist = train_supervised(noisy, clean, 1, cfg)
        losses = [h.loss for h in hist]
        best = np.minimum.accumulate(losses)
        assert np.all(np.diff(best) <= 0.0)
        returned_loss, _ = mse_loss(pipeline_forward(noisy, fp).output, clean)
        assert returned_loss == min(losses)

    def test_sigma_floor_holds_every_iteration(self, phantom_pair):
        clean, noisy = phantom_pair
        cfg = TrainConfig(max_iters=30)
        _, hist = train_supervised(noisy, clean, 2, cfg)
        for rep in hist:
            for p in rep.params:
                assert min(p.as_array()) >= SIGMA_FLOOR

    def test_rerun_is_bit_identical(self, phantom_pair):
        clean, noisy = phantom_pair
        cfg = TrainConfig(max_iters=25)
        fp_a, hist_a = train_supervised(noisy, clean, 2, cfg)
        fp_b, hist_b = train_supervised(noisy, clean, 2, cfg)
        assert [h.loss for h in hist_a] == [h.loss for h in hist_b]
        for pa, pb in zip(fp_a.layers, fp_b.layers):
            assert pa == pb

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            train_supervised(
                new_filled((4, 4, 1), 0.0), new_filled((4, 4, 2), 0.0), 1, TrainConfig()
            )

    def test_bad_depth(self):
        v = new_filled((4, 4, 1), 0.0)
        with pytest.raises(ValueError):
            train_supervised(v, v, 0, TrainConfig())


class TestN2VPerturb:
    def test_mask_size_is_ceil_of_ratio(self):
        x = random_volume((512, 512, 1), seed=0)
        cfg = TrainConfig(mode="noise2void")
        rng = np.random.default_rng(0)
        perturbed, mask = n2v_perturb(x, cfg, rng)
        assert len(mask) == 2622  # ceil(0.01 * 262144)
        assert len(set(mask.tolist())) == len(mask)

    def test_constant_volume_perturbs_to_itself(self):
        x = new_filled((10, 10, 1), 0.3)
        cfg = TrainConfig(mode="noise2void")
        perturbed, mask = n2v_perturb(x, cfg, np.random.default_rng(1))
        assert np.array_equal(perturbed.data, x.data)
        assert len(mask) == 1  # ceil(0.01 * 100)

    def test_same_seed_reproduces_exactly(self):
        x = random_volume((16, 16, 4), seed=2)
        cfg = TrainConfig(mode="noise2void")
        pa, ma = n2v_perturb(x, cfg, np.random.default_rng(7))
        pb, mb = n2v_perturb(x, cfg, np.random.default_rng(7))
        assert np.array_equal(ma, mb)
        assert np.array_equal(pa.data, pb.data)

    def test_replacement_comes_from_window_not_center(self):
        x = random_volume((9, 9, 3), seed=3)  # distinct values everywhere
        cfg = TrainConfig(mode="noise2void")
        perturbed, mask = n2v_perturb(x, cfg, np.random.default_rng(4))
        changed = 0
        for flat in mask:
            new_val = perturbed.data[flat]
            center = tbf.unflatten(x, int(flat))
            window_vals = {
                x.value_at(q)
                for q in tbf.clipped_window(x, center, (2, 2, 2))
                if q != center
            }
            assert new_val in window_vals
            if new_val != x.data[flat]:
                changed += 1
        assert changed > 0

    def test_input_untouched_and_tiny_volume_rejected(self):
        x = random_volume((6, 6, 1), seed=5)
        before = x.data.copy()
        n2v_perturb(x, TrainConfig(), np.random.default_rng(0))
        assert np.array_equal(x.data, before)
        with pytest.raises(ValueError):
            n2v_perturb(new_filled((1, 1, 1), 0.0), TrainConfig(), np.random.default_rng(0))


class TestTrainN2V:
    def test_improves_noisy_volume(self, phantom_pair):
        clean, noisy = phantom_pair
        cfg = TrainConfig(max_iters=120, mode="noise2void")
        fp, hist = train_n2v(noisy, 1, cfg)
        out = pipeline_forward(noisy, fp).output
        mc = tbf.MetricConfig()
        assert tbf.psnr(out, clean, mc) >= tbf.psnr(noisy, clean, mc) + 2.0

    def test_noise_free_input_does_not_diverge(self, phantom_pair):
        clean, _ = phantom_pair
        cfg = TrainConfig(max_iters=80, mode="noise2void")
        fp, hist = train_n2v(clean, 2, cfg)
        assert all(math.isfinite(h.loss) for h in hist)
        out = pipeline_forward(clean, fp).output
        assert tbf.psnr(out, clean, tbf.MetricConfig()) >= 40.0

    def test_same_seed_identical_history(self, phantom_pair):
        _, noisy = phantom_pair
        cfg = TrainConfig(max_iters=15, mode="noise2void", seed=3)
        _, ha = train_n2v(noisy, 1, cfg)
        _, hb = train_n2v(noisy, 1, cfg)
        assert [h.loss for h in ha] == [h.loss for h in hb]

    def test_masked_gradient_is_local(self):
        # With a single masked voxel, the input gradient of the masked
        # loss reaches at most one filter window beyond that voxel per
        # layer.
        x = random_volume((13, 13, 1), seed=6)
        p = SigmaParams(0.5, 0.5, 0.5, 0.5)  # radius 3
        fp = FilterPipeline([p])
        tape = pipeline_forward(x, fp)
        center = flat_index(x, (6, 6, 0))
        _, grad = mse_loss(tape.output, x, mask=np.array([center]))
        _, gi = pipeline_backward(tape, grad)
        g2 = gi.as3d()[0]
        outside = g2.copy()
        outside[3:10, 3:10] = 0.0
        assert np.any(g2[3:10, 3:10] != 0.0)
        assert np.all(outside == 0.0)
