"""Losses, optimizer, and checkpoint tests."""

import numpy as np
import pytest

from conformal_load.autodiff import Param, Tensor
from conformal_load.nn import (Adam, adam_step, load_checkpoint,
                               masked_frobenius_loss, masked_squared_loss,
                               pinball, pinball_loss, restore_params,
                               save_checkpoint)


class TestPinball:
    def test_underprediction_branch(self):
        assert pinball_loss(3.0, 1.0, 0.05) == pytest.approx(0.1)

    def test_overprediction_branch(self):
        assert pinball_loss(1.0, 3.0, 0.05) == pytest.approx(1.9)

    def test_zero_iff_equal(self):
        assert pinball_loss(2.0, 2.0, 0.3) == 0.0
        assert pinball_loss(2.0, 2.0001, 0.3) > 0.0

    def test_alpha_validation(self):
        for bad in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                pinball_loss(1.0, 0.0, bad)

    def test_minimizer_recovers_empirical_quantile(self):
        # brute-force scan over integer predictions against samples 1..100
        samples = np.arange(1.0, 101.0)
        alpha = 0.05
        losses = [np.mean([pinball_loss(y, yhat, alpha) for y in samples])
                  for yhat in range(1, 101)]
        best = 1 + int(np.argmin(losses))
        assert abs(best - np.quantile(samples, alpha)) <= 1.0

    @pytest.mark.parametrize("alpha", [0.025, 0.5, 0.975])
    def test_nonnegative_and_convex_midpoint(self, alpha):
        rng = np.random.default_rng(1)
        for _ in range(200):
            y, a, b = rng.normal(size=3) * 5
            fa = pinball_loss(y, a, alpha)
            fb = pinball_loss(y, b, alpha)
            fm = pinball_loss(y, 0.5 * (a + b), alpha)
            assert fa >= 0 and fb >= 0
            assert fm <= 0.5 * (fa + fb) + 1e-12

    def test_tensor_gradient_direction(self):
        y = Tensor(np.array([[2.0]]))
        yhat = Param("q", np.array([[0.0]]))
        loss = pinball(y, yhat.tensor, 0.9)
        loss.backward()
        # prediction below target at alpha=0.9: gradient pushes prediction up
        assert yhat.grad[0, 0] == pytest.approx(-0.9)


class TestMaskedFrobenius:
    def test_identity_is_zero(self):
        w = np.random.default_rng(0).normal(size=(3, 3))
        mask = np.ones((3, 3))
        assert masked_frobenius_loss(w, w * mask, mask).item() == 0.0

    def test_one_by_one(self):
        loss = masked_frobenius_loss(np.array([[3.0]]), np.array([[1.0]]),
                                     np.array([[1.0]]))
        assert loss.item() == pytest.approx(2.0, abs=1e-12)

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(3)
        w_hat = rng.normal(size=(4, 4))
        mask = (rng.random((4, 4)) < 0.5).astype(float)
        w_target = rng.normal(size=(4, 4)) * mask
        total = 0.0
        for i in range(4):
            for j in range(4):
                total += (mask[i, j] * w_hat[i, j] - w_target[i, j]) ** 2
        expected = np.sqrt(total)
        assert masked_frobenius_loss(w_hat, w_target, mask).item() == pytest.approx(
            expected, abs=1e-12)

    def test_gradient_respects_mask(self):
        rng = np.random.default_rng(4)
        w_hat = Param("w", rng.normal(size=(3, 3)))
        mask = np.zeros((3, 3))
        mask[0, 1] = 1.0
        target = np.zeros((3, 3))
        target[0, 1] = 5.0
        loss = masked_frobenius_loss(w_hat.tensor, target, mask)
        loss.backward()
        off_mask = w_hat.grad[mask == 0]
        assert np.all(off_mask == 0.0)
        assert w_hat.grad[0, 1] != 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            masked_frobenius_loss(np.ones((2, 2)), np.ones((3, 3)), np.ones((2, 2)))

    def test_masked_squared_no_sqrt(self):
        pred = np.array([[2.0], [4.0]])
        target = np.array([[1.0], [1.0]])
        mask = np.array([[1.0], [1.0]])
        assert masked_squared_loss(pred, target, mask).item() == pytest.approx(10.0)


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = Param("p", np.array([[1.0, 2.0]]))
        before = p.value.copy()
        opt = Adam([p], lr=0.1)
        opt.step()   # grad is zero (never backpropagated)
        assert np.array_equal(p.value, before)

    def test_descends_on_square(self):
        p = Param("w", np.array([[1.0]]))
        opt = Adam([p], lr=0.1)
        loss = lambda: (lambda t: t @ t)(p.tensor)
        l0 = loss()
        l0.backward()
        opt.step()
        assert p.value[0, 0] < 1.0

    def test_reaches_quadratic_minimizer(self):
        # f(w) = 0.5 (w - w*)^T Q (w - w*) with analytic minimizer w*
        target = np.array([[0.7, -0.4]])
        q = np.array([[2.0, 0.0], [0.0, 6.0]])
        p = Param("w", np.zeros((1, 2)))
        opt = Adam([p], lr=0.05)
        for _ in range(500):
            opt.zero_grad()
            import conformal_load.autodiff as ad
            diff = ad.sub(p.tensor, Tensor(target))
            loss = ad.tsum(ad.mul(diff @ Tensor(q), diff))
            loss.backward()
            opt.step()
        assert np.max(np.abs(p.value - target)) < 1e-3

    def test_adam_step_convenience(self):
        p = Param("p", np.ones((1, 1)))
        opt = adam_step([p], lr=0.1)
        assert isinstance(opt, Adam)

    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError):
            Adam([Param("x", np.ones((1, 1))), Param("x", np.ones((1, 1)))])

    def test_deterministic_given_state(self):
        runs = []
        for _ in range(2):
            import conformal_load.autodiff as ad
            p = Param("w", np.array([[2.0, -1.0]]))
            opt = Adam([p], lr=0.02)
            for _ in range(50):
                opt.zero_grad()
                ad.tsum(ad.mul(p.tensor, p.tensor)).backward()
                opt.step()
            runs.append(p.value.copy())
        assert np.array_equal(runs[0], runs[1])


class TestCheckpoints:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        params = [Param("layer0.weight", rng.normal(size=(3, 4))),
                  Param("bias", rng.normal(size=(1, 1)))]
        path = tmp_path / "ckpt.json"
        save_checkpoint(path, params, meta={"epochs": 12})
        state, meta = load_checkpoint(path)
        assert meta["epochs"] == 12
        for p in params:
            assert np.array_equal(state[p.name], p.value)

    def test_restore_into_fresh_params(self, tmp_path):
        src = [Param("w", np.full((2, 2), 7.0))]
        path = tmp_path / "c.json"
        save_checkpoint(path, src)
        dst = [Param("w", np.zeros((2, 2)))]
        state, _ = load_checkpoint(path)
        restore_params(dst, state)
        assert np.array_equal(dst[0].value, src[0].value)

    def test_restore_missing_param(self, tmp_path):
        path = tmp_path / "c.json"
        save_checkpoint(path, [Param("a", np.ones((1, 1)))])
        state, _ = load_checkpoint(path)
        with pytest.raises(KeyError):
            restore_params([Param("b", np.ones((1, 1)))], state)
