"""Operator-level oracles: decay algebra, causal masking, batch and kernel
consistency, cache discipline, and composed-gradient finite differences."""

import numpy as np
import pytest

from tnn import rpe as rpe_mod
from tnn import toeplitz as tp
from tnn.errors import ConfigError, DimensionError
from tnn.tno import ToeplitzOperator

from conftest import central_diff, grad_rel_err, norm_rel_err


def make_net(out_dim=3, layers=2, hidden=4, seed=0):
    cfg = rpe_mod.RpeConfig(out_dim=out_dim, layers=layers, hidden_dim=hidden)
    return rpe_mod.init_rpe(cfg, np.random.default_rng(seed))


class TestEffectiveCoefficients:
    def test_no_decay_is_raw_table_bitwise(self):
        net = make_net(seed=1)
        op = ToeplitzOperator(net, decay_rate=1.0, causal=False)
        raw = rpe_mod.rpe_forward(net, 6).values
        assert (op.effective_coeffs(6).values == raw).all()

    def test_half_decay_unit_table(self):
        op = ToeplitzOperator(make_net(out_dim=2), decay_rate=0.5, causal=False, unit_coeffs=True)
        table = op.effective_coeffs(4).values
        assert table[3 + 2, 0] == 0.25  # offset k=2 -> 0.5^2
        assert table[3 - 2, 0] == 0.25
        assert table[3, 0] == 1.0

    def test_causal_masks_negative_offsets(self):
        op = ToeplitzOperator(make_net(seed=2), decay_rate=0.9, causal=True)
        n = 5
        table = op.effective_coeffs(n).values
        assert (table[: n - 1] == 0.0).all()
        assert (table[n - 1 :] != 0.0).any()
        # offset -1 row is the one just below center
        assert (table[op.effective_coeffs(n).offset_row(-1)] == 0.0).all()

    def test_zero_decay_keeps_only_diagonal(self):
        net = make_net(seed=3)
        op = ToeplitzOperator(net, decay_rate=0.0, causal=False)
        n = 4
        table = op.effective_coeffs(n).values
        raw = rpe_mod.rpe_forward(net, n).values
        assert (table[n - 1] == raw[n - 1]).all()  # 0^0 := 1
        mask = np.ones(2 * n - 1, dtype=bool)
        mask[n - 1] = False
        assert (table[mask] == 0.0).all()

    def test_decay_envelope_exact(self):
        op = ToeplitzOperator(make_net(out_dim=1), decay_rate=0.8, causal=False, unit_coeffs=True)
        n = 7
        table = op.effective_coeffs(n).values[:, 0]
        ks = np.abs(np.arange(-(n - 1), n))
        assert (table == 0.8 ** ks.astype(np.float64)).all()
        assert (np.diff(np.abs(table[n - 1 :])) <= 0).all()  # non-increasing in |k|

    def test_decay_out_of_range_rejected(self):
        with pytest.raises(ConfigError):
            ToeplitzOperator(make_net(), decay_rate=1.5)
        with pytest.raises(ConfigError):
            ToeplitzOperator(make_net(), decay_rate=-0.1)


class TestForward:
    def test_zero_input(self):
        op = ToeplitzOperator(make_net(), decay_rate=0.9, causal=True)
        y = op.forward(np.zeros((2, 5, 3)))
        assert (y == 0.0).all()

    def test_identity_at_n1(self):
        # single affine layer, weight irrelevant at k=0, bias 1 -> t_0 = 1
        cfg = rpe_mod.RpeConfig(out_dim=1, layers=1)
        net = rpe_mod.init_rpe(cfg, np.random.default_rng(0))
        net.weights[0][:] = 0.0
        net.biases[0][:] = 1.0
        op = ToeplitzOperator(net, decay_rate=1.0, causal=True)
        x = np.array([[[3.25]]])
        assert (op.forward(x) == x).all()

    def test_matches_naive_oracle(self, rng):
        op = ToeplitzOperator(make_net(out_dim=3, seed=5), decay_rate=0.95, causal=False)
        x = rng.standard_normal((2, 16, 3))
        y = op.forward(x)
        coeffs = op.effective_coeffs(16)
        for b in range(2):
            ref = tp.naive_matvec(coeffs, x[b])
            assert norm_rel_err(y[b], ref) < 1e-9

    def test_batch_consistency_bitwise(self, rng):
        op = ToeplitzOperator(make_net(seed=6), decay_rate=0.9, causal=True)
        x = rng.standard_normal((4, 12, 3))
        batched = op.forward(x)
        for b in range(4):
            single = op.forward(x[b])
            assert (batched[b] == single).all()
        exact_batched = op.forward(x, path="exact")
        for b in range(4):
            assert (exact_batched[b] == op.forward(x[b], path="exact")).all()

    def test_exact_path_matches_fft_path(self, rng):
        op = ToeplitzOperator(make_net(seed=7), decay_rate=0.9, causal=True)
        x = rng.standard_normal((2, 20, 3))
        assert norm_rel_err(op.forward(x, path="exact"), op.forward(x, path="fft")) < 1e-11

    def test_causality_bit_exact_on_exact_path(self, rng):
        op = ToeplitzOperator(make_net(seed=8), decay_rate=0.9, causal=True)
        n = 24
        x = rng.standard_normal((n, 3))
        base = op.forward(x, path="exact")
        for _ in range(25):
            cut = int(rng.integers(1, n))
            x2 = x.copy()
            x2[cut:] = rng.standard_normal((n - cut, 3))
            assert (op.forward(x2, path="exact")[:cut] == base[:cut]).all()

    def test_length_extension_bit_exact_on_exact_path(self, rng):
        op = ToeplitzOperator(make_net(seed=9), decay_rate=0.9, causal=True)
        x = rng.standard_normal((40, 3))
        short = op.forward(x[:16], path="exact")
        long = op.forward(x, path="exact")
        assert (long[:16] == short).all()

    def test_training_forward_matches_inference(self, rng):
        op = ToeplitzOperator(make_net(seed=10), decay_rate=0.9, causal=True)
        x = rng.standard_normal((2, 8, 3))
        y_train, _ = op.forward_training(x)
        assert (y_train == op.forward(x)).all()

    def test_input_validation(self, rng):
        op = ToeplitzOperator(make_net(out_dim=3), decay_rate=0.9)
        with pytest.raises(DimensionError):
            op.forward(rng.standard_normal((4, 2)))  # wrong channel count
        with pytest.raises(ValueError):
            op.forward(np.full((4, 3), np.nan))
        with pytest.raises(ConfigError):
            op.forward(rng.standard_normal((4, 3)), path="magic")
        noncausal = ToeplitzOperator(make_net(out_dim=3), decay_rate=0.9, causal=False)
        with pytest.raises(ConfigError):
            noncausal.forward(rng.standard_normal((4, 3)), path="exact")


class TestCache:
    def test_cache_hit_and_invalidation(self):
        op = ToeplitzOperator(make_net(seed=11), decay_rate=0.9, causal=True)
        a = op.effective_coeffs(6)
        b = op.effective_coeffs(6)
        assert a is b
        op.net.biases[1][:] += 0.5  # output layer bias shifts every coefficient
        op.bump_version()
        c = op.effective_coeffs(6)
        assert c is not a
        assert not (c.values == a.values).all()

    def test_training_path_ignores_stale_cache(self, rng):
        op = ToeplitzOperator(make_net(seed=12), decay_rate=0.9, causal=True)
        x = rng.standard_normal((1, 6, 3))
        op.effective_coeffs(6)  # populate cache
        op.net.weights[0][0, 0] += 0.5  # mutate without bumping
        y_fresh, _ = op.forward_training(x)
        op.bump_version()
        assert (op.forward(x) == y_fresh).all()


class TestBackward:
    def test_zero_grad(self, rng):
        decay = np.array([0.9])
        op = ToeplitzOperator(make_net(seed=13), decay_rate=decay, causal=True)
        x = rng.standard_normal((2, 6, 3))
        _, ctx = op.forward_training(x)
        grad_x, grads = op.backward(ctx, np.zeros_like(x))
        assert (grad_x == 0.0).all()
        assert all((g == 0.0).all() for g in grads.values())
        assert grads["decay"].shape == (1,)

    def test_zero_decay_gradient_reaches_only_offset_zero(self, rng):
        cfg = rpe_mod.RpeConfig(out_dim=2, layers=1)
        net = rpe_mod.init_rpe(cfg, np.random.default_rng(14))
        op = ToeplitzOperator(net, decay_rate=0.0, causal=False)
        n = 5
        x = rng.standard_normal((1, n, 2))
        y, ctx = op.forward_training(x)
        g = rng.standard_normal(y.shape)
        _, grads = op.backward(ctx, g)
        # affine net: dL/dw = sum_k k * grad_raw_k; only the k=0 row of
        # grad_raw survives lambda=0, so the weight gradient vanishes and
        # the bias gradient equals the offset-0 effective gradient
        assert np.allclose(grads["rpe_w0"], 0.0, atol=1e-14)
        expect_b = np.einsum("bic,bic->c", g, x)
        assert norm_rel_err(grads["rpe_b0"], expect_b) < 1e-12

    @pytest.mark.parametrize("causal", [False, True])
    def test_finite_differences(self, rng, causal):
        decay = np.array([0.7])
        net = make_net(out_dim=2, layers=3, hidden=4, seed=15)
        op = ToeplitzOperator(net, decay_rate=decay, causal=causal)
        n, batch = 12, 2
        x = rng.standard_normal((batch, n, 2))
        proj = rng.standard_normal((batch, n, 2))

        def loss():
            y, _ = op.forward_training(x)
            return float(np.sum(proj * y))

        _, ctx = op.forward_training(x)
        grad_x, grads = op.backward(ctx, proj)
        assert grad_rel_err(grad_x, central_diff(loss, x)) < 1e-5
        for i in range(3):
            assert grad_rel_err(grads[f"rpe_w{i}"], central_diff(loss, net.weights[i])) < 1e-5
            assert grad_rel_err(grads[f"rpe_b{i}"], central_diff(loss, net.biases[i])) < 1e-5
        assert grad_rel_err(grads["decay"], central_diff(loss, decay)) < 1e-5

    def test_learnable_decay_aliasing_and_clamp(self):
        decay = np.array([0.9])
        op = ToeplitzOperator(make_net(), decay_rate=decay, causal=True)
        decay[0] = 0.5
        assert op.decay_rate == 0.5
        decay[0] = 1.3
        op.clamp_decay()
        assert op.decay_rate == 1.0
