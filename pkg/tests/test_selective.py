import math

import numpy as np
import pytest

from radiomamba import autodiff as ad
from radiomamba.autodiff import NumericError, Parameter, Tensor
from radiomamba.ssm import (
    SelectiveParams,
    discretize_zoh,
    selective_discretize,
    selective_parameters,
    selective_scan,
    selective_scan_parallel,
    selective_scan_sequential,
)


def reference_scan(u, delta, A, Bs, Cs, D):
    """Plain float64 loops over the per-step ZOH recurrence."""
    Bn, L, C = u.shape
    N = A.shape[1]
    y = np.zeros((Bn, L, C))
    for b in range(Bn):
        h = np.zeros((C, N))
        for k in range(L):
            for c in range(C):
                for n in range(N):
                    x = delta[b, k, c] * A[c, n]
                    abar = math.exp(x)
                    bbar = delta[b, k, c] * Bs[b, k, n] if abs(x) < 1e-8 else (abar - 1) / A[c, n] * Bs[b, k, n]
                    h[c, n] = abar * h[c, n] + bbar * u[b, k, c]
                y[b, k] = h @ Cs[b, k] + D * u[b, k]
    return y


def random_inputs(rng, Bn, L, C, N, dtype=np.float64):
    u = rng.standard_normal((Bn, L, C))
    delta = rng.uniform(0.01, 0.5, (Bn, L, C))
    A = -rng.uniform(0.5, N + 1, (C, N))
    Bs = rng.standard_normal((Bn, L, N))
    Cs = rng.standard_normal((Bn, L, N))
    D = rng.standard_normal(C)
    return [Tensor(x, dtype=dtype) for x in (u, delta, A, Bs, Cs, D)]


def make_params(seed, C, N, dtype=np.float64):
    return SelectiveParams.init(C, N, np.random.default_rng(seed), dtype=dtype)


class TestSelectiveParameters:
    def test_zero_weights_give_ln2(self):
        p = make_params(0, 3, 2)
        p.W_delta.data[:] = 0
        p.b_delta.data[:] = 0
        u = Tensor(np.random.default_rng(1).standard_normal((2, 5, 3)))
        delta, _, _ = selective_parameters(u, p)
        np.testing.assert_allclose(delta.data, math.log(2), rtol=1e-12)

    def test_zero_input(self):
        p = make_params(0, 3, 2)
        _, Bs, Cs = selective_parameters(Tensor(np.zeros((1, 4, 3))), p)
        assert not Bs.data.any() and not Cs.data.any()

    def test_delta_positive_and_a_ladder(self):
        p = make_params(0, 4, 5)
        delta, _, _ = selective_parameters(Tensor(np.random.default_rng(2).standard_normal((2, 9, 4)) * 30), p)
        assert np.all(delta.data > 0)
        np.testing.assert_allclose(p.A().data, -np.tile(np.arange(1, 6.0), (4, 1)), rtol=1e-12)
        np.testing.assert_allclose(np.log1p(np.exp(p.b_delta.data)), 0.05, rtol=1e-12)

    def test_gradcheck_projections(self):
        rng = np.random.default_rng(3)
        p = make_params(4, 3, 2)
        u = Parameter(rng.standard_normal((1, 4, 3)), dtype=np.float64)
        def f():
            d, b, c = selective_parameters(u, p)
            return ad.sum(ad.mul(d, d)) + ad.sum(ad.mul(b, c))
        report = ad.gradcheck(f, [u, *p.tensors().values()], tol=1e-3)
        assert report.passed, report.summary()

    def test_shape_mismatch(self):
        with pytest.raises(ad.DimensionError):
            selective_parameters(Tensor(np.zeros((1, 4, 5))), make_params(0, 3, 2))


class TestSelectiveDiscretize:
    def test_constant_reduces_to_static(self):
        A = -np.array([[1.0, 2.0, 3.0]])
        delta = np.full((4, 1), 0.3)
        B = np.tile([0.5, -1.0, 2.0], (4, 1))
        abar, bbar = selective_discretize(A, delta, B)
        ref = discretize_zoh(A[0], B[0], 0.3)
        for k in range(4):
            np.testing.assert_array_equal(abar[k, 0], ref.A_bar)
            np.testing.assert_array_equal(bbar[k, 0], ref.B_bar)

    def test_scalar_step(self):
        abar, _ = selective_discretize(np.array([[-1.0]]), np.array([[0.2], [1.0]]), np.ones((2, 1)))
        assert abar[1, 0, 0] == pytest.approx(math.exp(-1), abs=1e-15)

    def test_doubling_delta_decays_more(self):
        A = np.array([[-1.5, -0.2]])
        a1, _ = selective_discretize(A, np.array([[0.4]]), np.ones((1, 2)))
        a2, _ = selective_discretize(A, np.array([[0.8]]), np.ones((1, 2)))
        assert np.all(a2 < a1)

    def test_taylor_guard(self):
        _, bbar = selective_discretize(np.array([[-1.0]]), np.array([[1e-10]]), np.array([[3.0]]))
        assert bbar[0, 0, 0] == pytest.approx(3e-10, rel=1e-9)


class TestSelectiveScan:
    @pytest.mark.parametrize("mode", ["sequential", "parallel"])
    @pytest.mark.parametrize("shape", [(1, 1, 1, 1), (2, 7, 3, 2), (1, 130, 2, 4), (2, 64, 3, 8)])
    def test_matches_reference(self, mode, shape):
        rng = np.random.default_rng(sum(shape))
        args = random_inputs(rng, *shape)
        y = selective_scan(*args, mode=mode)
        ref = reference_scan(*(t.data for t in args))
        np.testing.assert_allclose(y.data, ref, atol=1e-10)

    def test_zero_input_coupling_gives_skip(self):
        p = make_params(1, 4, 3)
        p.W_B.data[:] = 0
        u = Tensor(np.random.default_rng(0).standard_normal((2, 20, 4)))
        for fn in (selective_scan_sequential, selective_scan_parallel):
            np.testing.assert_allclose(fn(p, u).data, u.data * p.D.data, atol=1e-15)

    def test_single_step_hand_value(self):
        u, d, a, b, c, D = 0.7, 0.4, -2.0, 1.5, -0.8, 0.3
        args = [Tensor(np.array(v, dtype=np.float64).reshape(s))
                for v, s in ((u, (1, 1, 1)), (d, (1, 1, 1)), (a, (1, 1)), (b, (1, 1, 1)),
                             (c, (1, 1, 1)), (D, (1,)))]
        expected = c * (math.exp(d * a) - 1) / a * b * u + D * u
        for mode in ("sequential", "parallel"):
            assert selective_scan(*args, mode=mode).data.item() == pytest.approx(expected, abs=1e-15)

    def test_order_dependent(self):
        p = make_params(5, 3, 4)
        u = np.random.default_rng(5).standard_normal((1, 12, 3))
        y_fwd = selective_scan_sequential(p, Tensor(u)).data
        y_rev = selective_scan_sequential(p, Tensor(u[:, ::-1].copy())).data[:, ::-1]
        assert np.abs(y_fwd - y_rev).max() > 1e-3

    def test_seed13_parallel_vs_sequential_float32(self):
        p = make_params(13, 4, 8, dtype=np.float32)
        u = Tensor(np.random.default_rng(13).standard_normal((2, 64, 4)), dtype=np.float32)
        diff = np.abs(selective_scan_parallel(p, u).data - selective_scan_sequential(p, u).data).max()
        assert diff < 1e-5

    @pytest.mark.parametrize("L", [1, 63, 64, 65, 200])
    def test_parallel_vs_sequential_float64(self, L):
        args = random_inputs(np.random.default_rng(L), 2, L, 3, 4)
        diff = np.abs(selective_scan(*args, mode="parallel").data
                      - selective_scan(*args, mode="sequential").data).max()
        assert diff < 1e-10

    def test_parallel_backward_matches_sequential(self):
        args = random_inputs(np.random.default_rng(8), 1, 70, 2, 3)
        grads = []
        for mode in ("sequential", "parallel"):
            leaves = [Parameter(t.data, dtype=np.float64) for t in args]
            ad.sum(ad.square(selective_scan(*leaves, mode=mode))).backward()
            grads.append([t.grad for t in leaves])
        for gs, gp in zip(*grads):
            np.testing.assert_allclose(gp, gs, rtol=1e-9, atol=1e-10)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_gradcheck_raw_op(self, seed):
        rng = np.random.default_rng(seed)
        leaves = [Parameter(t.data, dtype=np.float64) for t in random_inputs(rng, 2, 6, 2, 3)]
        w = rng.standard_normal((2, 6, 2))
        report = ad.gradcheck(
            lambda: ad.sum(ad.mul(selective_scan(*leaves, mode="sequential"), Tensor(w))), leaves, tol=1e-4)
        assert report.passed, report.summary()

    def test_gradcheck_tiny_delta_taylor_branch(self):
        rng = np.random.default_rng(4)
        leaves = [Parameter(t.data, dtype=np.float64) for t in random_inputs(rng, 1, 5, 2, 2)]
        leaves[1].data[:] = 1e-9
        analytic = None
        y = selective_scan(*leaves)
        ad.sum(y).backward()
        analytic = leaves[3].grad.copy()
        # B enters linearly, so its gradient can be checked at a much smaller step
        report = ad.gradcheck(lambda: ad.sum(selective_scan(*leaves)), [leaves[3]], eps=1e-6, tol=1e-6)
        assert report.passed, report.summary()
        assert np.all(np.isfinite(analytic))

    @pytest.mark.parametrize("L,N", [(16, 4), (9, 2)])
    def test_gradcheck_through_projections(self, L, N):
        rng = np.random.default_rng(L)
        p = make_params(L, 3, N)
        u = Parameter(rng.standard_normal((2, L, 3)), dtype=np.float64)
        w = rng.standard_normal((2, L, 3))
        report = ad.gradcheck(lambda: ad.sum(ad.mul(selective_scan_sequential(p, u), Tensor(w))),
                              [u, *p.tensors().values()], tol=1e-3)
        assert report.passed, report.summary()

    def test_long_sequence_stays_finite(self):
        p = make_params(0, 4, 8, dtype=np.float64)
        u = Tensor(np.random.default_rng(0).uniform(-1, 1, (1, 4096, 4)))
        y = selective_scan_parallel(p, u)
        assert np.all(np.isfinite(y.data))
        assert np.abs(y.data).max() < 1e3

    def test_non_finite_reports_position(self):
        args = random_inputs(np.random.default_rng(0), 2, 5, 2, 2)
        args[0].data[1, 3, 0] = np.inf
        with pytest.raises(NumericError, match="batch 1, step 3"):
            selective_scan(*args, mode="sequential")
