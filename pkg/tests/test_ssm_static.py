import math

import numpy as np
import pytest

from radiomamba.ssm import (
    DomainError,
    SsmParams,
    discretize_zoh,
    ssm_kernel,
    ssm_kernel_apply,
    ssm_scan_recurrent,
)


def zoh_oracle(a, b, delta):
    """Scalar closed form of the ZOH rule, evaluated with math.exp per entry."""
    abar = math.exp(delta * a)
    if abs(delta * a) < 1e-8:
        return abar, delta * b
    return abar, (math.exp(delta * a) - 1.0) / (delta * a) * delta * b


class TestDiscretize:
    def test_scalar_closed_form(self):
        d = discretize_zoh([-1.0], [1.0], 1.0)
        assert d.A_bar[0] == pytest.approx(0.367879441171442, abs=1e-12)
        assert d.B_bar[0] == pytest.approx(0.632120558828558, abs=1e-12)

    def test_taylor_branch(self):
        d = discretize_zoh([-1.0], [2.0], 1e-10)
        assert d.B_bar[0] == pytest.approx(2e-10, rel=1e-9)
        assert d.A_bar[0] == pytest.approx(1 - 1e-10, abs=1e-15)

    def test_two_entry_diagonal(self):
        d = discretize_zoh([-1.0, -2.0], [1.0, 1.0], 0.5)
        np.testing.assert_allclose(d.A_bar, [math.exp(-0.5), math.exp(-1.0)], atol=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_random_entries_against_oracle(self, seed):
        rng = np.random.default_rng(seed)
        A = -rng.uniform(0.01, 10, 16)
        B = rng.standard_normal(16)
        delta = float(rng.uniform(1e-3, 2))
        d = discretize_zoh(A, B, delta)
        for i in range(16):
            abar, bbar = zoh_oracle(A[i], B[i], delta)
            assert abs(d.A_bar[i] - abar) < 1e-12
            assert abs(d.B_bar[i] - bbar) < 1e-12

    def test_stable_decay(self):
        d = discretize_zoh(-np.arange(1, 9.0), np.ones(8), 0.3)
        assert np.all(np.abs(d.A_bar) < 1)

    def test_bad_delta(self):
        with pytest.raises(DomainError):
            discretize_zoh([-1.0], [1.0], 0.0)
        with pytest.raises(DomainError):
            SsmParams(A=[-1.0], B=[1.0], C=[1.0], D=0.0, delta=-1.0)
        with pytest.raises(DomainError):
            SsmParams(A=[1.0], B=[1.0], C=[1.0], D=0.0, delta=1.0)


class TestRecurrenceAndKernel:
    def _scalar(self, abar=0.5, bbar=1.0):
        from radiomamba.ssm import DiscreteSsm
        return DiscreteSsm(np.array([abar]), np.array([bbar]))

    def test_hand_recurrence(self):
        y = ssm_scan_recurrent(self._scalar(), [1.0], 0.0, [1.0, 0.0, 0.0])
        np.testing.assert_allclose(y, [1.0, 0.5, 0.25])

    def test_zero_input(self):
        assert not ssm_scan_recurrent(self._scalar(), [1.0], 0.0, np.zeros(5)).any()

    def test_pure_skip(self):
        u = np.random.default_rng(1).standard_normal(7)
        np.testing.assert_array_equal(ssm_scan_recurrent(self._scalar(), [0.0], 1.0, u), u)

    def test_kernel_powers(self):
        np.testing.assert_allclose(ssm_kernel(self._scalar(), [1.0], 3), [1.0, 0.5, 0.25])

    def test_impulse_response_is_kernel(self):
        rng = np.random.default_rng(2)
        d = discretize_zoh(-rng.uniform(0.1, 3, 4), rng.standard_normal(4), 0.2)
        C = rng.standard_normal(4)
        u = np.zeros(10)
        u[0] = 1
        np.testing.assert_allclose(ssm_kernel_apply(d, C, u), ssm_kernel(d, C, 10), atol=1e-15)

    def test_seed11_kernel_vs_recurrence(self):
        rng = np.random.default_rng(11)
        N = 8
        d = discretize_zoh(-rng.uniform(0.1, 4, N), rng.standard_normal(N), 0.1)
        C = rng.standard_normal(N)
        u = rng.standard_normal(32)
        diff = np.abs(ssm_kernel_apply(d, C, u) - ssm_scan_recurrent(d, C, 0.0, u)).max()
        assert diff < 1e-6

    @pytest.mark.parametrize("L", [1, 2, 17, 64, 128])
    def test_equivalence_lengths(self, L):
        rng = np.random.default_rng(L)
        d = discretize_zoh(-rng.uniform(0.05, 5, 6), rng.standard_normal(6), float(rng.uniform(0.01, 1)))
        C = rng.standard_normal(6)
        u = rng.standard_normal(L)
        assert np.abs(ssm_kernel_apply(d, C, u) - ssm_scan_recurrent(d, C, 0.0, u)).max() < 1e-6

    def test_bad_length(self):
        with pytest.raises(DomainError):
            ssm_kernel(self._scalar(), [1.0], 0)

    def test_non_finite_state_reports_step(self):
        from radiomamba.autodiff import NumericError
        with pytest.raises(NumericError, match="step 2"):
            ssm_scan_recurrent(self._scalar(), [1.0], 0.0, [1.0, 1.0, np.inf])
