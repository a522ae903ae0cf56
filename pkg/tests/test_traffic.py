import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsmud.randset import SlotState, popcount
from rsmud.traffic import (TrafficModel, birth_kernel, evolve_masks,
                           sample_initial_masks, static_prior,
                           stationary_activity, survival_kernel,
                           transition_density, transition_matrix)

params = st.tuples(st.integers(1, 6), st.floats(0.05, 0.95), st.floats(0.05, 0.95),
                   st.integers(0, 2 ** 31 - 1))


class TestStaticPrior:
    def test_k2_example(self):
        f = static_prior(TrafficModel(2, 0.3))
        assert f.mass() == pytest.approx([0.49, 0.21, 0.21, 0.09], abs=1e-12)

    def test_symmetric_alpha(self):
        f = static_prior(TrafficModel(2, 0.5))
        assert np.allclose(f.mass(), 0.25, atol=1e-12)

    def test_data_factor(self):
        f = static_prior(TrafficModel(1, 0.5, N=1))
        assert f.p(SlotState(0)) == pytest.approx(0.5, abs=1e-12)
        assert f.p(SlotState(1, 0b0)) == pytest.approx(0.25, abs=1e-12)
        assert f.p(SlotState(1, 0b1)) == pytest.approx(0.25, abs=1e-12)

    def test_reference_user_halves(self):
        f = static_prior(TrafficModel(1, 0.4, N=1), ref_user=True)
        assert f.p(SlotState(0, ref_bit=+1)) == pytest.approx(0.3, abs=1e-12)
        assert f.total_mass() == pytest.approx(1.0, abs=1e-12)


class TestKernels:
    def test_survival_empty(self):
        f = survival_kernel(TrafficModel(2, 0.2, 0.8), 0)
        assert f.p(SlotState(0)) == pytest.approx(1.0)

    def test_survival_full_example(self):
        f = survival_kernel(TrafficModel(2, 0.2, 0.8), 0b11)
        assert f.mass() == pytest.approx([0.04, 0.16, 0.16, 0.64], abs=1e-12)

    def test_birth_no_room(self):
        f = birth_kernel(TrafficModel(2, 0.2, 0.8), 0b11)
        assert f.p(SlotState(0)) == pytest.approx(1.0)

    def test_birth_example(self):
        f = birth_kernel(TrafficModel(2, 0.2, 0.8), 0b01)
        assert f.p(SlotState(0)) == pytest.approx(0.8, abs=1e-12)
        assert f.p(SlotState(0b10)) == pytest.approx(0.2, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(params)
    def test_row_sums(self, p):
        k, alpha, mu, seed = p
        b = int(np.random.default_rng(seed).integers(0, 1 << k))
        n = int(seed % 2)
        m = TrafficModel(k, alpha, mu, n)
        for f in (survival_kernel(m, b), birth_kernel(m, b), transition_density(m, b)):
            assert f.total_mass() == pytest.approx(1.0, abs=1e-12)

    def test_support_constraints_exhaustive(self):
        for k in range(1, 7):
            m = TrafficModel(k, 0.3, 0.6)
            for b in range(1 << k):
                surv = survival_kernel(m, b).mass()
                born = birth_kernel(m, b).mass()
                for c in range(1 << k):
                    if c & ~b:
                        assert surv[c] == 0.0
                    if c & b:
                        assert born[c] == 0.0


class TestTransition:
    def test_example_row(self):
        f = transition_density(TrafficModel(2, 0.2, 0.8), 0b01)
        assert f.mass() == pytest.approx([0.16, 0.64, 0.04, 0.16], abs=1e-12)

    def test_mu_equals_alpha_collapses_to_prior(self):
        m = TrafficModel(3, 0.35, 0.35)
        prior = static_prior(m).mass()
        for b in range(8):
            row = transition_density(m, b).mass()
            assert np.max(np.abs(row - prior)) < 1e-12

    def test_empty_row_is_static_prior(self):
        m = TrafficModel(3, 0.25, 0.9)
        row = transition_density(m, 0).mass()
        assert np.max(np.abs(row - static_prior(m).mass())) < 1e-12

    def test_matrix_matches_rows(self):
        m = TrafficModel(3, 0.3, 0.7)
        t = transition_matrix(m)
        for b in range(8):
            assert np.max(np.abs(t[b] - transition_density(m, b).mass())) < 1e-12

    def test_data_marginalization(self):
        # with N=1, summing data bits out of any kernel recovers the N=0 table
        m1 = TrafficModel(2, 0.3, 0.6, N=1)
        m0 = TrafficModel(2, 0.3, 0.6, N=0)
        for b in range(4):
            for k1, k0 in ((survival_kernel(m1, b), survival_kernel(m0, b)),
                           (birth_kernel(m1, b), birth_kernel(m0, b)),
                           (transition_density(m1, b), transition_density(m0, b))):
                marg = k1.marginal_identity()
                assert np.max(np.abs(marg.mass() - k0.mass())) < 1e-12
        f1 = static_prior(m1).marginal_identity()
        assert np.max(np.abs(f1.mass() - static_prior(m0).mass())) < 1e-12


class TestStationary:
    def test_example(self):
        assert stationary_activity(TrafficModel(1, 0.2, 0.8)) == pytest.approx(0.5)

    def test_iid_case(self):
        assert stationary_activity(TrafficModel(1, 0.3, 0.3)) == pytest.approx(0.3)

    def test_alpha_zero(self):
        assert stationary_activity(TrafficModel(1, 0.0, 0.5)) == 0.0

    def test_absorbing_rejected(self):
        with pytest.raises(ValueError):
            stationary_activity(TrafficModel(1, 0.0, 1.0))

    def test_chain_frequency(self):
        # 200 chains x 2000 steps; tolerance uses the AR(1) asymptotic
        # variance (autocorrelation rho = mu - alpha)
        m = TrafficModel(1, 0.2, 0.8)
        rng = np.random.default_rng(5)
        n, steps = 200, 2000
        masks = sample_initial_masks(static_prior(TrafficModel(1, 0.2, 0.8, 0)), n, rng)
        acc = 0
        for _ in range(steps):
            masks = evolve_masks(m, masks, rng)
            acc += int(np.sum(masks))
        freq = acc / (n * steps)
        p = stationary_activity(m)
        rho = m.mu - m.alpha
        sigma = math.sqrt(p * (1 - p) * (1 + rho) / (1 - rho) / (n * steps))
        assert abs(freq - p) < 3 * sigma + 1e-4


def test_invalid_parameters():
    with pytest.raises(ValueError):
        TrafficModel(2, -0.1, 0.5)
    with pytest.raises(ValueError):
        TrafficModel(2, 0.5, 1.5)
