import itertools
import math

import numpy as np
import pytest
from scipy import integrate

from rsmud.analysis import (PairContext, markov_sequence_log_density,
                            pair_from_states, pep, pep_from_xi_eta,
                            q_function, semianalytic_dynamic_bound,
                            t_min_open_eye, union_bound_static, xi_eta,
                            xi_statistic, _initial_log_density)
from rsmud.channel import ChannelModel
from rsmud.randset import SlotState, Universe
from rsmud.traffic import TrafficModel, transition_matrix
from conftest import make_channel


def static_pair(universe, c, mask_x, mask_h, training, dynamic=False):
    horizon = training.shape[0]
    return pair_from_states(universe, c, [SlotState(mask_x)] * horizon,
                            [SlotState(mask_h)] * horizon, training=training,
                            dynamic=dynamic)


class TestQFunction:
    def test_zero(self):
        assert q_function(0.0) == pytest.approx(0.5, abs=1e-15)

    def test_symmetry(self):
        for x in np.linspace(-4, 4, 17):
            assert q_function(x) + q_function(-x) == pytest.approx(1.0, abs=1e-12)

    def test_against_quadrature(self):
        for x in (0.5, 1.0, 2.0, 3.0):
            tail, _ = integrate.quad(
                lambda t: math.exp(-t * t / 2) / math.sqrt(2 * math.pi), x, 40)
            assert q_function(x) == pytest.approx(tail, abs=1e-12)
        assert q_function(3.0) == pytest.approx(1.349898e-3, abs=1e-9)

    def test_vectorized(self):
        x = np.array([0.0, 1.0, -1.0])
        out = q_function(x)
        assert out.shape == (3,)


class TestXi:
    def test_identical_pair_zero(self):
        c = ChannelModel(np.eye(1), np.ones(1), 1.0)
        u = Universe(1)
        ctx = static_pair(u, c, 1, 1, np.ones((2, 1)))
        assert xi_statistic(ctx) == 0.0

    def test_single_flipped_bit(self):
        # one user, flipped bit, a=1, r=1, one slot: d = +-2 so xi = 4
        c = ChannelModel(np.eye(1), np.ones(1), 1.0)
        u = Universe(1, 1)
        ctx = pair_from_states(u, c, [SlotState(1, 0b0)], [SlotState(1, 0b1)])
        assert xi_statistic(ctx) == pytest.approx(4.0, abs=1e-12)

    def test_trace_form_oracle(self, rng):
        for _ in range(100):
            k = int(rng.integers(1, 5))
            horizon = int(rng.integers(1, 4))
            chips = rng.normal(size=(k, 16))
            chips /= np.linalg.norm(chips, axis=1, keepdims=True)
            r = chips @ chips.T
            r = (r + r.T) / 2
            c = ChannelModel(r, rng.uniform(0.5, 2.0, size=k), 1.0)
            d = rng.choice([-2.0, -1.0, 0.0, 1.0, 2.0], size=(horizon, k))
            ctx = PairContext(d, (0,) * horizon, (1,) * horizon, c)
            a_mat = np.diag(c.amplitudes)
            trace = sum(np.trace(c.R @ a_mat @ np.outer(d[t], d[t]) @ a_mat)
                        for t in range(horizon))
            assert xi_statistic(ctx) == pytest.approx(trace, abs=1e-10)

    def test_additivity_over_concatenation(self, rng):
        u = Universe(3)
        c = make_channel(3, 0.5)
        tr1 = 1.0 - 2.0 * rng.integers(0, 2, (2, 3)).astype(float)
        tr2 = 1.0 - 2.0 * rng.integers(0, 2, (3, 3)).astype(float)
        both = np.vstack([tr1, tr2])
        x, h = 0b101, 0b011
        xi1 = xi_statistic(static_pair(u, c, x, h, tr1))
        xi2 = xi_statistic(static_pair(u, c, x, h, tr2))
        xi12 = xi_statistic(static_pair(u, c, x, h, both))
        assert xi12 == pytest.approx(xi1 + xi2, abs=1e-12)

    def test_difference_structure_validated(self):
        c = ChannelModel(np.eye(1), np.ones(1), 1.0)
        with pytest.raises(ValueError):
            PairContext(np.array([[3.0]]), (0,), (1,), c)


class TestEta:
    def test_ml_zero(self):
        u = Universe(2)
        c = make_channel(2, 0.5)
        m = TrafficModel(2, 0.2, 0.7)
        ctx = static_pair(u, c, 0b01, 0b10, np.ones((1, 2)))
        assert xi_eta(ctx, m, "ml")[1] == 0.0

    def test_static_map_prior_ratio(self):
        u = Universe(2)
        c = make_channel(2, 0.5)
        m = TrafficModel(2, 0.2, 0.7)
        ctx = static_pair(u, c, 0b01, 0b11, np.ones((1, 2)))
        _, eta = xi_eta(ctx, m, "map_identities")
        expect = c.N0 * math.log((0.2 ** 2) / (0.2 * 0.8))
        assert eta == pytest.approx(expect, abs=1e-12)

    def test_dynamic_chain_ratio(self):
        u = Universe(1)
        c = make_channel(1, 0.5)
        m = TrafficModel(1, 0.3, 0.7)
        seq_x = [SlotState(1), SlotState(1)]
        seq_h = [SlotState(0), SlotState(1)]
        ctx = pair_from_states(u, c, seq_x, seq_h, training=np.ones((2, 1)), dynamic=True)
        _, eta = xi_eta(ctx, m, "map_identities")
        log_f1 = _initial_log_density(m, None)
        log_t = np.log(transition_matrix(m))
        expect = c.N0 * ((log_f1[0] + log_t[0, 1]) - (log_f1[1] + log_t[1, 1]))
        assert eta == pytest.approx(expect, abs=1e-12)

    def test_data_cardinality_term(self):
        u = Universe(2, 1)
        c = make_channel(2, 0.5)
        m = TrafficModel(2, 0.3, 0.7, 1)
        seq_x = [SlotState(0b11, 0b00)]
        seq_h = [SlotState(0b01, 0b0)]
        ctx = pair_from_states(u, c, seq_x, seq_h, dynamic=True)
        _, eta_id = xi_eta(ctx, m, "map_identities")
        _, eta_data = xi_eta(ctx, m, "map_with_data")
        assert eta_data - eta_id == pytest.approx(c.N0 * math.log(2.0) * (2 - 1), abs=1e-12)


class TestPep:
    def test_identical_rejected(self):
        u = Universe(1)
        c = make_channel(1, 0.5)
        m = TrafficModel(1, 0.3, 0.7)
        ctx = static_pair(u, c, 1, 1, np.ones((1, 1)))
        with pytest.raises(ValueError):
            pep(ctx, m, "ml")

    def test_bpsk_reduction(self):
        # single-user flipped bit under ML: Q(sqrt(2 Eb/N0))
        for n0 in (0.2, 0.5, 1.0):
            c = ChannelModel(np.eye(1), np.ones(1), n0)
            u = Universe(1, 1)
            ctx = pair_from_states(u, c, [SlotState(1, 0b0)], [SlotState(1, 0b1)])
            m = TrafficModel(1, 0.5, N=1)
            assert pep(ctx, m, "ml") == pytest.approx(q_function(math.sqrt(2 / n0)), rel=1e-12)

    def test_monotone_in_xi(self):
        peps = [pep_from_xi_eta(xi, 0.0, 0.5) for xi in np.linspace(0.5, 20, 30)]
        assert all(a > b for a, b in zip(peps, peps[1:]))

    def test_degenerate_zero_xi(self):
        # indistinguishable pair: prior favoring the competitor gives 1
        assert pep_from_xi_eta(0.0, +0.3, 0.5) == 1.0
        assert pep_from_xi_eta(0.0, -0.3, 0.5) == 0.0
        assert pep_from_xi_eta(0.0, 0.0, 0.5) == 0.5

    def test_map_pep_matches_monte_carlo(self):
        rng = np.random.default_rng(31)
        m = TrafficModel(1, 0.15, 0.7)
        u = Universe(1)
        c = ChannelModel(np.eye(1), np.ones(1), 0.8)
        training = np.ones((1, 1))
        ctx = static_pair(u, c, 1, 0, training)
        closed = pep(ctx, m, "map_identities")
        n = 1_000_000
        y = 1.0 + rng.standard_normal(n) * math.sqrt(c.N0 / 2)
        # decide hat{X} = empty when its MAP score beats the truth's
        score_true = -((y - 1.0) ** 2) / c.N0 + math.log(0.15)
        score_comp = -(y ** 2) / c.N0 + math.log(0.85)
        freq = np.mean(score_comp > score_true)
        se = math.sqrt(freq * (1 - freq) / n)
        assert abs(freq - closed) <= 3 * se

    def test_pep_vanishes_with_frame_length(self, rng):
        u = Universe(3)
        c = make_channel(3, 0.5)
        m = TrafficModel(3, 0.3, 0.7)
        tr1 = 1.0 - 2.0 * rng.integers(0, 2, (1, 3)).astype(float)
        tr20 = np.vstack([tr1] * 20)
        for x in range(8):
            for h in range(8):
                if x == h:
                    continue
                p1 = pep(static_pair(u, c, x, h, tr1), m, "ml")
                p20 = pep(static_pair(u, c, x, h, tr20), m, "ml")
                assert p20 < p1


class TestOpenEye:
    def test_ml_is_one(self):
        u = Universe(2)
        c = make_channel(2, 0.5)
        m = TrafficModel(2, 0.3, 0.7)
        assert t_min_open_eye(u, m, c, mode="ml") == 1

    def test_uniform_prior_is_one(self):
        u = Universe(3)
        c = make_channel(3, 1.0)
        m = TrafficModel(3, 0.5, 0.5)
        assert t_min_open_eye(u, m, c, mode="map_identities") == 1

    def test_skewed_prior_hand_value(self):
        # K=1, identity channel: eta = N0 ln((1-alpha)/alpha), worst xi per
        # slot is a^2, so T_min = floor(eta) + 1
        alpha, n0 = 0.01, 10.0  # Eb/N0 = -10 dB
        u = Universe(1)
        c = ChannelModel(np.eye(1), np.ones(1), n0)
        m = TrafficModel(1, alpha, 0.5)
        expect = math.floor(n0 * math.log((1 - alpha) / alpha)) + 1
        assert expect == 46
        assert t_min_open_eye(u, m, c, mode="map_identities") == expect

    def test_cap_exceeded(self):
        u = Universe(1)
        c = ChannelModel(np.eye(1), np.ones(1), 10.0)
        m = TrafficModel(1, 0.01, 0.5)
        with pytest.raises(ValueError):
            t_min_open_eye(u, m, c, cap=10)


class TestUnionBound:
    def test_two_hypothesis_by_hand(self):
        # K=1: bound = f(empty) P(empty->{1}) + f({1}) P({1}->empty)
        u = Universe(1)
        c = ChannelModel(np.eye(1), np.ones(1), 0.5)
        m = TrafficModel(1, 0.3, 0.5)
        training = np.ones((2, 1))
        p01 = pep(static_pair(u, c, 0, 1, training), m, "map_identities")
        p10 = pep(static_pair(u, c, 1, 0, training), m, "map_identities")
        expect = 0.7 * p01 + 0.3 * p10
        got = union_bound_static(u, m, c, 2, mode="map_identities", training=training)
        assert got == pytest.approx(expect, rel=1e-12)

    def test_full_restriction_vacuous(self, rng):
        u = Universe(3)
        c = make_channel(3, 0.7)
        m = TrafficModel(3, 0.5, 0.5)
        training = 1.0 - 2.0 * rng.integers(0, 2, (2, 3)).astype(float)
        full = union_bound_static(u, m, c, 2, training=training)
        capped = union_bound_static(u, m, c, 2, restrict_n=2 * 3, training=training)
        assert capped == pytest.approx(full, rel=1e-12)

    def test_restricted_below_full(self, rng):
        u = Universe(3)
        c = make_channel(3, 0.7)
        m = TrafficModel(3, 0.5, 0.5)
        training = 1.0 - 2.0 * rng.integers(0, 2, (1, 3)).astype(float)
        full = union_bound_static(u, m, c, 1, training=training)
        p1 = union_bound_static(u, m, c, 1, restrict_n=1, training=training)
        assert p1 <= full

    def test_unknown_data_average_matches_explicit_enumeration(self):
        # small enough to average the trained PEP over all data patterns
        u = Universe(2)
        ud = Universe(2, 1)
        c = make_channel(2, 0.6)
        m = TrafficModel(2, 0.4, 0.5)
        horizon = 2
        got = union_bound_static(u, m, c, horizon, mode="ml")
        expect = 0.0
        for mask_i in range(4):
            f_i = (0.4 ** bin(mask_i).count("1")) * (0.6 ** (2 - bin(mask_i).count("1")))
            for mask_j in range(4):
                if mask_i == mask_j:
                    continue
                acc = []
                pats = itertools.product([-1.0, 1.0], repeat=2 * horizon)
                for flat in pats:
                    tr_i = np.array(flat[:2 * horizon:2]).reshape(horizon, 1)
                    tr_j = np.array(flat[1:2 * horizon:2]).reshape(horizon, 1)
                    tri = np.hstack([tr_i, tr_j])
                    # independent data for both hypotheses: enumerate pairs
                    for flat2 in itertools.product([-1.0, 1.0], repeat=2 * horizon):
                        trj = np.array(flat2).reshape(horizon, 2)
                        d = np.zeros((horizon, 2))
                        for t in range(horizon):
                            bi = np.where([(mask_i >> k) & 1 for k in range(2)], tri[t], 0.0)
                            bj = np.where([(mask_j >> k) & 1 for k in range(2)], trj[t], 0.0)
                            d[t] = bi - bj
                        ctx = PairContext(d, (mask_i,) * horizon, (mask_j,) * horizon, c)
                        acc.append(pep(ctx, m, "ml"))
                expect += f_i * float(np.mean(acc))
        assert got == pytest.approx(expect, rel=1e-9)


class TestMarkovDensity:
    def test_manual_chain(self):
        m = TrafficModel(1, 0.3, 0.7, 0)
        log_f1 = _initial_log_density(m, None)
        log_t = np.log(transition_matrix(m))
        seq = [1, 0, 1]
        expect = log_f1[1] + log_t[1, 0] + log_t[0, 1]
        assert markov_sequence_log_density(m, seq) == pytest.approx(expect, abs=1e-12)

    def test_data_factor_general_n(self):
        m2 = TrafficModel(1, 0.3, 0.7, 2)
        m0 = TrafficModel(1, 0.3, 0.7, 0)
        seq = [1, 1]
        gap = markov_sequence_log_density(m0, seq) - markov_sequence_log_density(m2, seq)
        assert gap == pytest.approx(2 * 2 * math.log(2.0), abs=1e-12)

    def test_normalizes_over_sequences(self):
        m = TrafficModel(2, 0.3, 0.6, 0)
        total = 0.0
        for seq in itertools.product(range(4), repeat=3):
            total += math.exp(markov_sequence_log_density(m, seq))
        assert total == pytest.approx(1.0, abs=1e-12)


class TestSemianalytic:
    def test_matches_exhaustive_tiny(self):
        u = Universe(1)
        m = TrafficModel(1, 0.4, 0.6)
        c = ChannelModel(np.eye(1), np.ones(1), 0.5)
        training = np.ones((2, 1))
        log_f1 = _initial_log_density(m, None)
        log_t = np.log(transition_matrix(m))
        exact = 0.0
        for seq in itertools.product(range(2), repeat=2):
            lp = log_f1[seq[0]] + log_t[seq[0], seq[1]]
            inner = 0.0
            for comp in itertools.product(range(2), repeat=2):
                dist = sum(bin(a ^ b).count("1") for a, b in zip(seq, comp))
                if 1 <= dist <= 2:
                    ctx = pair_from_states(u, c, [SlotState(s) for s in seq],
                                           [SlotState(s) for s in comp],
                                           training=training, dynamic=True)
                    inner += pep(ctx, m, "map_identities")
            exact += math.exp(lp) * inner
        est, se = semianalytic_dynamic_bound(u, m, c, 2, 20000, 2,
                                             np.random.default_rng(4), training=training)
        assert abs(est - exact) <= 3 * se

    def test_zero_restriction_is_zero(self):
        u = Universe(2)
        m = TrafficModel(2, 0.3, 0.6)
        c = make_channel(2, 0.5)
        training = np.ones((3, 2))
        est, se = semianalytic_dynamic_bound(u, m, c, 3, 50, 0,
                                             np.random.default_rng(0), training=training)
        assert est == 0.0 and se == 0.0

    def test_deterministic_given_seed(self):
        u = Universe(2)
        m = TrafficModel(2, 0.3, 0.6)
        c = make_channel(2, 0.5)
        training = np.ones((3, 2))
        a = semianalytic_dynamic_bound(u, m, c, 3, 60, 1,
                                       np.random.default_rng(12), training=training)
        b = semianalytic_dynamic_bound(u, m, c, 3, 60, 1,
                                       np.random.default_rng(12), training=training)
        assert a == b

    def test_blind_data_states(self):
        # data-bearing universe: data-only discrepancies count as distance 1
        u = Universe(1, 1)
        m = TrafficModel(1, 0.5, 0.5, 1)
        c = ChannelModel(np.eye(1), np.ones(1), 0.5)
        est, _ = semianalytic_dynamic_bound(u, m, c, 1, 200, 1,
                                            np.random.default_rng(3),
                                            mode="map_with_data")
        # exhaustive over the 3-state slot space
        log_f1 = _initial_log_density(m, None)
        states = [SlotState(0), SlotState(1, 0b0), SlotState(1, 0b1)]
        probs = [math.exp(log_f1[0]), math.exp(log_f1[1]) / 2, math.exp(log_f1[1]) / 2]
        exact = 0.0
        for st, p_st in zip(states, probs):
            for comp in states:
                dist = bin(st.active ^ comp.active).count("1")
                if st.active == comp.active == 1 and st.data != comp.data:
                    dist = 1
                if dist != 1:
                    continue
                ctx = pair_from_states(u, c, [st], [comp], dynamic=True)
                exact += p_st * pep(ctx, m, "map_with_data")
        assert est == pytest.approx(exact, rel=0.2)
