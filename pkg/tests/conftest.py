import itertools

import numpy as np
import pytest

from rsmud.channel import ChannelModel, build_signatures, correlation_matrix
from rsmud.detect import bayes_predict, default_prior0, log_state_transition_matrix
from rsmud.channel import emission_log_liks
from rsmud.randset import log_sum_exp


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def make_channel(n_users: int, n0: float, family: str = "msequence",
                 length: int = 7) -> ChannelModel:
    sigs = build_signatures(family, n_users, length)
    return ChannelModel(correlation_matrix(sigs), np.ones(n_users), n0)


def enumerate_sequence_scores(universe, model, c, ys, training=None):
    """Brute-force joint log-score of every state sequence, accumulated in
    the same order as the trellis recursion (bitwise-comparable)."""
    from rsmud.detect import _slot_symbols
    horizon = ys.shape[0]
    prior1 = bayes_predict(default_prior0(model, universe), model)
    log_t = log_state_transition_matrix(model, universe)
    emits = np.array([emission_log_liks(c, ys[t], _slot_symbols(universe, t, training))
                      for t in range(horizon)])
    n_states = universe.n_states
    seqs = np.array(list(itertools.product(range(n_states), repeat=horizon)), dtype=np.int64)
    lp = prior1.log_mass[seqs[:, 0]] + emits[0, seqs[:, 0]]
    for t in range(1, horizon):
        lp = lp + log_t[seqs[:, t - 1], seqs[:, t]] + emits[t, seqs[:, t]]
    return seqs, lp, emits, prior1, log_t


def exhaustive_posterior(universe, model, c, ys, upto_t, training=None):
    """Marginal posterior of the state at slot `upto_t` (1-based) from the
    exhaustive joint over all prefix sequences."""
    seqs, lp, _, _, _ = enumerate_sequence_scores(
        universe, model, c, ys[:upto_t], training=training)
    n_states = universe.n_states
    marg = np.full(n_states, -np.inf)
    for s in range(n_states):
        sel = lp[seqs[:, -1] == s]
        if sel.size:
            marg[s] = log_sum_exp(sel)
    return np.exp(marg - log_sum_exp(marg))
