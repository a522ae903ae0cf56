"""Detector families over slot-state trellises.

Reference (single-trial) implementations of the causal random-set Bayes
filter, the sequence-MAP Viterbi detector and its sliding-window variant,
static frame MAP/ML detection, and the all-active classic baseline.  The
*_batch functions are vectorized equivalents used by the Monte Carlo
harness; tests pin them to the reference path decision for decision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelModel, batch_emission_log_liks, emission_log_liks
from .randset import SetDensity, SlotState, Universe, log_sum_exp, normalize, popcount
from .traffic import TrafficModel, static_prior, transition_matrix


@dataclass(frozen=True)
class FilterState:
    """Filter snapshot at slot t: posterior given y_{1:t} and the
    prediction given y_{1:t-1} that produced it."""

    t: int
    posterior: SetDensity
    predicted: SetDensity


def state_transition_matrix(model: TrafficModel, universe: Universe) -> np.ndarray:
    """(S, S) linear-domain slot-state transition matrix.

    Identity dynamics come from the birth/death kernels; data bits and the
    reference bit are redrawn uniformly every slot, contributing
    2^(-N |mask'|) (and 1/2) per destination state.
    """
    if universe.K != model.K or universe.N != model.N:
        raise ValueError("universe does not match the traffic model")
    t_id = transition_matrix(model)
    masks = universe.state_masks
    t_full = t_id[np.ix_(masks, masks)]
    w = 2.0 ** (-model.N * popcount(masks).astype(float))
    if universe.ref_user:
        w = w / 2.0
    return t_full * w[None, :]


def log_state_transition_matrix(model: TrafficModel, universe: Universe) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(state_transition_matrix(model, universe))


def default_prior0(model: TrafficModel, universe: Universe) -> SetDensity:
    """Initial distribution of the (unobserved) state at t=0: independent
    users with static activity alpha."""
    return static_prior(model, ref_user=universe.ref_user)


def bayes_predict(posterior: SetDensity | FilterState, model: TrafficModel) -> SetDensity:
    """Chapman-Kolmogorov step: f(X_{t+1} | y_{1:t}) = sum over X_t of the
    transition row times the posterior (the discrete set integral)."""
    if isinstance(posterior, FilterState):
        posterior = posterior.posterior
    u = posterior.universe
    t_lin = state_transition_matrix(model, u)
    lm = posterior.log_mass
    shift = float(np.max(lm))
    if not math.isfinite(shift):
        raise ValueError("cannot predict from an all--inf posterior")
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(lm - shift) @ t_lin) + shift
    return normalize(u, out)


def bayes_update(predicted: SetDensity, y: np.ndarray, c: ChannelModel,
                 symbols: np.ndarray | None = None) -> SetDensity:
    """Measurement step: posterior proportional to likelihood times
    prediction, renormalized in the log domain.

    `symbols` overrides the per-state symbol matrix (needed when the data
    are known training symbols); by default the blind N=1 matrix is used.
    """
    u = predicted.universe
    if symbols is None:
        symbols = u.symbol_matrix
    emit = emission_log_liks(c, y, symbols)
    return normalize(u, predicted.log_mass + emit)


def _slot_symbols(universe: Universe, t: int, training: np.ndarray | None) -> np.ndarray:
    if training is None:
        return universe.symbol_matrix
    if universe.ref_user:
        raise ValueError("trained detection does not model a reference user")
    return universe.activity_matrix * np.asarray(training, dtype=float)[t][None, :]


def causal_map_sequence(ys: np.ndarray, model: TrafficModel, c: ChannelModel,
                        prior0: SetDensity | None = None,
                        training: np.ndarray | None = None,
                        return_history: bool = False):
    """Causal per-slot MAP: alternate predict/update from t=1 to T and take
    the argmax of each posterior (lowest state index on ties)."""
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    universe = prior0.universe if prior0 is not None else _infer_universe(model, c)
    if prior0 is None:
        prior0 = default_prior0(model, universe)
    estimates: list[SlotState] = []
    history: list[FilterState] = []
    posterior = prior0
    for t in range(ys.shape[0]):
        predicted = bayes_predict(posterior, model)
        posterior = bayes_update(predicted, ys[t], c, _slot_symbols(universe, t, training))
        estimates.append(posterior.argmax_state())
        if return_history:
            history.append(FilterState(t + 1, posterior, predicted))
    return (estimates, history) if return_history else estimates


def _infer_universe(model: TrafficModel, c: ChannelModel) -> Universe:
    ref = c.n_users == model.K + 1
    if not ref and c.n_users != model.K:
        raise ValueError("channel user count matches neither K nor K+1")
    return model.universe(ref_user=ref)


def viterbi_sequence_map(ys: np.ndarray, model: TrafficModel, c: ChannelModel,
                         prior0: SetDensity | None = None,
                         training: np.ndarray | None = None) -> list[SlotState]:
    """Exact sequence MAP over the slot-state trellis (max-sum forward pass
    plus backtrace; lowest-index tie-break at every survivor comparison)."""
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    universe = prior0.universe if prior0 is not None else _infer_universe(model, c)
    if prior0 is None:
        prior0 = default_prior0(model, universe)
    log_t = log_state_transition_matrix(model, universe)
    prior1 = bayes_predict(prior0, model)
    emits = np.array([emission_log_liks(c, ys[t], _slot_symbols(universe, t, training))
                      for t in range(ys.shape[0])])
    path = _viterbi_path(prior1.log_mass, log_t, emits)
    return [universe.state_at(i) for i in path]


def _viterbi_path(log_prior1: np.ndarray, log_t: np.ndarray, emits: np.ndarray) -> np.ndarray:
    horizon, n_states = emits.shape
    bp = np.zeros((horizon, n_states), dtype=np.int64)
    delta = log_prior1 + emits[0]
    for t in range(1, horizon):
        cand = delta[:, None] + log_t
        bp[t] = np.argmax(cand, axis=0)
        delta = cand[bp[t], np.arange(n_states)] + emits[t]
    path = np.zeros(horizon, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    for t in range(horizon - 1, 0, -1):
        path[t - 1] = bp[t, path[t]]
    return path


def sliding_window_viterbi(ys: np.ndarray, model: TrafficModel, c: ChannelModel,
                           delta: int,
                           prior0: SetDensity | None = None,
                           training: np.ndarray | None = None) -> list[SlotState]:
    """Per-slot decisions from a Viterbi pass over the window
    [max(1, t-delta), min(T, t+delta)] only; observations outside the
    window are never used, the window head starts from the prediction-only
    prior.  delta >= T-1 reproduces the full sequence detector."""
    if delta < 0:
        raise ValueError("window half-length must be >= 0")
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    universe = prior0.universe if prior0 is not None else _infer_universe(model, c)
    if prior0 is None:
        prior0 = default_prior0(model, universe)
    horizon = ys.shape[0]
    log_t = log_state_transition_matrix(model, universe)
    emits = np.array([emission_log_liks(c, ys[t], _slot_symbols(universe, t, training))
                      for t in range(horizon)])
    # prediction-only priors: pushed[s] = f(X_{s+1}) with no observations
    pushed = [bayes_predict(prior0, model)]
    for _ in range(horizon - 1):
        pushed.append(bayes_predict(pushed[-1], model))
    out = []
    for t in range(horizon):
        lo = max(0, t - delta)
        hi = min(horizon, t + delta + 1)
        path = _viterbi_path(pushed[lo].log_mass, log_t, emits[lo:hi])
        out.append(universe.state_at(int(path[t - lo])))
    return out


def static_map_detect(ys: np.ndarray, prior: SetDensity, c: ChannelModel,
                      training: np.ndarray | None = None) -> list[SlotState]:
    """Frame MAP with identities frozen over the frame.

    Trained form (identity-only prior, N=0): needs the (T, K) training
    symbol matrix; maximizes log prior + summed log-likelihood over the
    2^K identity sets.

    Blind form (slot-state prior, N>=1): the prior is read as identity
    marginal times per-slot data conditional, and the score maximizes
    over the identity set jointly with each slot's data (and reference
    bit).  A uniform slot-state prior at T=1 is exactly the joint
    ML detector over all 2 * 3^K slot hypotheses.
    """
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    u = prior.universe
    horizon = ys.shape[0]
    if u.N == 0 and not u.ref_user:
        if training is None:
            raise ValueError("identity-only static MAP needs training symbols")
        score = prior.log_mass.copy()
        for t in range(horizon):
            score += emission_log_liks(c, ys[t], _slot_symbols(u, t, training))
        mask = int(np.argmax(score))
        return [SlotState(mask) for _ in range(horizon)]
    if u.N < 1:
        raise ValueError("blind static MAP needs a data-bearing (N>=1) prior")
    # identity marginal and per-slot conditional of the slot-state prior;
    # zero-mass identity sets get -inf throughout (not NaN)
    marg = np.full(u.n_identity_sets, -np.inf)
    for mask in range(u.n_identity_sets):
        marg[mask] = log_sum_exp(prior.log_mass[u.state_masks == mask])
    lifted = marg[u.state_masks]
    with np.errstate(invalid="ignore"):
        cond = np.where(np.isfinite(lifted), prior.log_mass - lifted, -np.inf)
    emits = np.array([emission_log_liks(c, ys[t], u.symbol_matrix) for t in range(horizon)])
    weighted = emits + cond[None, :]
    best_state = np.zeros((horizon, u.n_identity_sets), dtype=np.int64)
    score = marg.copy()
    for mask in range(u.n_identity_sets):
        group = np.flatnonzero(u.state_masks == mask)
        local = weighted[:, group]
        pick = np.argmax(local, axis=1)
        best_state[:, mask] = group[pick]
        score[mask] += local[np.arange(horizon), pick].sum()
    mask = int(np.argmax(score))
    return [u.state_at(int(best_state[t, mask])) for t in range(horizon)]


def classic_all_active_ml(y: np.ndarray, c: ChannelModel, universe: Universe) -> SlotState:
    """Single-slot ML under the classic assumption that every potential
    interferer is transmitting: maximize the likelihood over data (and the
    reference bit) with the active set pinned to the full universe."""
    full = universe.n_identity_sets - 1
    group = np.flatnonzero(universe.state_masks == full)
    emit = emission_log_liks(c, y, universe.symbol_matrix[group])
    return universe.state_at(int(group[int(np.argmax(emit))]))


# ---------------------------------------------------------------------------
# vectorized batch engines (same decisions as the reference path)

def filter_decisions_batch(emits: np.ndarray, t_lin: np.ndarray,
                           log_prior1: np.ndarray,
                           truth_idx: np.ndarray | None = None):
    """Causal filter over a batch of trials.

    emits: (n, T, S) log-likelihoods; t_lin: (S, S) linear transition
    matrix; log_prior1: (S,) log prior of the first slot's state.
    Returns (n, T) argmax decisions, plus the per-slot posterior mass on
    `truth_idx` (n, T) when given (used by diagnostics).
    """
    n, horizon, n_states = emits.shape
    decisions = np.zeros((n, horizon), dtype=np.int64)
    truth_mass = np.zeros((n, horizon)) if truth_idx is not None else None
    log_pred = np.broadcast_to(log_prior1, (n, n_states)).copy()
    for t in range(horizon):
        s = log_pred + emits[:, t, :]
        decisions[:, t] = np.argmax(s, axis=1)
        shift = np.max(s, axis=1, keepdims=True)
        lin = np.exp(s - shift)
        lin /= np.sum(lin, axis=1, keepdims=True)
        if truth_mass is not None:
            truth_mass[:, t] = lin[np.arange(n), truth_idx[:, t]]
        if t + 1 < horizon:
            with np.errstate(divide="ignore"):
                log_pred = np.log(lin @ t_lin)
    return decisions, truth_mass


def viterbi_decisions_batch(emits: np.ndarray, log_t: np.ndarray,
                            log_prior1: np.ndarray) -> np.ndarray:
    """Sequence-MAP backtrace decisions for a batch of trials: (n, T)."""
    n, horizon, n_states = emits.shape
    bp = np.zeros((horizon, n, n_states), dtype=np.int16)
    delta = log_prior1[None, :] + emits[:, 0, :]
    for t in range(1, horizon):
        cand = delta[:, :, None] + log_t[None, :, :]
        bp[t] = np.argmax(cand, axis=1)
        delta = np.take_along_axis(cand, bp[t][:, None, :].astype(np.int64), axis=1)[:, 0, :]
        delta = delta + emits[:, t, :]
    path = np.zeros((n, horizon), dtype=np.int64)
    path[:, -1] = np.argmax(delta, axis=1)
    rows = np.arange(n)
    for t in range(horizon - 1, 0, -1):
        path[:, t - 1] = bp[t, rows, path[:, t]]
    return path
