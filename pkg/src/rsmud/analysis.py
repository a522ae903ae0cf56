"""Closed-form pairwise error probabilities, union bounds and the
semi-analytic Monte Carlo bound estimator.

For a pair of hypotheses with per-slot symbol difference d_t the decision
statistic is Gaussian with mean xi and variance 2 N0 xi, where
xi = sum_t (A d_t)' R (A d_t), so the pairwise error probability is
Q((xi - eta) / sqrt(2 N0 xi)) with eta the prior log-ratio term
(zero for ML detection).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .channel import ChannelModel
from .randset import SetDensity, SlotState, Universe, popcount
from .traffic import TrafficModel, evolve_masks, sample_initial_masks, static_prior, \
    transition_matrix

LN2 = math.log(2.0)


def q_function(x):
    """Gaussian tail probability Q(x) = erfc(x / sqrt(2)) / 2."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * erfc(x / math.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PairContext:
    """A hypothesis pair ready for PEP evaluation.

    d        -- (T, K') per-slot symbol differences b_t(true) - b_t(hyp)
    masks_true, masks_hyp -- per-slot active-set masks (constant for a
                static pair), used for the prior terms
    dynamic  -- True when the pair is a state-sequence pair (eta uses the
                transition kernel instead of the static prior)
    """

    d: np.ndarray
    masks_true: tuple
    masks_hyp: tuple
    channel: ChannelModel
    n_data: int = 0
    dynamic: bool = False

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.d, dtype=float))
        if d.shape[0] != len(self.masks_true) or d.shape[0] != len(self.masks_hyp):
            raise ValueError("one difference vector per slot is required")
        if not np.all(np.isin(d, (-2.0, -1.0, 0.0, 1.0, 2.0))):
            raise ValueError("difference entries must lie in {0, +-1, +-2}")
        d.setflags(write=False)
        object.__setattr__(self, "d", d)

    @property
    def horizon(self) -> int:
        return self.d.shape[0]

    def identical(self) -> bool:
        return self.masks_true == self.masks_hyp and not np.any(self.d)


def pair_from_states(universe: Universe, c: ChannelModel,
                     states_true, states_hyp,
                     training: np.ndarray | None = None,
                     dynamic: bool = False) -> PairContext:
    """Build a PairContext from two slot-state sequences (lists of
    SlotState); trained universes (N=0) need the training symbol rows."""
    states_true = list(states_true)
    states_hyp = list(states_hyp)
    if len(states_true) != len(states_hyp):
        raise ValueError("sequences must have equal length")
    rows = []
    for t, (st, sh) in enumerate(zip(states_true, states_hyp)):
        row = None if training is None else training[t]
        rows.append(universe.symbol_vector(st, row) - universe.symbol_vector(sh, row))
    return PairContext(
        d=np.array(rows),
        masks_true=tuple(s.active for s in states_true),
        masks_hyp=tuple(s.active for s in states_hyp),
        channel=c,
        n_data=universe.N,
        dynamic=dynamic,
    )


def xi_statistic(ctx: PairContext) -> float:
    """xi_T = sum_t d_t' A R A d_t (nonnegative; zero iff every A d_t = 0)."""
    w = ctx.d * ctx.channel.amplitudes
    return float(np.einsum("tk,kj,tj->", w, ctx.channel.R, w))


def _static_identity_logprior(model: TrafficModel, mask: int) -> float:
    k = popcount(mask)
    la = k * math.log(model.alpha) if k else 0.0
    lb = (model.K - k) * math.log(1.0 - model.alpha) if model.K - k else 0.0
    if model.alpha == 0.0 and k:
        la = -math.inf
    if model.alpha == 1.0 and model.K - k:
        lb = -math.inf
    return la + lb


def _initial_log_density(model: TrafficModel, initial: SetDensity | None) -> np.ndarray:
    """log f(X_1): the t=0 prior pushed through one transition."""
    if initial is not None:
        return np.asarray(initial.log_mass, dtype=float)
    prior0 = static_prior(TrafficModel(model.K, model.alpha, model.mu, 0))
    lin = prior0.mass() @ transition_matrix(model)
    with np.errstate(divide="ignore"):
        return np.log(lin)


def xi_eta(ctx: PairContext, model: TrafficModel, mode: str,
           initial: SetDensity | None = None) -> tuple[float, float]:
    """The PEP statistics (xi_T, eta) for the selected detector mode.

    mode 'ml': eta = 0.  mode 'map_identities': eta is N0 times the prior
    (static pair) or transition-chain (dynamic pair) log-ratio
    ln f(hyp)/ln f(true).  mode 'map_with_data' adds the data-cardinality
    term N0 ln 2 * N * sum_t (|X_t| - |Xhat_t|).
    """
    xi = xi_statistic(ctx)
    if mode == "ml":
        return xi, 0.0
    if mode not in ("map_identities", "map_with_data"):
        raise ValueError(f"unknown PEP mode '{mode}'")
    n0 = ctx.channel.N0
    if not ctx.dynamic:
        ratio = (_static_identity_logprior(model, ctx.masks_hyp[0])
                 - _static_identity_logprior(model, ctx.masks_true[0]))
        eta = n0 * ratio
    else:
        log_t = _log_transition(model)
        log_f1 = _initial_log_density(model, initial)
        ratio = log_f1[ctx.masks_hyp[0]] - log_f1[ctx.masks_true[0]]
        for t in range(1, ctx.horizon):
            ratio += (log_t[ctx.masks_hyp[t - 1], ctx.masks_hyp[t]]
                      - log_t[ctx.masks_true[t - 1], ctx.masks_true[t]])
        eta = n0 * ratio
    if mode == "map_with_data":
        card_gap = sum(popcount(a) - popcount(b)
                       for a, b in zip(ctx.masks_true, ctx.masks_hyp))
        eta += n0 * LN2 * ctx.n_data * card_gap
    return xi, eta


def _log_transition(model: TrafficModel) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(transition_matrix(model))


def pep_from_xi_eta(xi: float, eta: float, n0: float) -> float:
    """Q((xi - eta)/sqrt(2 N0 xi)); for an indistinguishable pair (xi = 0)
    the limit is 1 when the prior strictly favors the competitor (eta > 0),
    0 when it favors the truth, 1/2 at a tie."""
    if xi < 0:
        raise ValueError("xi must be nonnegative")
    if xi == 0.0:
        return 1.0 if eta > 0 else (0.0 if eta < 0 else 0.5)
    return 0.5 * math.erfc((xi - eta) / math.sqrt(4.0 * n0 * xi))


def pep(ctx: PairContext, model: TrafficModel, mode: str,
        initial: SetDensity | None = None) -> float:
    """Closed-form pairwise error probability for the pair in `ctx`."""
    if ctx.identical():
        raise ValueError("PEP is undefined for identical hypotheses")
    xi, eta = xi_eta(ctx, model, mode, initial)
    return pep_from_xi_eta(xi, eta, ctx.channel.N0)


# ---------------------------------------------------------------------------
# open-eye frame length

def _worst_case_slot_xi(universe: Universe, c: ChannelModel,
                        mask_true: int, mask_hyp: int) -> float:
    """min over data patterns of the one-slot xi of the identity pair:
    common users contribute d in {0,+-2}, single-set users d in {+-1}."""
    both = [i for i in range(universe.K) if mask_true >> i & 1 and mask_hyp >> i & 1]
    only = [i for i in range(universe.K) if (mask_true >> i & 1) != (mask_hyp >> i & 1)]
    if len(both) + len(only) > 12:
        raise ValueError("worst-case data enumeration limited to 12 involved users")
    col0 = 1 if universe.ref_user else 0
    users = ([0] if universe.ref_user else []) + [col0 + i for i in both + only]
    options = ([(0.0, 2.0, -2.0)] * (len(both) + (1 if universe.ref_user else 0))
               + [(1.0, -1.0)] * len(only))
    sub_r = c.R[np.ix_(users, users)]
    sub_a = c.amplitudes[users]
    best = math.inf
    stack = [(0, ())]
    while stack:
        i, picked = stack.pop()
        if i == len(options):
            d = np.array(picked) * sub_a
            best = min(best, float(d @ sub_r @ d))
            continue
        for v in options[i]:
            stack.append((i + 1, picked + (v,)))
    return best


def t_min_open_eye(universe: Universe, model: TrafficModel, c: ChannelModel,
                   mode: str = "map_identities", cap: int = 10 ** 6) -> int:
    """Smallest frame length T at which every competing constant-identity
    pair keeps xi_T - eta > 0 under worst-case data (the open-eye
    condition).  Raises when the required T exceeds `cap`."""
    t_min = 1
    for mask_true in range(universe.n_identity_sets):
        if _static_identity_logprior(model, mask_true) == -math.inf:
            continue
        for mask_hyp in range(universe.n_identity_sets):
            if mask_hyp == mask_true:
                continue
            xi1 = _worst_case_slot_xi(universe, c, mask_true, mask_hyp)
            ctx_masks = (mask_true,), (mask_hyp,)
            if mode == "ml":
                eta = 0.0
            else:
                eta = c.N0 * (_static_identity_logprior(model, mask_hyp)
                              - _static_identity_logprior(model, mask_true))
                if mode == "map_with_data":
                    eta += c.N0 * LN2 * universe.N * (popcount(mask_true) - popcount(mask_hyp))
            if eta == -math.inf:
                continue
            if xi1 <= 0.0:
                raise ValueError("degenerate pair with zero worst-case xi")
            need = 1 if eta < xi1 else math.floor(eta / xi1) + 1
            t_min = max(t_min, need)
    if t_min > cap:
        raise ValueError(f"open-eye frame length {t_min} exceeds the cap {cap}")
    return t_min


# ---------------------------------------------------------------------------
# static union bound

def _pair_slot_xi_distribution(universe: Universe, c: ChannelModel,
                               mask_i: int, mask_j: int) -> tuple[np.ndarray, np.ndarray]:
    """Distribution (values, probs) of the one-slot xi of an identity pair
    under uniform data: common users d = 0/+2/-2 w.p. 1/2,1/4,1/4; users of
    exactly one set d = +-1 w.p. 1/2."""
    both = [i for i in range(universe.K) if mask_i >> i & 1 and mask_j >> i & 1]
    only = [i for i in range(universe.K) if (mask_i >> i & 1) != (mask_j >> i & 1)]
    users = both + only
    options = [((0.0, 0.5), (2.0, 0.25), (-2.0, 0.25))] * len(both) \
        + [((1.0, 0.5), (-1.0, 0.5))] * len(only)
    count = 3 ** len(both) * 2 ** len(only)
    if count > 20000:
        raise ValueError("per-slot data enumeration too large; use sampling")
    sub_r = c.R[np.ix_(users, users)]
    sub_a = c.amplitudes[users]
    vals, probs = [], []
    stack = [(0, (), 1.0)]
    while stack:
        i, picked, p = stack.pop()
        if i == len(options):
            d = np.array(picked) * sub_a
            vals.append(float(d @ sub_r @ d))
            probs.append(p)
            continue
        for v, pv in options[i]:
            stack.append((i + 1, picked + (v,), p * pv))
    return _merge_distribution(np.array(vals), np.array(probs))


def _merge_distribution(vals: np.ndarray, probs: np.ndarray,
                        decimals: int = 9) -> tuple[np.ndarray, np.ndarray]:
    keys = np.round(vals, decimals)
    uniq, inv = np.unique(keys, return_inverse=True)
    merged = np.zeros(len(uniq))
    np.add.at(merged, inv, probs)
    return uniq, merged


def _convolve_distributions(dist: tuple[np.ndarray, np.ndarray], times: int,
                            max_support: int = 500_000) -> tuple[np.ndarray, np.ndarray]:
    vals, probs = np.array([0.0]), np.array([1.0])
    for _ in range(times):
        v = (vals[:, None] + dist[0][None, :]).ravel()
        p = (probs[:, None] * dist[1][None, :]).ravel()
        if v.size > max_support:
            raise ValueError("xi distribution support too large")
        vals, probs = _merge_distribution(v, p)
    return vals, probs


def identity_pair_pep_averaged(universe, model, c, mask_i, mask_j, horizon, mode,
                               n_samples: int = 256, rng=None):
    """PEP of an identity pair averaged over uniform data patterns.

    Exact per-slot enumeration + convolution over slots when tractable,
    otherwise a fixed-size Monte Carlo average.
    """
    if mode == "ml":
        eta = 0.0
    else:
        eta = c.N0 * (_static_identity_logprior(model, mask_j)
                      - _static_identity_logprior(model, mask_i))
        if mode == "map_with_data":
            eta += c.N0 * LN2 * universe.N * horizon \
                * (popcount(mask_i) - popcount(mask_j))
    try:
        slot = _pair_slot_xi_distribution(universe, c, mask_i, mask_j)
        vals, probs = _convolve_distributions(slot, horizon)
        return float(sum(p * pep_from_xi_eta(v, eta, c.N0) for v, p in zip(vals, probs)))
    except ValueError:
        rng = rng or np.random.default_rng(0)
        both = [i for i in range(universe.K) if mask_i >> i & 1 and mask_j >> i & 1]
        only = [i for i in range(universe.K) if (mask_i >> i & 1) != (mask_j >> i & 1)]
        users = both + only
        sub_r = c.R[np.ix_(users, users)]
        sub_a = c.amplitudes[users]
        acc = 0.0
        for _ in range(n_samples):
            d_both = rng.choice([0.0, 2.0, -2.0], size=(horizon, len(both)), p=[0.5, 0.25, 0.25])
            d_only = rng.choice([1.0, -1.0], size=(horizon, len(only)))
            d = np.hstack([d_both, d_only]) * sub_a
            xi = float(np.einsum("tk,kj,tj->", d, sub_r, d))
            acc += pep_from_xi_eta(xi, eta, c.N0)
        return acc / n_samples


def _pair_pep_trained(universe, model, c, mask_i, mask_j, training, mode):
    horizon = training.shape[0]
    states_i = [SlotState(mask_i)] * horizon
    states_j = [SlotState(mask_j)] * horizon
    ctx = pair_from_states(universe, c, states_i, states_j, training=training)
    xi, eta = xi_eta(ctx, model, mode)
    return pep_from_xi_eta(xi, eta, c.N0)


def union_bound_static(universe: Universe, model: TrafficModel, c: ChannelModel,
                       horizon: int, restrict_n: int | None = None,
                       mode: str = "map_identities",
                       training: np.ndarray | None = None) -> float:
    """Union bound on the static set-error probability:
    sum_i f(X_i) sum_{j != i} P(X_i -> X_j), optionally restricted to the
    pairs whose symmetric difference has at most `restrict_n` users
    (the P^(n) approximation).

    With `training` the pair PEPs use the known symbol matrix; without it
    they are averaged over uniform random data.
    """
    if universe.ref_user:
        raise ValueError("identity-level union bound has no reference user")
    if universe.K > 10:
        raise ValueError("pair enumeration limited to K <= 10")
    total = 0.0
    for mask_i in range(universe.n_identity_sets):
        f_i = math.exp(_static_identity_logprior(model, mask_i))
        if f_i == 0.0:
            continue
        for mask_j in range(universe.n_identity_sets):
            if mask_j == mask_i:
                continue
            if restrict_n is not None and popcount(mask_i ^ mask_j) > restrict_n:
                continue
            if training is not None:
                p = _pair_pep_trained(universe, model, c, mask_i, mask_j, training, mode)
            else:
                p = identity_pair_pep_averaged(universe, model, c, mask_i, mask_j, horizon, mode)
            total += f_i * p
    return total


# ---------------------------------------------------------------------------
# dynamic sequences: Markov joint density and semi-analytic bound

def markov_sequence_log_density(model: TrafficModel, masks, initial: SetDensity | None = None) -> float:
    """log of the joint density of an identity-mask sequence under the
    birth/death chain, including the 2^(-N |X_t|) factor per slot for
    data-extended states (general N; each data pattern equally likely)."""
    masks = list(masks)
    log_f1 = _initial_log_density(model, initial)
    log_t = _log_transition(model)
    out = float(log_f1[masks[0]])
    for prev, cur in zip(masks, masks[1:]):
        out += float(log_t[prev, cur])
    out -= model.N * LN2 * float(sum(popcount(m) for m in masks))
    return out


def _slot_distance(a: SlotState, b: SlotState, n_data: int) -> int:
    """Identity symmetric difference plus data-bit flips of common users."""
    dist = popcount(a.active ^ b.active)
    if n_data:
        common = a.active & b.active
        da = _extract_bits(a, common, n_data)
        db = _extract_bits(b, common, n_data)
        dist += (da ^ db).bit_count()
    return dist


def _extract_bits(state: SlotState, part_mask: int, n_data: int) -> int:
    out = 0
    j_out = 0
    j = 0
    for i in range(16):
        if state.active >> i & 1:
            if part_mask >> i & 1:
                chunk = (state.data >> (n_data * j)) & ((1 << n_data) - 1)
                out |= chunk << (n_data * j_out)
                j_out += 1
            j += 1
    return out


def _slot_neighbors(universe: Universe, state: SlotState, budget: int):
    """States within distance 1..budget of `state`, grouped by distance."""
    by_dist: dict[int, list[int]] = {d: [] for d in range(1, budget + 1)}
    if universe.N == 0:
        dist = popcount(np.arange(universe.n_states, dtype=np.uint64) ^ np.uint64(state.active))
        for d in range(1, budget + 1):
            by_dist[d] = [int(i) for i in np.flatnonzero(dist == d)]
        return by_dist
    for i in range(universe.n_states):
        other = universe.state_at(i)
        d = _slot_distance(state, other, universe.N)
        if 1 <= d <= budget:
            by_dist[d].append(i)
    return by_dist


def semianalytic_dynamic_bound(universe: Universe, model: TrafficModel, c: ChannelModel,
                               horizon: int, samples: int, restrict_n: int,
                               rng: np.random.Generator,
                               training: np.ndarray | None = None,
                               initial: SetDensity | None = None,
                               mode: str = "map_identities") -> tuple[float, float]:
    """Monte Carlo estimate of the restricted sequence union bound.

    Draws `samples` state sequences from the Markov traffic law and, for
    each, sums the closed-form PEPs over every competitor sequence within
    total slot distance `restrict_n`; returns (mean, standard error).
    Unbiased for the restricted bound; deterministic given the generator.
    """
    if universe.ref_user:
        raise ValueError("sequence bound has no reference user")
    if restrict_n < 0:
        raise ValueError("restrict_n must be >= 0")
    if initial is None:
        prior0 = static_prior(TrafficModel(model.K, model.alpha, model.mu, 0))
        lin = prior0.mass() @ transition_matrix(model)
        with np.errstate(divide="ignore"):
            initial = SetDensity(prior0.universe, np.log(lin))
    log_f1 = _initial_log_density(model, initial)
    log_t = _log_transition(model)
    n0 = c.N0

    sums = np.zeros(samples)
    for s in range(samples):
        masks = np.zeros(horizon, dtype=np.int64)
        masks[0] = sample_initial_masks(initial, 1, rng)[0]
        for t in range(1, horizon):
            masks[t] = evolve_masks(model, masks[t - 1: t], rng)[0]
        states = []
        for t in range(horizon):
            data = 0
            nbits = universe.N * popcount(int(masks[t]))
            if nbits:
                data = int(rng.integers(0, 1 << nbits))
            states.append(SlotState(int(masks[t]), data))
        sums[s] = _restricted_competitor_sum(
            universe, model, c, states, restrict_n, log_f1, log_t, n0,
            training=training, mode=mode)
    mean = float(np.mean(sums))
    stderr = float(np.std(sums, ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return mean, stderr


def _slot_symbol_table(universe: Universe, training, t: int) -> np.ndarray:
    if training is None:
        return universe.symbol_matrix
    return universe.activity_matrix * np.asarray(training, dtype=float)[t][None, :]


def _restricted_competitor_sum(universe, model, c, states, budget, log_f1, log_t,
                               n0, training, mode) -> float:
    horizon = len(states)
    neighbors = [_slot_neighbors(universe, states[t], budget) for t in range(horizon)]
    # per-slot additive pieces so the walk over modification sets only sums
    # scalars: xi contribution and cardinality gap of every candidate state
    xi_slot, card_gap, state_masks = [], [], universe.state_masks
    for t in range(horizon):
        table = _slot_symbol_table(universe, training, t)
        row = None if training is None else training[t]
        d = (universe.symbol_vector(states[t], row)[None, :] - table) * c.amplitudes
        xi_slot.append(np.einsum("sk,kj,sj->s", d, c.R, d))
        card_gap.append(popcount(states[t].active) - popcount(state_masks).astype(int))
    true_masks = [s.active for s in states]
    total = 0.0
    data_factor = n0 * LN2 * universe.N

    def leaf_pep(mods: list) -> float:
        xi = 0.0
        for t, idx in mods:
            xi += float(xi_slot[t][idx])
        if mode == "ml":
            return pep_from_xi_eta(xi, 0.0, n0)
        comp = dict(mods)
        ratio = 0.0
        seen = set()
        for t, _ in mods:
            for s in (t, t + 1):
                if s >= horizon or s in seen:
                    continue
                seen.add(s)
                hyp_cur = state_masks[comp[s]] if s in comp else true_masks[s]
                if s == 0:
                    ratio += float(log_f1[hyp_cur] - log_f1[true_masks[0]])
                else:
                    hyp_prev = state_masks[comp[s - 1]] if s - 1 in comp else true_masks[s - 1]
                    ratio += float(log_t[hyp_prev, hyp_cur]
                                   - log_t[true_masks[s - 1], true_masks[s]])
        eta = n0 * ratio
        if mode == "map_with_data":
            eta += data_factor * sum(card_gap[t][idx] for t, idx in mods)
        return pep_from_xi_eta(xi, eta, n0)

    def walk(t: int, left: int, mods: list):
        nonlocal total
        if t == horizon:
            if mods:
                total += leaf_pep(mods)
            return
        walk(t + 1, left, mods)
        for d in range(1, left + 1):
            for idx in neighbors[t][d]:
                mods.append((t, idx))
                walk(t + 1, left - d, mods)
                mods.pop()

    walk(0, budget, [])
    return total
