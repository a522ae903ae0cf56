"""Finite-random-set calculus on the power set of a small user universe.

Everything downstream (traffic kernels, Bayes filters, Viterbi trellises)
works on probability tables over the realizations of a random set of active
users, optionally extended with the data symbols those users transmit.  This
module owns the state enumeration and the basic calculus on the tables:
belief functions, Moebius inversion, union convolution and log-domain
normalization.

State indexing convention (canonical everywhere in this package):

* an active set is a K-bit integer mask, bit i set <=> interferer i active;
* slot states are enumerated mask-major: all data patterns of mask 0, then
  mask 1, ... Data bits are packed little-endian by ascending active user
  index (N bits per active user);
* when a reference user is present its bit is the fastest-varying component:
  ``index = 2 * (offset[mask] + data) + (0 if ref_bit == +1 else 1)``.

Antipodal mapping: bit 0 -> +1, bit 1 -> -1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

# Dense tables only; reject universes whose (loose) table-size bound
# 2^K * 2^(N*K) * (1 + ref) exceeds this.
MAX_TABLE_ENTRIES = 2 ** 26

MASS_TOL = 1e-12


def popcount(masks):
    """Population count of an int or an integer ndarray."""
    if isinstance(masks, (int, np.integer)):
        return int(masks).bit_count()
    return np.bitwise_count(np.asarray(masks, dtype=np.uint64)).astype(np.int64)


@dataclass(frozen=True)
class SlotState:
    """One realization of the random set at a slot.

    active   -- bit mask of active interferers
    data     -- packed data bits of the active interferers (N bits each,
                little-endian by ascending user index); 0 when N = 0
    ref_bit  -- antipodal symbol (+1/-1) of the reference user, or None
                when the experiment has no reference user
    """

    active: int
    data: int = 0
    ref_bit: int | None = None


@dataclass(frozen=True)
class Universe:
    """State space of the random set: K potential interferers, N data
    symbols per active user per slot, plus an optional always-active
    reference user with one unknown antipodal symbol.

    N = 0 means identities only (no data dimension).  The reference user
    doubles the state count when enabled.
    """

    K: int
    N: int = 0
    ref_user: bool = False

    def __post_init__(self):
        if not 0 <= self.K <= 16:
            raise ValueError(f"K must be in [0, 16], got {self.K}")
        if self.N < 0:
            raise ValueError(f"N must be >= 0, got {self.N}")
        bound = 2 ** self.K * 2 ** (self.N * self.K) * (2 if self.ref_user else 1)
        if bound > MAX_TABLE_ENTRIES:
            raise ValueError(
                f"dense table bound 2^K*2^(NK) = {bound} exceeds {MAX_TABLE_ENTRIES}; "
                "universe too large for exact enumeration"
            )

    @property
    def n_identity_sets(self) -> int:
        return 1 << self.K

    @property
    def n_users(self) -> int:
        """Number of channel users K' (reference user included if present)."""
        return self.K + (1 if self.ref_user else 0)

    @cached_property
    def _mask_sizes(self) -> np.ndarray:
        counts = popcount(np.arange(self.n_identity_sets))
        return (1 << (self.N * counts)).astype(np.int64)

    @cached_property
    def _offsets(self) -> np.ndarray:
        off = np.zeros(self.n_identity_sets + 1, dtype=np.int64)
        np.cumsum(self._mask_sizes, out=off[1:])
        return off

    @property
    def n_states(self) -> int:
        """(1 + 2^N)^K, times 2 with a reference user."""
        n = int(self._offsets[-1])
        return 2 * n if self.ref_user else n

    def index_of(self, state: SlotState) -> int:
        if not 0 <= state.active < self.n_identity_sets:
            raise ValueError(f"mask {state.active} out of range for K={self.K}")
        nbits = self.N * popcount(state.active)
        if not 0 <= state.data < (1 << nbits):
            raise ValueError("data bits exceed N * |active|")
        pair = int(self._offsets[state.active]) + state.data
        if not self.ref_user:
            if state.ref_bit is not None:
                raise ValueError("ref_bit given but universe has no reference user")
            return pair
        if state.ref_bit not in (+1, -1):
            raise ValueError("reference-user universe requires ref_bit in {+1,-1}")
        return 2 * pair + (0 if state.ref_bit == +1 else 1)

    def state_at(self, index: int) -> SlotState:
        index = int(index)
        if not 0 <= index < self.n_states:
            raise ValueError("state index out of range")
        ref_bit = None
        if self.ref_user:
            ref_bit = +1 if index % 2 == 0 else -1
            index //= 2
        mask = int(np.searchsorted(self._offsets, index, side="right")) - 1
        return SlotState(mask, index - int(self._offsets[mask]), ref_bit)

    def states(self):
        return (self.state_at(i) for i in range(self.n_states))

    @cached_property
    def state_masks(self) -> np.ndarray:
        """Active-set mask of every state, in index order."""
        reps = np.repeat(np.arange(self.n_identity_sets), self._mask_sizes)
        if self.ref_user:
            reps = np.repeat(reps, 2)
        return reps

    def identity_index(self, mask: int) -> int:
        """State index of an identity-only realization (requires N=0, no ref)."""
        if self.N != 0 or self.ref_user:
            raise ValueError("identity indexing needs N=0 and no reference user")
        return mask

    def symbol_vector(self, state: SlotState, training: np.ndarray | None = None) -> np.ndarray:
        """Length-K' antipodal/0 symbol vector b for one state.

        With N = 1 the interferer symbols come from the state's data bits;
        with N = 0 a `training` row of K known symbols must be supplied.
        The reference user, when present, occupies entry 0.
        """
        b = np.zeros(self.n_users)
        col0 = 0
        if self.ref_user:
            b[0] = state.ref_bit
            col0 = 1
        if self.N == 0:
            if self.K > 0:
                if training is None:
                    raise ValueError("N=0 states carry no data; pass training symbols")
                active = (state.active >> np.arange(self.K)) & 1
                b[col0:] = active * np.asarray(training, dtype=float)
            return b
        if self.N != 1:
            raise ValueError("symbol vectors are defined for N <= 1 (one symbol per slot)")
        j = 0
        for i in range(self.K):
            if state.active >> i & 1:
                b[col0 + i] = 1.0 - 2.0 * (state.data >> j & 1)
                j += 1
        return b

    @cached_property
    def activity_matrix(self) -> np.ndarray:
        """(n_states, K') 0/1 matrix; reference-user column is all ones."""
        out = np.zeros((self.n_states, self.n_users))
        col0 = 1 if self.ref_user else 0
        if self.K > 0:
            bits = (self.state_masks[:, None] >> np.arange(self.K)[None, :]) & 1
            out[:, col0:] = bits
        if self.ref_user:
            out[:, 0] = 1.0
        return out

    @cached_property
    def symbol_matrix(self) -> np.ndarray:
        """(n_states, K') symbol matrix for N = 1 blind states."""
        out = np.zeros((self.n_states, self.n_users))
        for i in range(self.n_states):
            out[i] = self.symbol_vector(self.state_at(i))
        return out


def log_sum_exp(values: np.ndarray, axis=None) -> np.ndarray | float:
    """Max-shifted log-sum-exp; -inf rows stay -inf without warnings."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return -np.inf if axis is None else np.full(v.sum(axis=axis).shape, -np.inf)
    m = np.max(v, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(v - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


class SetDensity:
    """Normalized (or about-to-be-normalized) probability table over the
    states of a universe, stored in the log domain.

    Immutable by convention: operations return new instances and the
    underlying array is write-locked, so instances can be shared across
    threads.
    """

    __slots__ = ("universe", "log_mass")

    def __init__(self, universe: Universe, log_mass, *, _validate: bool = True):
        lm = np.array(log_mass, dtype=float)
        if lm.shape != (universe.n_states,):
            raise ValueError(
                f"log_mass must have shape ({universe.n_states},), got {lm.shape}"
            )
        if _validate and np.any(np.isnan(lm)):
            raise ValueError("log_mass contains NaN")
        lm.setflags(write=False)
        object.__setattr__(self, "universe", universe)
        object.__setattr__(self, "log_mass", lm)

    def __setattr__(self, name, value):
        raise AttributeError("SetDensity is immutable")

    def mass(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_mass)

    def total_mass(self) -> float:
        """Discrete set integral of the table over the whole universe."""
        return float(np.exp(log_sum_exp(self.log_mass)))

    def is_normalized(self, tol: float = MASS_TOL) -> bool:
        return abs(self.total_mass() - 1.0) <= tol

    def normalize(self) -> "SetDensity":
        return normalize(self.universe, self.log_mass)

    def logp(self, state: SlotState) -> float:
        return float(self.log_mass[self.universe.index_of(state)])

    def p(self, state: SlotState) -> float:
        return math.exp(self.logp(state))

    def argmax_state(self) -> SlotState:
        """Most probable state; ties broken toward the lowest index."""
        return self.universe.state_at(int(np.argmax(self.log_mass)))

    def marginal_identity(self) -> "SetDensity":
        """Sum out data bits (and the reference bit): density on 2^K."""
        u = self.universe
        flat = Universe(u.K, 0, False)
        out = np.full(flat.n_identity_sets, -np.inf)
        for mask in range(flat.n_identity_sets):
            sel = self.log_mass[u.state_masks == mask]
            out[mask] = log_sum_exp(sel)
        return SetDensity(flat, out)

    def to_json(self) -> str:
        """Serialize as {"K","N","ref","log_mass"}; -inf encodes as null."""
        lm = [x if math.isfinite(x) else None for x in self.log_mass.tolist()]
        return json.dumps(
            {"K": self.universe.K, "N": self.universe.N,
             "ref": self.universe.ref_user, "log_mass": lm}
        )

    @staticmethod
    def from_json(text: str) -> "SetDensity":
        obj = json.loads(text)
        u = Universe(obj["K"], obj["N"], obj.get("ref", False))
        lm = [(-np.inf if x is None else float(x)) for x in obj["log_mass"]]
        return SetDensity(u, lm)

    @staticmethod
    def point_mass(universe: Universe, state: SlotState) -> "SetDensity":
        lm = np.full(universe.n_states, -np.inf)
        lm[universe.index_of(state)] = 0.0
        return SetDensity(universe, lm)

    @staticmethod
    def uniform(universe: Universe) -> "SetDensity":
        lm = np.full(universe.n_states, -math.log(universe.n_states))
        return SetDensity(universe, lm)


@dataclass(frozen=True)
class BeliefTable:
    """Belief mass function beta(S) = P(X subset of S) over identity sets.

    Defined here only for identity-only universes (N = 0, no reference
    user); data-extended densities are constructed directly from closed
    forms and never pass through a belief table.
    """

    universe: Universe
    values: np.ndarray

    def __post_init__(self):
        if self.universe.N != 0 or self.universe.ref_user:
            raise ValueError("belief tables are defined over identity sets only")
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.universe.n_identity_sets,):
            raise ValueError("belief table must cover every subset")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def beta(self, mask: int) -> float:
        return float(self.values[mask])


def normalize(universe: Universe, log_mass) -> SetDensity:
    """Normalize a log-mass table via max-shifted log-sum-exp.

    Raises if every entry is -inf (numerical collapse of whatever filter
    produced the table).
    """
    lm = np.asarray(log_mass, dtype=float)
    total = log_sum_exp(lm)
    if not math.isfinite(total):
        raise ValueError("cannot normalize: all log masses are -inf (numerical collapse)")
    return SetDensity(universe, lm - total)


def belief_from_density(f: SetDensity) -> BeliefTable:
    """beta(S) = sum of density mass over all subsets of S (zeta transform)."""
    u = f.universe
    if u.N != 0 or u.ref_user:
        raise ValueError("belief_from_density needs an identity-only density (N=0)")
    acc = f.mass().copy()
    for i in range(u.K):
        bit = 1 << i
        has = (np.arange(u.n_identity_sets) & bit) != 0
        acc[has] += acc[np.arange(u.n_identity_sets)[has] ^ bit]
    return BeliefTable(u, acc)


def density_from_belief(beta: BeliefTable) -> SetDensity:
    """Moebius inversion f(A) = sum_{B subset A} (-1)^{|A\\B|} beta(B).

    Inverse of belief_from_density.  A resulting mass below -1e-9 means the
    input was not the belief function of any density and raises.
    """
    u = beta.universe
    acc = np.asarray(beta.values, dtype=float).copy()
    for i in range(u.K):
        bit = 1 << i
        has = (np.arange(u.n_identity_sets) & bit) != 0
        acc[has] -= acc[np.arange(u.n_identity_sets)[has] ^ bit]
    if np.any(acc < -1e-9):
        raise ValueError("inconsistent belief table: Moebius inversion went negative")
    acc = np.clip(acc, 0.0, None)
    with np.errstate(divide="ignore"):
        return SetDensity(u, np.log(acc))


def _ground_mask(f: SetDensity) -> int:
    """Union of all masks carrying nonzero mass."""
    nz = f.mass() > 0.0
    masks = f.universe.state_masks[nz]
    out = 0
    for m in np.unique(masks):
        out |= int(m)
    return out


def _split_data(universe: Universe, mask: int, data: int, part_mask: int) -> tuple[int, int]:
    """Split the packed data bits of (mask, data) between the active users
    inside `part_mask` and the rest, preserving little-endian packing."""
    n = universe.N
    d_in = d_out = 0
    j_in = j_out = 0
    j = 0
    for i in range(universe.K):
        if mask >> i & 1:
            chunk = (data >> (n * j)) & ((1 << n) - 1)
            if part_mask >> i & 1:
                d_in |= chunk << (n * j_in)
                j_in += 1
            else:
                d_out |= chunk << (n * j_out)
                j_out += 1
            j += 1
    return d_in, d_out


def convolve_union(f_survive: SetDensity, f_new: SetDensity) -> SetDensity:
    """Density of the union of two independent random sets with disjoint
    ground sets (survivors inside B, newcomers outside B).

    Output mass at C is f_survive(C intersect B) * f_new(C minus B); data
    bits, when present, ride along with their users.  Raises when the two
    inputs can both charge a common user.
    """
    u = f_survive.universe
    if f_new.universe != u:
        raise ValueError("union convolution needs densities over the same universe")
    g_s = _ground_mask(f_survive)
    g_n = _ground_mask(f_new)
    if g_s & g_n:
        raise ValueError(
            f"overlapping ground sets ({g_s:#x} & {g_n:#x}): survivors and "
            "newcomers must charge disjoint users"
        )
    if u.ref_user:
        raise ValueError("union convolution is defined for interferer densities only")
    if u.N == 0:
        idx = np.arange(u.n_identity_sets)
        out = f_survive.log_mass[idx & g_s] + f_new.log_mass[idx & ~g_s]
    else:
        out = np.empty(u.n_states)
        for i in range(u.n_states):
            st = u.state_at(i)
            w = st.active & g_s
            d_w, d_v = _split_data(u, st.active, st.data, g_s)
            i_s = u.index_of(SlotState(w, d_w))
            i_n = u.index_of(SlotState(st.active & ~g_s, d_v))
            out[i] = f_survive.log_mass[i_s] + f_new.log_mass[i_n]
    return normalize(u, out)
