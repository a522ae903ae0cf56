"""Synchronous DS-CDMA observation model.

Matched-filter-bank sufficient statistics at slot t:

    y = R A b + z,   z ~ N(0, (N0/2) R)

with R the user-count-sized signature correlation matrix, A the diagonal
amplitude matrix and b the antipodal/0 symbol vector of the slot state
(reference user at entry 0 when present).  Signature families implemented:
maximal-length sequences (and their cyclic shifts) and the small Kasami set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

# x^n + sum c_i x^i with taps bit i = c_i (constant term included).
PRIMITIVE_TAPS = {
    2: 0b11,
    3: 0b011,            # x^3 + x + 1
    4: 0b0011,           # x^4 + x + 1
    5: 0b00101,          # x^5 + x^2 + 1
    6: 0b000011,         # x^6 + x + 1
    7: 0b0000011,        # x^7 + x + 1
    8: 0b00011101,       # x^8 + x^4 + x^3 + x^2 + 1
    9: 0b000010001,      # x^9 + x^4 + 1
    10: 0b0000001001,    # x^10 + x^3 + 1
}


def _lfsr_bits(degree: int, taps: int, fill: int = 1) -> np.ndarray:
    """Maximal-length LFSR bit stream of period 2^degree - 1.

    Raises if the taps are not primitive (observed period != 2^degree - 1).
    """
    if degree < 2:
        raise ValueError("LFSR degree must be >= 2")
    if fill <= 0 or fill >= (1 << degree):
        raise ValueError("initial fill must be a nonzero degree-bit pattern")
    period = (1 << degree) - 1
    # state bit j holds output bit t-1-j; feedback mask is the tap mask
    # bit-reversed so that bit j weights coefficient c_{degree-1-j}
    fb_mask = 0
    for j in range(degree):
        if taps >> (degree - 1 - j) & 1:
            fb_mask |= 1 << j
    state = fill
    bits = np.empty(period, dtype=np.int8)
    for t in range(period):
        new = (state & fb_mask).bit_count() & 1
        bits[t] = new
        state = ((state << 1) | new) & period
        if state == fill and t != period - 1:
            raise ValueError(f"taps {taps:#x} are not primitive: period {t + 1} != {period}")
    if state != fill:
        raise ValueError(f"taps {taps:#x} are not primitive: state never recurs")
    return bits


def msequence(degree: int, taps: int | None = None, shift: int = 0) -> np.ndarray:
    """Unit-norm antipodal m-sequence of length 2^degree - 1.

    Bits map 0 -> +1, 1 -> -1; `shift` rotates the sequence cyclically.
    """
    if taps is None:
        try:
            taps = PRIMITIVE_TAPS[degree]
        except KeyError:
            raise ValueError(f"no default primitive polynomial for degree {degree}")
    bits = _lfsr_bits(degree, taps)
    chips = (1.0 - 2.0 * bits).astype(float)
    chips = np.roll(chips, -shift % len(chips))
    return chips / math.sqrt(len(chips))


def kasami_small_set(degree: int) -> np.ndarray:
    """Small Kasami family: 2^(degree/2) unit-norm sequences of length
    2^degree - 1 (degree even).

    Row 0 is the base m-sequence u; the others are u xor cyclic shifts of
    its (2^(degree/2) + 1)-decimation.
    """
    if degree % 2 != 0:
        raise ValueError("small Kasami set needs an even degree")
    length = (1 << degree) - 1
    u = _lfsr_bits(degree, PRIMITIVE_TAPS[degree])
    dec = (1 << (degree // 2)) + 1
    v = u[(dec * np.arange(length)) % length]
    half = 1 << (degree // 2)
    rows = [u]
    for j in range(half - 1):
        rows.append(u ^ np.roll(v, -j))
    chips = 1.0 - 2.0 * np.array(rows, dtype=float)
    return chips / math.sqrt(length)


def build_signatures(family: str, n_users: int, length: int,
                     kasami_indices: tuple[int, ...] | None = None) -> "SignatureSet":
    """Assemble n_users unit-norm signatures of the given chip length.

    family 'msequence': distinct cyclic shifts of one m-sequence (length
    must be 2^d - 1).  family 'kasami': rows of the small Kasami set,
    by default the first n_users of the canonical construction.
    """
    degree = int(round(math.log2(length + 1)))
    if (1 << degree) - 1 != length:
        raise ValueError(f"length must be 2^d - 1, got {length}")
    if family == "msequence":
        if n_users > length:
            raise ValueError(f"only {length} distinct cyclic shifts available")
        chips = np.array([msequence(degree, shift=s) for s in range(n_users)])
    elif family == "kasami":
        fam = kasami_small_set(degree)
        idx = kasami_indices if kasami_indices is not None else tuple(range(n_users))
        if len(idx) != n_users or max(idx, default=-1) >= fam.shape[0]:
            raise ValueError(f"kasami family of size {fam.shape[0]} cannot seat users {idx}")
        chips = fam[list(idx)]
    else:
        raise ValueError(f"unknown signature family '{family}'")
    return SignatureSet(chips)


@dataclass(frozen=True)
class SignatureSet:
    """Unit-norm antipodal signatures, one row per user (reference user at
    row 0 when the experiment has one)."""

    chips: np.ndarray

    def __post_init__(self):
        chips = np.atleast_2d(np.asarray(self.chips, dtype=float))
        norms = np.linalg.norm(chips, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("signatures must be unit norm")
        chips.setflags(write=False)
        object.__setattr__(self, "chips", chips)

    @property
    def n_users(self) -> int:
        return self.chips.shape[0]

    @property
    def length(self) -> int:
        return self.chips.shape[1]

    def save_text(self, path) -> None:
        """Write one +-1 row per user (chips before unit-norm scaling)."""
        raw = np.sign(self.chips).astype(int)
        np.savetxt(path, raw, fmt="%+d")


def correlation_matrix(signatures: SignatureSet | np.ndarray) -> np.ndarray:
    """Signature cross-correlation matrix R[i,j] = <s_i, s_j>.

    Symmetric with unit diagonal; raises when the signatures are linearly
    dependent (Cholesky failure).
    """
    chips = signatures.chips if isinstance(signatures, SignatureSet) else np.atleast_2d(signatures)
    r = chips @ chips.T
    r = (r + r.T) / 2.0
    try:
        np.linalg.cholesky(r)
    except np.linalg.LinAlgError:
        raise ValueError("linearly dependent signature set: correlation matrix not positive definite")
    return r


@dataclass(frozen=True)
class ChannelModel:
    """Fixed channel context: correlation matrix R, per-user amplitudes
    (diagonal of A), and one-sided noise level N0."""

    R: np.ndarray
    amplitudes: np.ndarray
    N0: float
    chol: np.ndarray = field(init=False, repr=False)
    _cho: tuple = field(init=False, repr=False)

    def __post_init__(self):
        r = np.asarray(self.R, dtype=float)
        a = np.atleast_1d(np.asarray(self.amplitudes, dtype=float))
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValueError("R must be square")
        if a.shape != (r.shape[0],):
            raise ValueError("amplitudes must match the user count of R")
        if np.any(a <= 0):
            raise ValueError("amplitudes must be positive")
        if not self.N0 > 0:
            raise ValueError("N0 must be positive")
        if np.max(np.abs(r - r.T)) > 1e-10:
            raise ValueError("R must be symmetric")
        try:
            chol = np.linalg.cholesky(r)
        except np.linalg.LinAlgError:
            raise ValueError("R must be positive definite")
        r.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "R", r)
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "chol", chol)
        object.__setattr__(self, "_cho", cho_factor(r, lower=True))

    @property
    def n_users(self) -> int:
        return self.R.shape[0]

    def solve_R(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve(self._cho, rhs)

    def mean_observation(self, b: np.ndarray) -> np.ndarray:
        """Noiseless matched-filter output R A b."""
        return self.R @ (self.amplitudes * b)

    def noise(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        """Draw matched-filter noise with covariance (N0/2) R."""
        scale = math.sqrt(self.N0 / 2.0)
        if n is None:
            return scale * (self.chol @ rng.standard_normal(self.n_users))
        return scale * (rng.standard_normal((n, self.n_users)) @ self.chol.T)


def synthesize_observation(c: ChannelModel, b: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One slot observation y = R A b + z for the symbol vector b."""
    b = np.asarray(b, dtype=float)
    if b.shape != (c.n_users,):
        raise ValueError(f"symbol vector must have length {c.n_users}")
    return c.mean_observation(b) + c.noise(rng)


def log_likelihood(c: ChannelModel, y: np.ndarray, b: np.ndarray) -> float:
    """-(1/N0) (y - RAb)' R^-1 (y - RAb); state-independent constant dropped
    (differences between hypotheses are exact)."""
    resid = np.asarray(y, dtype=float) - c.mean_observation(np.asarray(b, dtype=float))
    return float(-(resid @ c.solve_R(resid)) / c.N0)


def log_likelihood_constant(c: ChannelModel) -> float:
    """Additive constant restoring the proper Gaussian log-density."""
    k = c.n_users
    _, logdet = np.linalg.slogdet(c.R)
    return -0.5 * (k * math.log(math.pi * c.N0) + logdet)


def emission_log_liks(c: ChannelModel, y: np.ndarray, symbols: np.ndarray) -> np.ndarray:
    """log_likelihood of one observation under every row of a (S, K')
    state-symbol matrix; identical values to log_likelihood row by row."""
    y = np.asarray(y, dtype=float)
    w = np.asarray(symbols, dtype=float) * c.amplitudes
    quad = np.einsum("sk,sk->s", w @ c.R, w)
    base = float(y @ c.solve_R(y))
    return -(base - 2.0 * (w @ y) + quad) / c.N0


def batch_emission_log_liks(c: ChannelModel, ys: np.ndarray, symbols: np.ndarray) -> np.ndarray:
    """(n, S) emission scores for n observations at once."""
    ys = np.asarray(ys, dtype=float)
    w = np.asarray(symbols, dtype=float) * c.amplitudes
    quad = np.einsum("sk,sk->s", w @ c.R, w)
    base = np.einsum("nk,nk->n", ys, c.solve_R(ys.T).T)
    return -(base[:, None] - 2.0 * (ys @ w.T) + quad[None, :]) / c.N0
