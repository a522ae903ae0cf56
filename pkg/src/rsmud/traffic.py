"""Birth/death traffic model for the set of active interferers.

Per slot, each active user stays active with persistence probability mu and
each inactive user turns on with activity probability alpha, independently
across users and slots.  A user that just switched off cannot come back in
the same step, which is what makes the survival and birth kernels live on
disjoint ground sets.  Data bits, when modeled (N >= 1), are i.i.d. uniform
and resampled every slot, contributing a 2^(-N|C|) factor to every kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .randset import SetDensity, Universe, convolve_union, normalize, popcount


def _xlogy(x, y):
    """x * log(y) with the convention 0 * log(0) = 0."""
    if x == 0:
        return 0.0
    return x * (math.log(y) if y > 0 else -math.inf)


@dataclass(frozen=True)
class TrafficModel:
    """K potential interferers, activity alpha, persistence mu, N data
    symbols per user per slot."""

    K: int
    alpha: float
    mu: float = 0.0
    N: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0,1], got {self.alpha}")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"mu must be in [0,1], got {self.mu}")

    def universe(self, ref_user: bool = False) -> Universe:
        return Universe(self.K, self.N, ref_user)


def static_prior(model: TrafficModel, ref_user: bool = False) -> SetDensity:
    """Prior of the active set at a single slot.

    f(B) = alpha^|B| (1-alpha)^(K-|B|), times 2^(-N|B|) per data pattern
    when N >= 1, times 1/2 for the reference user's unknown bit.
    """
    u = model.universe(ref_user)
    sizes = popcount(u.state_masks)
    la = np.array([_xlogy(k, model.alpha) for k in range(model.K + 1)])
    lb = np.array([_xlogy(model.K - k, 1.0 - model.alpha) for k in range(model.K + 1)])
    lm = la[sizes] + lb[sizes] - model.N * sizes * math.log(2.0)
    if ref_user:
        lm = lm - math.log(2.0)
    return SetDensity(u, lm)


def _masked_kernel(model: TrafficModel, valid, n_on_log, n_off_log) -> SetDensity:
    """Shared body of the survival/birth kernels: per-cardinality log mass
    on the valid masks, -inf elsewhere, data factor included."""
    u = model.universe()
    sizes = popcount(u.state_masks)
    lm = np.where(valid[u.state_masks],
                  n_on_log[sizes] + n_off_log[sizes] - model.N * sizes * math.log(2.0),
                  -np.inf)
    return SetDensity(u, lm)


def survival_kernel(model: TrafficModel, active: int) -> SetDensity:
    """Distribution of the survivors of the set `active`:
    mu^|C| (1-mu)^(|B|-|C|) on C subset of B, zero elsewhere."""
    b_size = popcount(active)
    masks = np.arange(1 << model.K)
    valid = (masks & ~active) == 0
    on = np.array([_xlogy(k, model.mu) for k in range(model.K + 1)])
    off = np.array([_xlogy(b_size - k, 1.0 - model.mu) if k <= b_size else -np.inf
                    for k in range(model.K + 1)])
    return _masked_kernel(model, valid, on, off)


def birth_kernel(model: TrafficModel, active: int) -> SetDensity:
    """Distribution of the newcomers given the previous set `active`:
    alpha^|C| (1-alpha)^(K-|B|-|C|) on C disjoint from B, zero elsewhere."""
    room = model.K - popcount(active)
    masks = np.arange(1 << model.K)
    valid = (masks & active) == 0
    on = np.array([_xlogy(k, model.alpha) for k in range(model.K + 1)])
    off = np.array([_xlogy(room - k, 1.0 - model.alpha) if k <= room else -np.inf
                    for k in range(model.K + 1)])
    return _masked_kernel(model, valid, on, off)


def transition_density(model: TrafficModel, active: int) -> SetDensity:
    """One-step transition row f(. | active): union convolution of the
    survival and birth kernels (births and deaths conditionally independent)."""
    surv = survival_kernel(model, active)
    born = birth_kernel(model, active)
    return convolve_union(surv, born)


def transition_matrix(model: TrafficModel) -> np.ndarray:
    """Dense (2^K, 2^K) identity-level transition matrix, linear domain.

    Row B, column C: mu^|C&B| (1-mu)^|B\\C| alpha^|C\\B| (1-alpha)^(K-|B|-|C\\B|).
    Dense enumeration only; refuses K > 12.
    """
    if model.K > 12:
        raise ValueError("dense transition matrix limited to K <= 12")
    n = 1 << model.K
    b = np.arange(n, dtype=np.uint32)[:, None]
    c = np.arange(n, dtype=np.uint32)[None, :]
    kept = popcount(b & c)
    died = popcount(b & ~c)
    born = popcount(c & ~b)
    room = model.K - popcount(b) - born

    def pw(base, e):
        # 0^0 = 1 without warnings
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(e == 0, 1.0, base ** e)
        return out

    return (pw(model.mu, kept) * pw(1.0 - model.mu, died)
            * pw(model.alpha, born) * pw(1.0 - model.alpha, room))


def stationary_activity(model: TrafficModel) -> float:
    """Fixed point p* = alpha / (1 + alpha - mu) of the per-user two-state
    chain.  Undefined for the absorbing chain mu=1, alpha=0."""
    den = 1.0 + model.alpha - model.mu
    if den <= 0.0:
        raise ValueError("stationary activity undefined: mu=1, alpha=0 is absorbing")
    return model.alpha / den


def sample_initial_masks(density: SetDensity, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n identity masks from an identity-level density."""
    u = density.universe
    if u.N != 0 or u.ref_user:
        raise ValueError("initial mask sampling needs an identity-only density")
    return rng.choice(u.n_identity_sets, size=n, p=density.mass())


def evolve_masks(model: TrafficModel, masks: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One birth/death step applied to an array of masks (vectorized over
    trials): active users persist w.p. mu, inactive turn on w.p. alpha."""
    masks = np.asarray(masks, dtype=np.uint32)
    n = masks.shape[0]
    out = np.zeros_like(masks)
    for i in range(model.K):
        bit = np.uint32(1 << i)
        act = (masks & bit) != 0
        stay = rng.random(n) < model.mu
        born = rng.random(n) < model.alpha
        keep = np.where(act, stay, born)
        out |= np.where(keep, bit, np.uint32(0))
    return out
