"""Experiment engine: seeded Monte Carlo sweeps over Eb/N0, metric
accumulation, figure presets, and CSV/JSON emission.

Conventions: perfect power control with unit amplitudes, so Eb = 1 and the
sweep point x dB sets N0 = 10^(-x/10).  Trials are simulated in fixed-size
chunks, each chunk drawing from its own counter-based (Philox) stream keyed
by (sweep point, chunk); results are bit-identical for a given seed no
matter how many worker threads run the sweep points.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import analysis, detect
from .channel import ChannelModel, batch_emission_log_liks, build_signatures, \
    correlation_matrix
from .randset import Universe, log_sum_exp
from .traffic import TrafficModel, evolve_masks, static_prior

SCENARIOS = ("static_trained", "static_blind", "dynamic_trained", "dynamic_blind")
DETECTORS = ("classic_ml", "joint_ml", "map_static", "bayes_causal", "viterbi",
             "viterbi_window")
THREADS_ENV = "RSMUD_THREADS"


@dataclass(frozen=True)
class MetricRecord:
    metric: str
    point_db: float
    estimate: float
    stderr: float
    trials: int
    errors: int


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    users: int
    alpha: float
    mu: float = 0.0
    symbols_per_slot: int | None = None
    spreading: str = "kasami"
    length: int = 15
    kasami_indices: tuple | None = None
    ebn0_db: tuple = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0)
    detectors: tuple = ("map_static",)
    window_delta: int = 2
    frame_length: int = 1
    trials: int = 100_000
    seed: int = 0
    reference_user: bool = False
    metrics: tuple = ()
    stop_errors: int | None = None
    bounds: tuple = ()
    restrict_n: int = 2
    bound_samples: int = 1000
    label: str = ""

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario '{self.scenario}'")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.ebn0_db:
            raise ValueError("Eb/N0 sweep must be nonempty")
        if self.frame_length < 1:
            raise ValueError("frame_length must be >= 1")
        n = self.symbols_per_slot
        if n is None:
            n = 0 if self.trained else 1
            object.__setattr__(self, "symbols_per_slot", n)
        if self.trained and (n != 0 or self.reference_user):
            raise ValueError("trained scenarios use known data: symbols_per_slot=0 "
                             "and no reference user")
        if not self.trained and n != 1:
            raise ValueError("blind scenarios transmit one unknown symbol per slot")
        if not self.trained and self.users == 0 and not self.reference_user:
            raise ValueError("nothing to detect: no interferers and no reference user")
        dets = self._resolve_detectors()
        object.__setattr__(self, "detectors", dets)
        mets = tuple(self.metrics) or self._default_metrics()
        for m in mets:
            self._check_metric(m)
        object.__setattr__(self, "metrics", mets)
        for b in self.bounds:
            if b != "union" and b != "semianalytic" and not _parse_pn(b):
                raise ValueError(f"unknown bound '{b}'")
            if b == "semianalytic" and not self.dynamic:
                raise ValueError("the semianalytic bound applies to dynamic scenarios")
            if (b == "union" or _parse_pn(b)) and self.dynamic:
                raise ValueError("the static union bound applies to static scenarios")

    @property
    def trained(self) -> bool:
        return self.scenario.endswith("_trained")

    @property
    def dynamic(self) -> bool:
        return self.scenario.startswith("dynamic")

    def _resolve_detectors(self) -> tuple:
        out = []
        for d in self.detectors:
            if d not in DETECTORS:
                raise ValueError(f"unknown detector '{d}'")
            if d in ("classic_ml", "joint_ml") and self.trained:
                raise ValueError(f"detector '{d}' needs unknown data (blind scenario)")
            if d in ("bayes_causal", "viterbi", "viterbi_window") and not self.dynamic:
                d = "map_static"  # sequence detectors reduce to static MAP
            if d not in out:
                out.append(d)
        if not out:
            raise ValueError("at least one detector is required")
        return tuple(out)

    def _default_metrics(self) -> tuple:
        if self.reference_user:
            return ("ber",)
        return ("ssep",) if self.dynamic else ("sep",)

    def _check_metric(self, name: str) -> None:
        base, _, slot = name.partition("@")
        if base not in ("ber", "sep", "ssep", "bsep"):
            raise ValueError(f"unknown metric '{name}'")
        if base == "ber" and not self.reference_user:
            raise ValueError("ber needs a reference user")
        if base == "bsep" and self.trained:
            raise ValueError("bsep needs unknown data (blind scenario)")
        if slot and not (slot.isdigit() and 1 <= int(slot) <= self.frame_length):
            raise ValueError(f"bad slot qualifier in metric '{name}'")

    def universe(self) -> Universe:
        return Universe(self.users, self.symbols_per_slot, self.reference_user)

    def traffic_model(self) -> TrafficModel:
        return TrafficModel(self.users, self.alpha, self.mu, self.symbols_per_slot)


def compute_metrics(truth, estimate, kind: str, *, blind: bool = False):
    """Reference per-trial error indicators for two slot-state sequences.

    'ber'  -> fraction of reference-bit mismatches over the frame
    'sep'  -> per-slot 0/1 array of active-set mismatches
    'ssep' -> single 0/1 indicator: any slot mismatched (active sets, or
              active sets plus data when blind)
    'bsep' -> per-slot 0/1 array of identity-or-data mismatches
    """
    truth = list(truth)
    estimate = list(estimate)
    if len(truth) != len(estimate):
        raise ValueError("sequences must have equal length")
    if kind == "ber":
        errs = sum(1 for a, b in zip(truth, estimate) if a.ref_bit != b.ref_bit)
        return errs / len(truth)
    if kind == "sep":
        return np.array([int(a.active != b.active) for a, b in zip(truth, estimate)])
    if kind == "bsep":
        return np.array([int(a.active != b.active or a.data != b.data)
                         for a, b in zip(truth, estimate)])
    if kind == "ssep":
        if blind:
            return int(any(a.active != b.active or a.data != b.data
                           for a, b in zip(truth, estimate)))
        return int(any(a.active != b.active for a, b in zip(truth, estimate)))
    raise ValueError(f"unknown metric kind '{kind}'")


def _parse_pn(name: str) -> int | None:
    if name.startswith("p") and name[1:].isdigit() and int(name[1:]) >= 1:
        return int(name[1:])
    return None


def _chunk_size(n_states: int) -> int:
    # fixed by the state-space size only, so RNG streams never depend on
    # memory or thread count
    if n_states <= 32:
        return 4096
    if n_states <= 128:
        return 1024
    return 256


def _rng_for(seed: int, point: int, chunk: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(point, chunk))
    return np.random.Generator(np.random.Philox(ss))


def _training_matrix(cfg: ExperimentConfig) -> np.ndarray | None:
    """Known +-1 symbols per (slot, user) for trained scenarios; drawn once
    per experiment and shared by the simulation and the bounds."""
    if not cfg.trained:
        return None
    rng = _rng_for(cfg.seed, 1 << 20, 0)
    return 1.0 - 2.0 * rng.integers(0, 2, size=(cfg.frame_length, cfg.users)).astype(float)


class _Accumulator:
    __slots__ = ("errors", "opportunities")

    def __init__(self):
        self.errors = 0
        self.opportunities = 0

    def add(self, errs: int, opps: int):
        self.errors += int(errs)
        self.opportunities += int(opps)

    def record(self, name: str, point_db: float) -> MetricRecord:
        p = self.errors / self.opportunities
        stderr = math.sqrt(p * (1.0 - p) / self.opportunities)
        return MetricRecord(name, point_db, p, stderr, self.opportunities, self.errors)


def _draw_truth(cfg: ExperimentConfig, n: int, rng: np.random.Generator):
    """Sample activity masks (n, T), interferer symbols (n, T, K) and
    reference bits (n, T); symbols of inactive users are zeroed."""
    k, horizon = cfg.users, cfg.frame_length
    if cfg.dynamic:
        masks = np.zeros((n, horizon), dtype=np.uint32)
        prev = _bernoulli_masks(cfg.alpha, k, n, rng)
        model = cfg.traffic_model()
        for t in range(horizon):
            prev = evolve_masks(model, prev, rng)
            masks[:, t] = prev
    else:
        masks = np.repeat(_bernoulli_masks(cfg.alpha, k, n, rng)[:, None], horizon, axis=1)
    active = ((masks[:, :, None] >> np.arange(k)[None, None, :]) & 1).astype(float)
    if cfg.trained:
        symbols = None
    else:
        symbols = (1.0 - 2.0 * rng.integers(0, 2, size=(n, horizon, k))) * active
    refs = None
    if cfg.reference_user:
        refs = 1.0 - 2.0 * rng.integers(0, 2, size=(n, horizon)).astype(float)
    return masks, active, symbols, refs


def _bernoulli_masks(alpha: float, k: int, n: int, rng: np.random.Generator) -> np.ndarray:
    out = np.zeros(n, dtype=np.uint32)
    for i in range(k):
        out |= (rng.random(n) < alpha).astype(np.uint32) << np.uint32(i)
    return out


def _observations(cfg: ExperimentConfig, c: ChannelModel, active, symbols, refs,
                  training, rng) -> np.ndarray:
    """Y (n, T, K'): matched-filter outputs for every trial and slot."""
    n, horizon, k = active.shape
    b = np.zeros((n, horizon, c.n_users))
    col0 = 1 if cfg.reference_user else 0
    if cfg.reference_user:
        b[:, :, 0] = refs
    if k:
        b[:, :, col0:] = symbols if symbols is not None else active * training[None, :, :]
    mean = b @ (c.amplitudes[:, None] * c.R)
    noise = rng.standard_normal((n, horizon, c.n_users)) @ c.chol.T * math.sqrt(c.N0 / 2.0)
    return mean + noise


class _PointRunner:
    """All per-sweep-point precomputation shared across chunks."""

    def __init__(self, cfg: ExperimentConfig, ebn0_db: float, training):
        self.cfg = cfg
        self.training = training
        self.universe = cfg.universe()
        self.model = cfg.traffic_model()
        n_users = cfg.users + (1 if cfg.reference_user else 0)
        sigs = build_signatures(cfg.spreading, n_users, cfg.length,
                                kasami_indices=cfg.kasami_indices)
        r = correlation_matrix(sigs)
        n0 = 10.0 ** (-ebn0_db / 10.0)
        self.channel = ChannelModel(r, np.ones(n_users), n0)
        u = self.universe
        self.state_masks = u.state_masks
        if cfg.trained:
            self.slot_symbols = u.activity_matrix[None, :, :] * training[:, None, :]
        else:
            self.slot_symbols = np.repeat(u.symbol_matrix[None, :, :], cfg.frame_length, axis=0)
        self.state_ref = None
        if cfg.reference_user:
            self.state_ref = u.symbol_matrix[:, 0]
        if cfg.dynamic:
            self.t_lin = detect.state_transition_matrix(self.model, u)
            with np.errstate(divide="ignore"):
                self.log_t = np.log(self.t_lin)
            prior1 = detect.bayes_predict(detect.default_prior0(self.model, u), self.model)
            self.log_prior1 = prior1.log_mass
        self.log_static_prior = static_prior(self.model, cfg.reference_user).log_mass
        full = u.n_identity_sets - 1
        self.full_group = np.flatnonzero(self.state_masks == full)
        self.mask_groups = [np.flatnonzero(self.state_masks == m)
                            for m in range(u.n_identity_sets)]

    def emissions(self, ys: np.ndarray) -> np.ndarray:
        """(n, T, S) log-likelihood of every state at every slot."""
        n, horizon, _ = ys.shape
        out = np.empty((n, horizon, self.universe.n_states))
        for t in range(horizon):
            out[:, t, :] = batch_emission_log_liks(self.channel, ys[:, t, :],
                                                   self.slot_symbols[t])
        return out

    def decide(self, name: str, emits: np.ndarray) -> np.ndarray:
        """(n, T) decided state indices for the named detector."""
        cfg = self.cfg
        n, horizon, _ = emits.shape
        if name == "classic_ml":
            sub = emits[:, :, self.full_group]
            return self.full_group[np.argmax(sub, axis=2)]
        if name == "joint_ml" and (cfg.dynamic or horizon == 1):
            return np.argmax(emits, axis=2)
        if name == "map_static" and cfg.dynamic:
            return np.argmax(emits + self.log_static_prior[None, None, :], axis=2)
        if name in ("joint_ml", "map_static"):
            return self._static_frame_map(emits, uniform=(name == "joint_ml"))
        if name == "bayes_causal":
            dec, _ = detect.filter_decisions_batch(emits, self.t_lin, self.log_prior1)
            return dec
        if name == "viterbi":
            return detect.viterbi_decisions_batch(emits, self.log_t, self.log_prior1)
        if name == "viterbi_window":
            return self._window_viterbi(emits)
        raise ValueError(f"unhandled detector '{name}'")

    def _static_frame_map(self, emits: np.ndarray, uniform: bool) -> np.ndarray:
        """Frame MAP with frozen identities: maximize over the identity set
        jointly with each slot's data/reference bit."""
        u = self.universe
        n, horizon, _ = emits.shape
        if self.cfg.trained:
            prior = np.zeros(u.n_identity_sets) if uniform \
                else static_prior(TrafficModel(u.K, self.cfg.alpha, 0.0, 0)).log_mass
            scores = emits.sum(axis=1) + prior[None, :]
            masks = np.argmax(scores, axis=1)
            return np.repeat(masks[:, None], horizon, axis=1)
        marg = np.array([log_sum_exp(self.log_static_prior[g]) for g in self.mask_groups])
        lifted = marg[self.state_masks]
        with np.errstate(invalid="ignore"):
            cond = np.where(np.isfinite(lifted), self.log_static_prior - lifted, -np.inf)
        scores = np.zeros((n, u.n_identity_sets))
        best = np.zeros((n, horizon, u.n_identity_sets), dtype=np.int32)
        for m, g in enumerate(self.mask_groups):
            local = emits[:, :, g]
            if not uniform:
                local = local + cond[g][None, None, :]
            pick = np.argmax(local, axis=2)
            best[:, :, m] = g[pick]
            picked = np.take_along_axis(local, pick[:, :, None], axis=2)[:, :, 0]
            scores[:, m] = picked.sum(axis=1)
            if not uniform:
                scores[:, m] += marg[m]
        masks = np.argmax(scores, axis=1)
        return np.take_along_axis(best, masks[:, None, None].astype(np.int64), axis=2)[:, :, 0]

    def _window_viterbi(self, emits: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        n, horizon, _ = emits.shape
        pushed = [self.log_prior1]
        lin = np.exp(self.log_prior1 - np.max(self.log_prior1))
        lin /= lin.sum()
        for _ in range(horizon - 1):
            lin = lin @ self.t_lin
            with np.errstate(divide="ignore"):
                pushed.append(np.log(lin))
        out = np.zeros((n, horizon), dtype=np.int64)
        delta = cfg.window_delta
        for t in range(horizon):
            lo = max(0, t - delta)
            hi = min(horizon, t + delta + 1)
            path = detect.viterbi_decisions_batch(emits[:, lo:hi, :], self.log_t, pushed[lo])
            out[:, t] = path[:, t - lo]
        return out


def _metric_errors(cfg: ExperimentConfig, point: "_PointRunner", metric: str,
                   decided: np.ndarray, masks, symbols, refs) -> tuple[int, int]:
    """Error and opportunity counts of one metric over one chunk."""
    n, horizon = decided.shape
    est_masks = point.state_masks[decided]
    base, _, slot = metric.partition("@")
    if base == "ber":
        est_ref = point.state_ref[decided]
        err = est_ref != refs
        if slot:
            t = int(slot) - 1
            return int(err[:, t].sum()), n
        return int(err.sum()), n * horizon
    id_err = est_masks != masks
    if base == "sep":
        if slot:
            t = int(slot) - 1
            return int(id_err[:, t].sum()), n
        return int(id_err.sum()), n * horizon
    # identity-or-data mismatch per slot (interferer columns only)
    if base in ("bsep", "ssep") and not cfg.trained and cfg.users > 0:
        col0 = 1 if cfg.reference_user else 0
        est_sym = point.universe.symbol_matrix[decided][:, :, col0:]
        full_err = id_err | np.any(est_sym != symbols, axis=2)
    else:
        full_err = id_err
    if base == "bsep":
        if slot:
            t = int(slot) - 1
            return int(full_err[:, t].sum()), n
        return int(full_err.sum()), n * horizon
    if base == "ssep":
        return int(np.any(full_err, axis=1).sum()), n
    raise ValueError(f"unknown metric '{metric}'")


def _run_point(cfg: ExperimentConfig, point_idx: int, ebn0_db: float, training) -> list[MetricRecord]:
    runner = _PointRunner(cfg, ebn0_db, training)
    accs = {(d, m): _Accumulator() for d in cfg.detectors for m in cfg.metrics}
    chunk = _chunk_size(runner.universe.n_states)
    done = 0
    chunk_idx = 0
    while done < cfg.trials:
        n = min(chunk, cfg.trials - done)
        rng = _rng_for(cfg.seed, point_idx, chunk_idx)
        masks, active, symbols, refs = _draw_truth(cfg, n, rng)
        ys = _observations(cfg, runner.channel, active, symbols, refs, training, rng)
        emits = runner.emissions(ys)
        for d in cfg.detectors:
            decided = runner.decide(d, emits)
            for m in cfg.metrics:
                errs, opps = _metric_errors(cfg, runner, m, decided, masks, symbols, refs)
                accs[(d, m)].add(errs, opps)
        done += n
        chunk_idx += 1
        if cfg.stop_errors is not None and all(a.errors >= cfg.stop_errors
                                               for a in accs.values()):
            break
    prefix = f"{cfg.label}:" if cfg.label else ""
    records = [accs[(d, m)].record(f"{prefix}{d}.{m}", ebn0_db)
               for d in cfg.detectors for m in cfg.metrics]
    records.extend(_bound_records(cfg, runner, point_idx, ebn0_db, training, prefix))
    return records


def _bound_records(cfg: ExperimentConfig, runner: "_PointRunner", point_idx: int,
                   ebn0_db: float, training, prefix: str) -> list[MetricRecord]:
    out = []
    flat_universe = Universe(cfg.users, cfg.symbols_per_slot, False)
    for b in cfg.bounds:
        if b == "union" or _parse_pn(b):
            restrict = _parse_pn(b)
            val = analysis.union_bound_static(
                flat_universe, runner.model, runner.channel, cfg.frame_length,
                restrict_n=restrict, mode="map_identities", training=training)
            out.append(MetricRecord(f"{prefix}bound.{b}", ebn0_db, val, 0.0, 0, 0))
        elif b == "semianalytic":
            rng = _rng_for(cfg.seed, point_idx, 1 << 21)
            mode = "map_identities" if cfg.trained else "map_with_data"
            val, se = analysis.semianalytic_dynamic_bound(
                flat_universe, runner.model, runner.channel, cfg.frame_length,
                cfg.bound_samples, cfg.restrict_n, rng, training=training, mode=mode)
            out.append(MetricRecord(f"{prefix}bound.semianalytic", ebn0_db, val, se,
                                    cfg.bound_samples, 0))
    return out


def run_experiment(cfg: ExperimentConfig) -> list[MetricRecord]:
    """Run the full sweep; deterministic for a given config and seed."""
    training = _training_matrix(cfg)
    workers = max(1, int(os.environ.get(THREADS_ENV, "1") or "1"))
    points = list(enumerate(cfg.ebn0_db))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda p: _run_point(cfg, p[0], p[1], training), points))
    else:
        chunks = [_run_point(cfg, i, db, training) for i, db in points]
    return [rec for chunk in chunks for rec in chunk]


# ---------------------------------------------------------------------------
# configuration file handling and presets

_BOOL = {"true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}

_LIST_KEYS = {"ebn0_db", "detectors", "metrics", "bounds"}
_INT_KEYS = {"users", "symbols_per_slot", "length", "window_delta", "frame_length",
             "trials", "seed", "stop_errors", "restrict_n", "bound_samples"}
_FLOAT_KEYS = {"alpha", "mu"}
_KEY_ALIASES = {"detector": "detectors", "metric": "metrics", "ebn0": "ebn0_db",
                "k": "users", "t": "frame_length"}


def parse_config_text(text: str) -> dict:
    """Flat `key = value` grammar, one per line, '#' comments."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lower()] = value
    return out


def config_from_mapping(mapping: dict) -> ExperimentConfig:
    kwargs = {}
    for key, value in mapping.items():
        key = _KEY_ALIASES.get(key.lower(), key.lower())
        if key not in ExperimentConfig.__dataclass_fields__:
            raise ValueError(f"unknown configuration key '{key}'")
        if isinstance(value, str):
            if key in _LIST_KEYS:
                items = [v.strip() for v in value.split(",") if v.strip()]
                value = tuple(float(v) for v in items) if key == "ebn0_db" else tuple(items)
            elif key == "kasami_indices":
                value = tuple(int(v) for v in value.split(",") if v.strip())
            elif key in _INT_KEYS:
                value = int(value)
            elif key in _FLOAT_KEYS:
                value = float(value)
            elif key == "reference_user":
                value = _BOOL[value.lower()]
        kwargs[key] = value
    if "scenario" not in kwargs:
        raise ValueError("configuration must set 'scenario'")
    if "users" not in kwargs:
        raise ValueError("configuration must set 'users'")
    if "alpha" not in kwargs:
        raise ValueError("configuration must set 'alpha'")
    return ExperimentConfig(**kwargs)


def load_config(path: str, overrides: dict | None = None) -> ExperimentConfig:
    with open(path) as fh:
        mapping = parse_config_text(fh.read())
    if overrides:
        mapping.update(overrides)
    return config_from_mapping(mapping)


def _fig12_base(detectors: str) -> dict:
    return {"scenario": "static_blind", "users": "2", "spreading": "kasami",
            "length": "15", "reference_user": "true", "frame_length": "1",
            "detectors": detectors, "metrics": "ber", "trials": "100000",
            "ebn0_db": "0,2,4,6,8,10,12"}


PRESETS: dict[str, list[dict]] = {
    # two Kasami-15 interferers + reference user: classic all-active ML vs
    # joint ML over identities and data, swept over the activity factor
    "fig1": [dict(_fig12_base("classic_ml,joint_ml"), alpha=str(a), label=f"alpha{a}")
             for a in (0.1, 0.5, 0.9)],
    # same geometry: joint ML vs MAP detection that knows alpha
    "fig2": [dict(_fig12_base("joint_ml,map_static"), alpha=str(a), label=f"alpha{a}")
             for a in (0.1, 0.5)],
    # dynamic channel: knowledge of the dynamics helps the causal filter
    # and the sequence detector
    "fig3": [{"scenario": "dynamic_blind", "users": "2", "alpha": "0.2", "mu": "0.8",
              "spreading": "kasami", "length": "15", "reference_user": "true",
              "frame_length": "10", "detectors": "classic_ml,map_static,bayes_causal,viterbi",
              "metrics": "ber", "trials": "20000", "ebn0_db": "0,2,4,6,8,10,12"}],
    # trained static identification, K=6 users on length-7 m-sequence
    # shifts: simulated SEP vs union bound vs its n=1 restriction
    "fig4": [{"scenario": "static_trained", "users": "6", "alpha": "0.5",
              "spreading": "msequence", "length": "7", "detectors": "map_static",
              "metrics": "sep@1", "bounds": "union,p1", "frame_length": str(t),
              "label": f"T{t}", "trials": "100000", "ebn0_db": "0,2,4,6,8,10,12"}
             for t in (1, 2, 3)],
    # trained dynamic tracking: causality penalty of the Bayes filter at the
    # first slot vs the non-causal Viterbi detector
    "fig5": [{"scenario": "dynamic_trained", "users": "3", "alpha": "0.2", "mu": "0.8",
              "spreading": "msequence", "length": "7", "frame_length": "10",
              "detectors": "viterbi,bayes_causal", "metrics": "sep@1,sep@10",
              "trials": "100000", "ebn0_db": "0,2,4,6,8,10,12"}],
    # trained dynamic SSEP with the semi-analytic Monte Carlo bound
    "fig6": [{"scenario": "dynamic_trained", "users": "6", "alpha": "0.2", "mu": "0.8",
              "spreading": "msequence", "length": "7", "frame_length": "10",
              "detectors": "viterbi", "metrics": "ssep", "bounds": "semianalytic",
              "restrict_n": "2", "bound_samples": "1000", "trials": "20000",
              "ebn0_db": "0,3,6,9,12"}],
}


def preset_configs(name: str, overrides: dict | None = None) -> list[ExperimentConfig]:
    if name not in PRESETS:
        raise ValueError(f"unknown preset '{name}' (have {', '.join(sorted(PRESETS))})")
    out = []
    for mapping in PRESETS[name]:
        merged = dict(mapping)
        if overrides:
            merged.update(overrides)
        out.append(config_from_mapping(merged))
    return out


def write_csv(records: list[MetricRecord], path) -> None:
    lines = ["metric,point_db,estimate,stderr,trials"]
    for r in records:
        lines.append(f"{r.metric},{r.point_db:.10g},{r.estimate:.10g},"
                     f"{r.stderr:.10g},{r.trials}")
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def write_sidecar(configs: list[ExperimentConfig], path) -> None:
    """JSON sidecar echoing every resolved configuration."""
    payload = {"configs": [asdict(c) for c in configs]}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=list)
