"""Monte-Carlo evaluation of threshold stopping rules.

Trials are independent jobs: trial t draws its trajectory from the
stream seeded with seed_base + t, bit-identical to
signal_core.simulate_trajectory with that seed.  The scan engine
vectorizes the two-state filter and occupation recursions across trials
(working with log likelihood ratios so extreme observations cannot
overflow) and reproduces stopping.run_with_resets alarm for alarm.
Aggregation uses order-insensitive reductions, so results do not depend
on chunking or the number of worker threads.

The "shiryaev" rule variant runs the identical machinery with the
filter's anomalous self-transition forced to 1 while the data keep the
true intermittent dynamics; the mismatch is the point of the
comparison.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .signal_core import (
    Belief,
    GaussianPairObservation,
    TransitionModel2,
    stationary_distribution,
)
from .stopping import RESET_POLICIES, RESET_TO_INITIAL

RULE_INTERMITTENT = "intermittent"
RULE_SHIRYAEV = "shiryaev"
RULE_VARIANTS = (RULE_INTERMITTENT, RULE_SHIRYAEV)

DEFAULT_THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99)
_CHUNK_SIZE = 1000


@dataclass(frozen=True)
class ExperimentSpec:
    """Full description of one sweep experiment.

    sigma2 may be a single variance or a sweep list; thresholds is the
    rule sweep.  initial_belief is "stationary" or an explicit
    (normal, anomalous) pair; it seeds both the simulated initial state
    and the filter prior.
    """

    rho: float
    a: float
    mu1: float = 1.0
    mu2: float = 2.0
    sigma2: tuple[float, ...] = (5.0,)
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    horizon: int = 2000
    trials: int = 1000
    seed_base: int = 0
    reset_policy: str = RESET_TO_INITIAL
    rule_variant: str = RULE_INTERMITTENT
    initial_belief: tuple[float, float] | str = "stationary"

    def __post_init__(self):
        object.__setattr__(self, "sigma2", _as_tuple(self.sigma2))
        object.__setattr__(self, "thresholds", _as_tuple(self.thresholds))
        if isinstance(self.initial_belief, (list, np.ndarray)):
            object.__setattr__(
                self, "initial_belief", tuple(float(v) for v in self.initial_belief)
            )
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if len(self.thresholds) == 0:
            raise ValueError("need at least one threshold")
        if any(not 0.0 <= h <= 1.0 for h in self.thresholds):
            raise ValueError("thresholds must lie in [0, 1]")
        if any(s <= 0.0 for s in self.sigma2):
            raise ValueError("sigma2 values must be positive")
        if self.reset_policy not in RESET_POLICIES:
            raise ValueError(f"unknown reset policy {self.reset_policy!r}")
        if self.rule_variant not in RULE_VARIANTS:
            raise ValueError(f"unknown rule variant {self.rule_variant!r}")
        # validate chain and initial belief eagerly
        TransitionModel2(self.rho, self.a)
        self.resolve_initial()

    def resolve_initial(self) -> Belief:
        if self.initial_belief == "stationary":
            return stationary_distribution(TransitionModel2(self.rho, self.a))
        return Belief(np.asarray(self.initial_belief, dtype=float))


def _as_tuple(value) -> tuple[float, ...]:
    if np.isscalar(value):
        return (float(value),)
    return tuple(float(v) for v in value)


@dataclass(frozen=True)
class SweepRow:
    """Aggregates for one (rule variant, sigma2, threshold) sweep point.

    Delays are realized anomalous occupation in the alarm's reset
    window, averaged over true detections only; false-alarm statistics
    are per run.  Standard errors are sample std over the contributing
    samples divided by the square root of their count.
    """

    rule_variant: str
    sigma2: float
    threshold: float
    trials: int
    horizon: int
    n_alarms: int
    n_detections: int
    n_false_alarms: int
    censored_count: int
    mean_delay: float
    stderr_delay: float
    mean_episode_delay: float
    mean_occupation_estimate: float
    stderr_occupation_estimate: float
    mean_false_alarms: float
    stderr_false_alarms: float
    false_alarms_per_1e3_steps: float


@dataclass(frozen=True)
class SweepResult:
    spec: ExperimentSpec
    rows: tuple[SweepRow, ...]


@dataclass(frozen=True)
class AlarmBatch:
    """Flat per-alarm arrays for one sweep point (trial-major order)."""

    trial: np.ndarray
    time: np.ndarray
    truth: np.ndarray
    occupation_estimate: np.ndarray
    realized_occupation: np.ndarray
    episode_delay: np.ndarray

    @classmethod
    def concatenate(cls, batches: Sequence["AlarmBatch"]) -> "AlarmBatch":
        fields = {}
        for name in cls.__dataclass_fields__:
            fields[name] = np.concatenate([getattr(b, name) for b in batches])
        return cls(**fields)


def simulate_batch(
    model: TransitionModel2,
    obs: GaussianPairObservation,
    initial: Belief,
    horizon: int,
    seeds: Sequence[int],
) -> tuple[np.ndarray, np.ndarray]:
    """States (T, K+1) and observations (T, K) for the given seeds.

    Row t is bit-identical to simulate_trajectory(..., seed=seeds[t]):
    the per-trial stream draws K+1 uniforms then K standard normals.
    """
    n_trials = len(seeds)
    uniforms = np.empty((n_trials, horizon + 1))
    normals = np.empty((n_trials, horizon))
    for t, seed in enumerate(seeds):
        rng = np.random.default_rng(int(seed))
        uniforms[t] = rng.random(horizon + 1)
        normals[t] = rng.standard_normal(horizon)

    states = np.empty((n_trials, horizon + 1), dtype=np.int8)
    states[:, 0] = np.where(uniforms[:, 0] < initial.p[0], 1, 2)
    stay_normal = 1.0 - model.rho
    leave_anomal = 1.0 - model.a
    for k in range(1, horizon + 1):
        thr = np.where(states[:, k - 1] == 1, stay_normal, leave_anomal)
        states[:, k] = np.where(uniforms[:, k] < thr, 1, 2)

    means = np.where(states[:, 1:] == 1, obs.mu1, obs.mu2)
    observations = means + normals * math.sqrt(obs.sigma2)
    return states, observations


def _scan_resets_batch(
    states: np.ndarray,
    loglr: np.ndarray,
    rho: float,
    a_filter: float,
    p0: float,
    p_reset: float,
    threshold: float,
    trial_offset: int = 0,
) -> AlarmBatch:
    """Reset-and-continue alarm scan, vectorized across trials."""
    n_trials, k_max = loglr.shape
    anomalous = states == 2
    p = np.full(n_trials, p0)
    occ1 = np.zeros(n_trials)
    occ2 = np.zeros(n_trials)
    realized = np.zeros(n_trials, dtype=np.int64)
    entry_time = np.where(anomalous[:, 0], 0, -1)

    cols = {name: [] for name in AlarmBatch.__dataclass_fields__}

    def emit(idx, k, occ_est):
        truth = states[idx, k].astype(np.int64)
        detections = truth == 2
        episode = np.where(detections, k - entry_time[idx], np.nan)
        cols["trial"].append(idx + trial_offset)
        cols["time"].append(np.full(idx.size, k, dtype=np.int64))
        cols["truth"].append(truth)
        cols["occupation_estimate"].append(occ_est)
        cols["realized_occupation"].append(realized[idx].astype(float))
        cols["episode_delay"].append(episode.astype(float))

    if p0 >= threshold:
        emit(np.arange(n_trials), 0, np.zeros(n_trials))
        p[:] = p_reset

    for k in range(1, k_max + 1):
        g = loglr[:, k - 1]
        q2 = rho * (1.0 - p) + a_filter * p
        q1 = 1.0 - q2
        t1 = occ1
        t2 = occ2 + p
        a1 = (1.0 - rho) * t1 + (1.0 - a_filter) * t2
        a2 = rho * t1 + a_filter * t2
        # scale numerator and denominator by min(1, exp(-g)) so neither
        # side can overflow for extreme log likelihood ratios
        e = np.exp(-np.abs(g))
        pos = g >= 0.0
        denom = np.where(pos, q1 * e + q2, q1 + q2 * e)
        p = np.where(pos, q2, q2 * e) / denom
        occ1 = np.where(pos, a1 * e, a1) / denom
        occ2 = np.where(pos, a2, a2 * e) / denom

        realized += anomalous[:, k - 1]
        entered = anomalous[:, k] & ~anomalous[:, k - 1]
        entry_time[entered] = k

        alarm = p >= threshold
        if alarm.any():
            idx = np.flatnonzero(alarm)
            emit(idx, k, (occ1 + occ2)[idx])
            p[idx] = p_reset
            occ1[idx] = 0.0
            occ2[idx] = 0.0
            realized[idx] = 0

    return AlarmBatch(
        **{
            name: (
                np.concatenate(parts)
                if parts
                else np.empty(0, dtype=np.int64 if name in ("trial", "time", "truth") else float)
            )
            for name, parts in cols.items()
        }
    )


@dataclass(frozen=True)
class FirstCrossingBatch:
    """First-crossing outcomes per threshold (rows) and trial (columns).

    tau is -1 for censored trials (no crossing before the horizon);
    cost columns hold the realized state-form and posterior-form
    stopping costs, which are meaningless for censored trials.
    """

    thresholds: tuple[float, ...]
    tau: np.ndarray
    truth: np.ndarray
    state_cost: np.ndarray
    cme_cost: np.ndarray
    realized_occupation: np.ndarray


def scan_first_crossings(
    states: np.ndarray,
    loglr: np.ndarray,
    rho: float,
    a_filter: float,
    p0: float,
    thresholds: Sequence[float],
    penalty_c: float,
) -> FirstCrossingBatch:
    """Single-stop scan: stop each trial at its first crossing of every
    threshold simultaneously (common random numbers across thresholds)."""
    n_trials, k_max = loglr.shape
    thresholds = tuple(float(h) for h in thresholds)
    n_thr = len(thresholds)

    tau = np.full((n_thr, n_trials), -1, dtype=np.int64)
    truth = np.zeros((n_thr, n_trials), dtype=np.int64)
    state_cost = np.zeros((n_thr, n_trials))
    cme_cost = np.zeros((n_thr, n_trials))
    realized_at_tau = np.zeros((n_thr, n_trials))

    p = np.full(n_trials, p0)
    cme_sum = np.zeros(n_trials)
    occ_count = np.zeros(n_trials, dtype=np.int64)

    def settle(i, open_mask, k):
        crossing = open_mask & (p >= thresholds[i])
        if crossing.any():
            idx = np.flatnonzero(crossing)
            tau[i, idx] = k
            truth[i, idx] = states[idx, k]
            state_cost[i, idx] = penalty_c * occ_count[idx] + (states[idx, k] == 1)
            cme_cost[i, idx] = penalty_c * cme_sum[idx] + (1.0 - p[idx])
            realized_at_tau[i, idx] = occ_count[idx]

    for i in range(n_thr):
        settle(i, np.ones(n_trials, dtype=bool), 0)

    for k in range(1, k_max + 1):
        cme_sum += p
        occ_count += states[:, k - 1] == 2
        g = loglr[:, k - 1]
        q2 = rho * (1.0 - p) + a_filter * p
        q1 = 1.0 - q2
        e = np.exp(-np.abs(g))
        pos = g >= 0.0
        denom = np.where(pos, q1 * e + q2, q1 + q2 * e)
        p = np.where(pos, q2, q2 * e) / denom
        for i in range(n_thr):
            settle(i, tau[i] < 0, k)

    return FirstCrossingBatch(
        thresholds=thresholds,
        tau=tau,
        truth=truth,
        state_cost=state_cost,
        cme_cost=cme_cost,
        realized_occupation=realized_at_tau,
    )


def _aggregate(batch: AlarmBatch, spec: ExperimentSpec, sigma2, threshold) -> SweepRow:
    detections = batch.truth == 2
    false_alarms = batch.truth == 1
    delays = batch.realized_occupation[detections]
    occ = batch.occupation_estimate[detections]
    episode = batch.episode_delay[detections]

    def mean_stderr(v):
        if v.size == 0:
            return math.nan, math.nan
        if v.size == 1:
            return float(v[0]), math.nan
        return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))

    mean_delay, stderr_delay = mean_stderr(delays)
    mean_occ, stderr_occ = mean_stderr(occ)
    mean_episode = float(episode.mean()) if episode.size else math.nan

    fa_counts = np.bincount(batch.trial[false_alarms], minlength=spec.trials).astype(
        float
    )
    mean_fa = float(fa_counts.mean())
    stderr_fa = (
        float(fa_counts.std(ddof=1) / math.sqrt(spec.trials))
        if spec.trials > 1
        else math.nan
    )
    alarmed_trials = np.unique(batch.trial).size
    total_false = int(false_alarms.sum())

    return SweepRow(
        rule_variant=spec.rule_variant,
        sigma2=float(sigma2),
        threshold=float(threshold),
        trials=spec.trials,
        horizon=spec.horizon,
        n_alarms=int(batch.trial.size),
        n_detections=int(detections.sum()),
        n_false_alarms=total_false,
        censored_count=spec.trials - alarmed_trials,
        mean_delay=mean_delay,
        stderr_delay=stderr_delay,
        mean_episode_delay=mean_episode,
        mean_occupation_estimate=mean_occ,
        stderr_occupation_estimate=stderr_occ,
        mean_false_alarms=mean_fa,
        stderr_false_alarms=stderr_fa,
        false_alarms_per_1e3_steps=1000.0 * total_false / (spec.trials * spec.horizon),
    )


def _chunk_ranges(trials: int, chunk_size: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + chunk_size, trials)) for lo in range(0, trials, chunk_size)]


def run_trials(spec: ExperimentSpec, threads: int = 1) -> SweepResult:
    """Run the sweep; deterministic in spec regardless of threads."""
    initial = spec.resolve_initial()
    p0 = float(initial.p[1])
    if spec.reset_policy == RESET_TO_INITIAL:
        p_reset = p0
    else:
        p_reset = float(
            stationary_distribution(TransitionModel2(spec.rho, spec.a)).p[1]
        )
    a_filter = 1.0 if spec.rule_variant == RULE_SHIRYAEV else spec.a
    model = TransitionModel2(spec.rho, spec.a)
    chunks = _chunk_ranges(spec.trials, _CHUNK_SIZE)

    def scan_chunk(bounds) -> dict:
        lo, hi = bounds
        seeds = range(spec.seed_base + lo, spec.seed_base + hi)
        out = {}
        for sigma2 in spec.sigma2:
            obs = GaussianPairObservation(spec.mu1, spec.mu2, sigma2)
            states, ys = simulate_batch(model, obs, initial, spec.horizon, seeds)
            loglr = np.asarray(obs.log_likelihood_ratio(ys))
            for h in spec.thresholds:
                out[(sigma2, h)] = _scan_resets_batch(
                    states, loglr, spec.rho, a_filter, p0, p_reset, h, trial_offset=lo
                )
        return out

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunk_outputs = list(pool.map(scan_chunk, chunks))
    else:
        chunk_outputs = [scan_chunk(b) for b in chunks]

    rows = []
    for sigma2 in spec.sigma2:
        for h in spec.thresholds:
            merged = AlarmBatch.concatenate(
                [out[(sigma2, h)] for out in chunk_outputs]
            )
            rows.append(_aggregate(merged, spec, sigma2, h))
    return SweepResult(spec=spec, rows=tuple(rows))


def soc_sweep(spec: ExperimentSpec, threads: int = 1) -> SweepResult:
    """Operating-characteristic sweep; needs at least two thresholds."""
    if len(spec.thresholds) < 2:
        raise ValueError("an operating-characteristic sweep needs >= 2 thresholds")
    return run_trials(spec, threads=threads)


def occupation_study(spec: ExperimentSpec, threads: int = 1) -> SweepResult:
    """Delay-estimation study: one threshold, a sweep of noise levels."""
    if len(spec.thresholds) != 1:
        raise ValueError("the occupation study uses a single threshold")
    return run_trials(spec, threads=threads)


def compare_variants(spec: ExperimentSpec, threads: int = 1) -> dict[str, SweepResult]:
    """Run both rule variants on identical data (shared trial seeds)."""
    results = {}
    for variant in RULE_VARIANTS:
        results[variant] = run_trials(replace(spec, rule_variant=variant), threads)
    return results
