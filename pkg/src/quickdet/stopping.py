"""Threshold stopping rules, alarm bookkeeping, and cost criteria.

The rule alarms the first time the posterior mass off the designated
normal state reaches a threshold h.  With an absorbing anomaly (a = 1)
this is exactly Shiryaev's Bayesian detection rule; with a < 1 it
handles anomalies that come and go.  The probability that the state is
actually normal at the alarm is bounded by 1 - h.

Two cost estimators are provided: the state form penalizes realized
anomalous time before the alarm plus a unit charge for stopping in the
normal state; the posterior form replaces both indicators by their
conditional means.  The two have equal expectation, which the tests
check by Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyTrialSetError
from .hmm_filter import FilterStep, transition_matrix_of
from .occupation_filter import OccupationEstimate, _synchronized_step
from .signal_core import Belief, Trajectory, stationary_distribution

RESET_TO_INITIAL = "reset_to_initial"
RESET_TO_STATIONARY = "reset_to_stationary"
RESET_POLICIES = (RESET_TO_INITIAL, RESET_TO_STATIONARY)


@dataclass(frozen=True)
class StoppingRule:
    """Alarm when 1 - belief[normal_state] reaches the threshold.

    For the two-state model the statistic is the anomalous-state mass;
    for the image chain (normal_state = N+1) it is the total mass on
    pixel states.
    """

    threshold: float
    normal_state: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.threshold) and 0.0 <= self.threshold <= 1.0):
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold!r}")
        if self.normal_state < 1:
            raise ValueError("normal_state is a 1-based state index")

    def statistic(self, belief: Belief) -> float:
        return 1.0 - float(belief.p[self.normal_state - 1])


def should_stop(rule: StoppingRule, belief: Belief) -> bool:
    return rule.statistic(belief) >= rule.threshold


def pfa_bound(rule: StoppingRule) -> float:
    """Upper bound 1 - h on the probability the state is normal at alarm."""
    return 1.0 - rule.threshold


@dataclass(frozen=True)
class AlarmRecord:
    """One alarm with its ground-truth classification.

    realized_occupation counts the true anomalous steps in the window
    [start, alarm_time) where start is 0 or the previous reset time.
    episode_delay is alarm_time minus the latest entry into the
    anomalous state (nan for false alarms).
    """

    alarm_time: int
    true_state_at_alarm: int
    is_false_alarm: bool
    occupation_estimate_at_alarm: float
    realized_occupation: float
    episode_delay: float = math.nan

    def __post_init__(self):
        if self.is_false_alarm != (self.true_state_at_alarm == 1):
            raise ValueError("is_false_alarm must mirror true_state_at_alarm == 1")


def _episode_delay(states: np.ndarray, tau: int) -> float:
    """tau minus the start of the anomalous episode containing tau."""
    if states[tau] != 2:
        return math.nan
    m = tau
    while m > 0 and states[m - 1] == 2:
        m -= 1
    return float(tau - m)


def first_alarm(
    trace: Sequence[FilterStep],
    rule: StoppingRule,
    trajectory: Trajectory,
    initial: Belief | None = None,
    occupation: Sequence[OccupationEstimate] | None = None,
) -> AlarmRecord | None:
    """Earliest threshold crossing on one trajectory, or None.

    When `initial` is given, time 0 is checked against the prior belief
    before any data.  `occupation` (aligned with the trace, k = 1..)
    fills the estimate column; otherwise it is nan.
    """
    states = trajectory.states

    def record(tau: int) -> AlarmRecord:
        truth = int(states[tau])
        if occupation is None:
            occ_est = math.nan
        else:
            occ_est = 0.0 if tau == 0 else occupation[tau - 1].scalar
        return AlarmRecord(
            alarm_time=tau,
            true_state_at_alarm=truth,
            is_false_alarm=truth == 1,
            occupation_estimate_at_alarm=occ_est,
            realized_occupation=float(np.count_nonzero(states[:tau] == 2)),
            episode_delay=_episode_delay(states, tau),
        )

    if initial is not None and should_stop(rule, initial):
        return record(0)
    for step in trace:
        if should_stop(rule, step.belief):
            if step.k > trajectory.length:
                raise ValueError("trace longer than trajectory")
            return record(step.k)
    return None


def run_with_resets(
    observations: Sequence,
    trajectory: Trajectory,
    model,
    obs,
    rule: StoppingRule,
    reset_policy: str = RESET_TO_INITIAL,
    initial: Belief | None = None,
    occupation_target: int = 2,
) -> list[AlarmRecord]:
    """Repeated-alarm scan of one trajectory.

    After each alarm the belief restarts per the reset policy, the
    occupation joint is zeroed, and scanning resumes at the next step;
    every crossing is recorded and classified against the ground truth.
    Time 0 is checked against the starting belief.
    """
    if reset_policy not in RESET_POLICIES:
        raise ValueError(f"unknown reset policy {reset_policy!r}")
    if initial is None:
        initial = stationary_distribution(model)
    reset_belief = (
        initial if reset_policy == RESET_TO_INITIAL else stationary_distribution(model)
    )

    A = transition_matrix_of(model)
    states = trajectory.states
    n = initial.n_states
    t_idx = occupation_target - 1

    records: list[AlarmRecord] = []
    belief = np.asarray(initial.p, dtype=float)
    joint = np.zeros(n)
    realized = 0

    def emit(tau: int, occ_est: float):
        truth = int(states[tau])
        records.append(
            AlarmRecord(
                alarm_time=tau,
                true_state_at_alarm=truth,
                is_false_alarm=truth == 1,
                occupation_estimate_at_alarm=occ_est,
                realized_occupation=float(realized),
                episode_delay=_episode_delay(states, tau),
            )
        )

    if should_stop(rule, initial):
        emit(0, 0.0)
        belief = np.asarray(reset_belief.p, dtype=float)
        joint = np.zeros(n)

    for k, y in enumerate(observations, start=1):
        w = np.asarray(obs.state_weights(y), dtype=float)
        belief, _, (joint,) = _synchronized_step(A, w, belief, [joint], [t_idx])
        realized += int(states[k - 1] == 2)
        if 1.0 - belief[rule.normal_state - 1] >= rule.threshold:
            emit(k, float(joint.sum()))
            belief = np.asarray(reset_belief.p, dtype=float)
            joint = np.zeros(n)
            realized = 0
    return records


@dataclass(frozen=True)
class StoppedTrial:
    """One trial's inputs to the cost estimators.

    tau indexes into 0..len(observations); steps are the filter outputs
    for k = 1.. and initial is the prior used at k = 0.
    """

    trajectory: Trajectory
    initial: Belief
    steps: Sequence[FilterStep]
    tau: int

    def __post_init__(self):
        if not 0 <= self.tau <= len(self.steps):
            raise ValueError("tau must index a belief available in the trial")


@dataclass(frozen=True)
class CostReport:
    """Monte-Carlo estimates of the stopping cost in both forms."""

    cost_state_form: float
    cost_cme_form: float
    penalty_c: float
    n_trials: int = 0
    stderr_state_form: float = math.nan
    stderr_cme_form: float = math.nan


def trial_costs(trial: StoppedTrial, c: float) -> tuple[float, float]:
    """(state form, posterior form) realized costs of one stopped trial."""
    tau = trial.tau
    states = trial.trajectory.states
    state_cost = c * float(np.count_nonzero(states[:tau] == 2)) + (
        1.0 if states[tau] == 1 else 0.0
    )
    e2_masses = [trial.initial.p[1]] + [s.belief.p[1] for s in trial.steps]
    belief_tau = trial.initial if tau == 0 else trial.steps[tau - 1].belief
    cme_cost = c * float(sum(e2_masses[:tau])) + float(belief_tau.p[0])
    return state_cost, cme_cost


def evaluate_cost(trials: Sequence[StoppedTrial], c: float) -> CostReport:
    """Average both cost forms over trials with a defined stopping time."""
    if len(trials) == 0:
        raise EmptyTrialSetError("cost evaluation needs at least one trial")
    state_vals = np.empty(len(trials))
    cme_vals = np.empty(len(trials))
    for i, trial in enumerate(trials):
        state_vals[i], cme_vals[i] = trial_costs(trial, c)
    n = len(trials)

    def stderr(v):
        return float(v.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan

    return CostReport(
        cost_state_form=float(state_vals.mean()),
        cost_cme_form=float(cme_vals.mean()),
        penalty_c=c,
        n_trials=n,
        stderr_state_form=stderr(state_vals),
        stderr_cme_form=stderr(cme_vals),
    )
