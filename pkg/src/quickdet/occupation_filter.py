"""Occupation-time filtering: posterior expectation of the time spent in
a target state, advanced in lockstep with the posterior itself.

The occupation time up to k counts the states X_0..X_{k-1}, so the
per-state occupation estimates partition k.  The joint estimate
E[O_k 1(X_k = j) | y] obeys the same predict-update recursion as the
belief with the running belief's target component injected before the
transition, sharing the belief step's normalizer:

    joint_k = N_k B(y_k) A (joint_{k-1} + belief_{k-1}[target] e_target)

starting from the zero vector.  A path-enumeration oracle mirrors the
one in hmm_filter, and a two-initialization probe measures how fast the
filter forgets its prior (the per-step error rate decays like 1/k once
the underlying posterior has forgotten its own initialization).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CapExceededError, DegenerateLikelihoodError
from .hmm_filter import (
    DEFAULT_ENUMERATION_CAP,
    enumerate_path_weights,
    transition_matrix_of,
)
from .signal_core import Belief, _readonly

SCALAR_ATOL = 1e-12


@dataclass(frozen=True)
class OccupationEstimate:
    """Joint vector E[O_k 1(X_k=j)|y] and its total E[O_k|y] at time k."""

    joint: np.ndarray
    scalar: float
    target_state: int
    k: int

    def __post_init__(self):
        joint = np.asarray(self.joint, dtype=float)
        slack = SCALAR_ATOL * max(1.0, self.k)
        if abs(float(joint.sum()) - self.scalar) > slack:
            raise ValueError("scalar must equal the sum of the joint vector")
        if self.scalar < -slack or self.scalar > self.k + slack:
            raise ValueError(f"occupation estimate {self.scalar} outside [0, {self.k}]")
        object.__setattr__(self, "joint", _readonly(joint))


@dataclass(frozen=True)
class ErrorRateDiagnostic:
    """Max-norm gap between two initializations' joints, divided by k."""

    k: int
    rate: float


def _synchronized_step(A, w, belief_p, joints, target_indices):
    """Advance belief and every tracked joint with one shared normalizer.

    joints[i] pairs with target_indices[i] (0-based).  Returns the new
    belief vector, the normalizer s = <1, B A belief>, and new joints.
    """
    predicted = A @ belief_p
    unnorm_belief = w * predicted
    s = float(unnorm_belief.sum())
    if not (s > 0.0 and math.isfinite(s)):
        raise DegenerateLikelihoodError("all state likelihoods vanished")
    new_joints = []
    for joint, t in zip(joints, target_indices):
        shifted = joint.copy()
        shifted[t] += belief_p[t]
        new_joints.append(w * (A @ shifted) / s)
    return unnorm_belief / s, s, new_joints


def occupation_step(
    prev_joint: np.ndarray,
    prev_belief: Belief,
    y,
    model,
    obs,
    target: int,
) -> np.ndarray:
    """One update of the joint occupation estimate for `target` (1-based).

    Uses the identical normalizer as the belief update on
    (prev_belief, y); the initial joint at time 0 is the zero vector.
    """
    A = transition_matrix_of(model)
    w = np.asarray(obs.state_weights(y), dtype=float)
    joint = np.asarray(prev_joint, dtype=float)
    _, _, new_joints = _synchronized_step(A, w, prev_belief.p, [joint], [target - 1])
    return new_joints[0]


def run_occupation(
    observations: Sequence,
    model,
    obs,
    initial: Belief,
    target: int,
) -> list[OccupationEstimate]:
    """Occupation estimates for k = 1..len(observations).

    Runs the belief recursion in lockstep so both share each step's
    normalizer.
    """
    if len(observations) == 0:
        raise ValueError("observation sequence is empty")
    A = transition_matrix_of(model)
    belief = np.asarray(initial.p, dtype=float)
    joint = np.zeros(initial.n_states)
    out = []
    for k, y in enumerate(observations, start=1):
        w = np.asarray(obs.state_weights(y), dtype=float)
        try:
            belief, _, (joint,) = _synchronized_step(
                A, w, belief, [joint], [target - 1]
            )
        except DegenerateLikelihoodError as err:
            raise DegenerateLikelihoodError(
                f"all state likelihoods vanished at step {k}", k=k
            ) from err
        out.append(
            OccupationEstimate(
                joint=joint, scalar=float(joint.sum()), target_state=target, k=k
            )
        )
    return out


def enumerate_occupation(
    observations: Sequence,
    model,
    obs,
    initial: Belief,
    target: int,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> tuple[np.ndarray, float]:
    """Exact (joint, scalar) occupation estimates by weighted path sums."""
    if len(observations) > cap:
        raise CapExceededError(
            f"sequence length {len(observations)} exceeds enumeration cap {cap}"
        )
    paths, weights = enumerate_path_weights(observations, model, obs, initial)
    total = float(weights.sum())
    if not (total > 0.0 and math.isfinite(total)):
        raise DegenerateLikelihoodError("zero marginal likelihood in enumeration")
    occ = (paths[:, :-1] == target - 1).sum(axis=1)
    n = initial.n_states
    joint = np.array(
        [float((weights * occ * (paths[:, -1] == j)).sum()) / total for j in range(n)]
    )
    scalar = float((weights * occ).sum()) / total
    return joint, scalar


def stability_probe(
    observations: Sequence,
    model,
    obs,
    init_a: Belief,
    init_b: Belief,
    target: int,
) -> list[ErrorRateDiagnostic]:
    """Average error rate between two initializations at every step.

    The rate at k is the max-norm difference of the two joint vectors
    divided by k.  The norm choice is ours; any fixed vector norm gives
    the same decay behavior.
    """
    A = transition_matrix_of(model)
    belief_a = np.asarray(init_a.p, dtype=float)
    belief_b = np.asarray(init_b.p, dtype=float)
    joint_a = np.zeros(init_a.n_states)
    joint_b = np.zeros(init_b.n_states)
    out = []
    for k, y in enumerate(observations, start=1):
        w = np.asarray(obs.state_weights(y), dtype=float)
        belief_a, _, (joint_a,) = _synchronized_step(
            A, w, belief_a, [joint_a], [target - 1]
        )
        belief_b, _, (joint_b,) = _synchronized_step(
            A, w, belief_b, [joint_b], [target - 1]
        )
        rate = float(np.max(np.abs(joint_a - joint_b))) / k
        out.append(ErrorRateDiagnostic(k=k, rate=rate))
    return out
