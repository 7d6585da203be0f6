"""Recursive posterior (conditional mean) estimation for the hidden state.

The filter step maps a prior belief and one observation to the
normalized posterior B(y) A prior / <1, B(y) A prior>, keeping the
normalizer in log form so long-run likelihoods never underflow.  An
exact path-enumeration oracle is included for testing; it is
exponential in sequence length and capped.

State weights may be unnormalized up to a factor shared by all states
(the image pipeline relies on this); the belief is unaffected and the
log normalizer then refers to the scaled likelihood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import CapExceededError, DegenerateLikelihoodError
from .signal_core import Belief, TransitionModel2

DEFAULT_ENUMERATION_CAP = 12


def transition_matrix_of(model) -> np.ndarray | sp.spmatrix:
    """Accept a TransitionModel2, a dense array, or a sparse matrix."""
    if isinstance(model, TransitionModel2):
        return model.matrix
    if sp.issparse(model):
        return model
    return np.asarray(model, dtype=float)


@dataclass(frozen=True)
class FilterStep:
    """Posterior after one update plus the log of <1, B(y) A prev>."""

    belief: Belief
    log_normalizer: float
    k: int = 0


def filter_step(prev: Belief, y, model, obs, k: int = 0) -> FilterStep:
    """One predict-update cycle of the posterior recursion."""
    A = transition_matrix_of(model)
    w = np.asarray(obs.state_weights(y), dtype=float)
    unnorm = w * (A @ prev.p)
    s = float(unnorm.sum())
    if not (s > 0.0 and math.isfinite(s)):
        raise DegenerateLikelihoodError(
            f"all state likelihoods vanished at step {k}", k=k
        )
    return FilterStep(belief=Belief(unnorm / s), log_normalizer=math.log(s), k=k)


def run_filter(observations: Sequence, model, obs, initial: Belief) -> list[FilterStep]:
    """Fold filter_step over the observations, k = 1..len(observations)."""
    if len(observations) == 0:
        raise ValueError("observation sequence is empty")
    steps = []
    belief = initial
    for i, y in enumerate(observations, start=1):
        step = filter_step(belief, y, model, obs, k=i)
        steps.append(step)
        belief = step.belief
    return steps


def enumerate_path_weights(
    observations: Sequence, model, obs, initial: Belief
) -> tuple[np.ndarray, np.ndarray]:
    """All state paths X_0..X_K and their joint densities with the data.

    Returns (paths, weights): paths has one row per path with 0-based
    state columns for times 0..K; weights[i] is the unnormalized joint
    p(path_i, y_1..y_K).  Exponential in K; callers enforce the cap.
    """
    A = np.asarray(transition_matrix_of(model))
    n = initial.n_states
    k = len(observations)
    n_paths = n ** (k + 1)
    idx = np.arange(n_paths)
    paths = np.empty((n_paths, k + 1), dtype=np.int64)
    for col in range(k + 1):
        paths[:, col] = (idx // n ** (k - col)) % n

    weights = initial.p[paths[:, 0]].astype(float)
    for ell in range(1, k + 1):
        w_obs = np.asarray(obs.state_weights(observations[ell - 1]), dtype=float)
        weights *= A[paths[:, ell], paths[:, ell - 1]] * w_obs[paths[:, ell]]
    return paths, weights


def _check_cap(observations, cap):
    if len(observations) > cap:
        raise CapExceededError(
            f"sequence length {len(observations)} exceeds enumeration cap {cap}"
        )


def enumerate_posterior(
    observations: Sequence,
    model,
    obs,
    initial: Belief,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> Belief:
    """Exact posterior over the final state by summing over all paths."""
    _check_cap(observations, cap)
    paths, weights = enumerate_path_weights(observations, model, obs, initial)
    n = initial.n_states
    total = float(weights.sum())
    if not (total > 0.0 and math.isfinite(total)):
        raise DegenerateLikelihoodError("zero marginal likelihood in enumeration")
    post = np.array(
        [float(weights[paths[:, -1] == i].sum()) for i in range(n)]
    )
    return Belief(post / post.sum())


def enumerate_log_likelihood(
    observations: Sequence,
    model,
    obs,
    initial: Belief,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> float:
    """log p(y_1..y_K) by exhaustive path summation (testing oracle)."""
    _check_cap(observations, cap)
    _, weights = enumerate_path_weights(observations, model, obs, initial)
    total = float(weights.sum())
    if not (total > 0.0 and math.isfinite(total)):
        raise DegenerateLikelihoodError("zero marginal likelihood in enumeration")
    return math.log(total)
