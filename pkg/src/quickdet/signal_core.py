"""Hidden two-state intermittent signal: transition structure, Gaussian
measurement model, and trajectory simulation.

State 1 is the normal regime, state 2 the anomalous one.  Beliefs are
dense probability vectors in that order; transition matrices are
column-stochastic, so column j is the distribution of the next state
given the current state j+1 (1-based).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PROB_ATOL = 1e-12


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=arr.dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class TransitionModel2:
    """Two-state chain parameters.

    rho is the per-step probability of entering the anomalous state from
    the normal one; a is the anomalous state's self-transition
    probability.  a = 1 makes the anomaly absorbing (the classic
    Shiryaev setting); a < 1 lets it disappear again.
    """

    rho: float
    a: float

    def __post_init__(self):
        for name, value in (("rho", self.rho), ("a", self.a)):
            if not (math.isfinite(value) and 0.0 <= value <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")

    @property
    def matrix(self) -> np.ndarray:
        return build_transition_matrix(self)


def build_transition_matrix(model: TransitionModel2) -> np.ndarray:
    """Column-stochastic 2x2 matrix [[1-rho, 1-a], [rho, a]]."""
    return np.array(
        [[1.0 - model.rho, 1.0 - model.a], [model.rho, model.a]], dtype=float
    )


def stationary_distribution(model: TransitionModel2) -> "Belief":
    """Unique stationary law (1-a, rho) / (1-a+rho).

    Undefined when rho = 0 and a = 1 (identity chain); raises then.
    """
    denom = (1.0 - model.a) + model.rho
    if denom == 0.0:
        raise ValueError("identity chain has no unique stationary distribution")
    return Belief(np.array([(1.0 - model.a) / denom, model.rho / denom]))


@dataclass(frozen=True)
class Belief:
    """Probability vector over hidden states (a posterior or prior)."""

    p: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.p, dtype=float)
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError("belief must be a vector with at least 2 entries")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
            raise ValueError("belief entries must be finite and nonnegative")
        if abs(float(arr.sum()) - 1.0) > PROB_ATOL:
            raise ValueError(f"belief entries must sum to 1, got {arr.sum()!r}")
        object.__setattr__(self, "p", _readonly(arr))

    @classmethod
    def point_mass(cls, state: int, n_states: int = 2) -> "Belief":
        """All mass on one state (1-based index)."""
        if not 1 <= state <= n_states:
            raise ValueError(f"state {state} outside 1..{n_states}")
        p = np.zeros(n_states)
        p[state - 1] = 1.0
        return cls(p)

    @classmethod
    def uniform(cls, n_states: int = 2) -> "Belief":
        return cls(np.full(n_states, 1.0 / n_states))

    @property
    def n_states(self) -> int:
        return self.p.size


@dataclass(frozen=True)
class GaussianPairObservation:
    """Scalar Gaussian measurements with a state-dependent mean.

    The same zero-mean Gaussian noise with variance sigma2 is shifted to
    mu1 in the normal state and mu2 in the anomalous state.
    """

    mu1: float
    mu2: float
    sigma2: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma2) and self.sigma2 > 0.0):
            raise ValueError(f"sigma2 must be positive, got {self.sigma2!r}")
        if not (math.isfinite(self.mu1) and math.isfinite(self.mu2)):
            raise ValueError("means must be finite")

    @property
    def n_states(self) -> int:
        return 2

    def density(self, state: int, y: float) -> float:
        """Gaussian density of observation y under the given state (1 or 2)."""
        if state not in (1, 2):
            raise ValueError(f"state must be 1 or 2, got {state}")
        mu = self.mu1 if state == 1 else self.mu2
        z = (y - mu) ** 2 / (2.0 * self.sigma2)
        return math.exp(-z) / math.sqrt(2.0 * math.pi * self.sigma2)

    def state_weights(self, y: float) -> np.ndarray:
        """Per-state density values, the diagonal of the output matrix."""
        return np.array([self.density(1, y), self.density(2, y)])

    def log_likelihood_ratio(self, y) -> np.ndarray | float:
        """log of density(2, y) / density(1, y); linear in y."""
        mid = 0.5 * (self.mu1 + self.mu2)
        return (self.mu2 - self.mu1) * (np.asarray(y, dtype=float) - mid) / self.sigma2

    def sample(self, state: int, rng: np.random.Generator) -> float:
        mu = self.mu1 if state == 1 else self.mu2
        return mu + math.sqrt(self.sigma2) * rng.standard_normal()


@dataclass(frozen=True)
class Trajectory:
    """One simulated path: states X_0..X_K and observations y_1..y_K.

    States are 1-based indices; there is one more state than observation
    because the initial state precedes the first measurement.
    """

    states: np.ndarray
    observations: np.ndarray
    seed: int

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.int64)
        obs = np.asarray(self.observations, dtype=float)
        if states.ndim != 1 or obs.ndim != 1:
            raise ValueError("states and observations must be vectors")
        if obs.size != states.size - 1:
            raise ValueError("need exactly one more state than observation")
        if states.min(initial=1) < 1 or states.max(initial=1) > 2:
            raise ValueError("state indices must be 1 or 2")
        object.__setattr__(self, "states", _readonly(states))
        object.__setattr__(self, "observations", _readonly(obs))

    @property
    def length(self) -> int:
        return self.observations.size


def simulate_trajectory(
    model: TransitionModel2,
    obs: GaussianPairObservation,
    initial: Belief,
    length: int,
    seed: int,
) -> Trajectory:
    """Sample a chain path of `length` steps plus its measurements.

    X_0 is drawn from `initial`; each later state from the transition
    matrix column of its predecessor; observation k from the Gaussian
    centered on X_k's mean.  The draw order (state uniforms first, then
    measurement noise) is fixed, so a seed pins the whole trajectory.
    """
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    rng = np.random.default_rng(seed)
    u = rng.random(length + 1)

    states = np.empty(length + 1, dtype=np.int64)
    states[0] = 1 if u[0] < initial.p[0] else 2
    p_normal_given_normal = 1.0 - model.rho
    p_normal_given_anomal = 1.0 - model.a
    for k in range(1, length + 1):
        thr = p_normal_given_normal if states[k - 1] == 1 else p_normal_given_anomal
        states[k] = 1 if u[k] < thr else 2

    noise = rng.standard_normal(length) * math.sqrt(obs.sigma2)
    means = np.where(states[1:] == 1, obs.mu1, obs.mu2)
    return Trajectory(states=states, observations=means + noise, seed=seed)


def density(obs: GaussianPairObservation, state: int, y: float) -> float:
    """Module-level alias for the observation model's density."""
    return obs.density(state, y)
