import numpy as np
import pytest

from conftest import random_instance
from quickdet.errors import CapExceededError, DegenerateLikelihoodError
from quickdet.hmm_filter import (
    enumerate_log_likelihood,
    enumerate_posterior,
    filter_step,
    run_filter,
)
from quickdet.signal_core import (
    Belief,
    GaussianPairObservation,
    TransitionModel2,
    simulate_trajectory,
)


class ZeroWeights:
    """Observation stub whose likelihood vanishes for y < 0."""

    def state_weights(self, y):
        return np.array([0.0, 0.0]) if y < 0 else np.array([1.0, 2.0])


def test_uninformative_likelihood_reduces_to_prediction(rng):
    model = TransitionModel2(0.2, 0.7)
    obs = GaussianPairObservation(1.5, 1.5, 2.0)
    for _ in range(20):
        u = rng.uniform(0.01, 0.99)
        prev = Belief(np.array([u, 1 - u]))
        step = filter_step(prev, rng.normal(), model, obs)
        np.testing.assert_allclose(step.belief.p, model.matrix @ prev.p, atol=1e-15)


def test_uninformative_run_equals_matrix_power(rng):
    model = TransitionModel2(0.15, 0.8)
    obs = GaussianPairObservation(0.7, 0.7, 1.0)
    initial = Belief(np.array([0.9, 0.1]))
    steps = run_filter(rng.normal(size=12), model, obs, initial)
    expected = np.linalg.matrix_power(model.matrix, 12) @ initial.p
    np.testing.assert_allclose(steps[-1].belief.p, expected, atol=1e-13)


def test_absorbing_point_mass_is_fixed(rng):
    model = TransitionModel2(0.3, 1.0)
    obs = GaussianPairObservation(0.0, 4.0, 1.0)
    prev = Belief.point_mass(2)
    for y in rng.normal(size=10):
        prev = filter_step(prev, y, model, obs).belief
        np.testing.assert_allclose(prev.p, [0.0, 1.0], atol=0)


def test_unreachable_state_keeps_zero_mass(rng):
    model = TransitionModel2(0.0, 1.0)
    obs = GaussianPairObservation(0.0, 4.0, 1.0)
    steps = run_filter(rng.normal(size=30), model, obs, Belief.point_mass(1))
    for step in steps:
        np.testing.assert_allclose(step.belief.p, [1.0, 0.0], atol=0)


def test_recursion_matches_enumeration_oracle(rng):
    worst = 0.0
    for i in range(300):
        model, obs, initial = random_instance(rng)
        k = int(rng.integers(1, 9))
        traj = simulate_trajectory(model, obs, initial, k, seed=i)
        steps = run_filter(traj.observations, model, obs, initial)
        oracle = enumerate_posterior(traj.observations, model, obs, initial)
        worst = max(worst, float(np.abs(steps[-1].belief.p - oracle.p).max()))
    assert worst < 1e-10


def test_log_normalizers_accumulate_to_marginal_likelihood(rng):
    for i in range(100):
        model, obs, initial = random_instance(rng)
        k = int(rng.integers(1, 9))
        traj = simulate_trajectory(model, obs, initial, k, seed=1000 + i)
        steps = run_filter(traj.observations, model, obs, initial)
        total = sum(s.log_normalizer for s in steps)
        oracle = enumerate_log_likelihood(traj.observations, model, obs, initial)
        assert total == pytest.approx(oracle, rel=1e-9)


def test_posterior_stays_normalized(rng):
    model, obs, initial = random_instance(rng)
    traj = simulate_trajectory(model, obs, initial, 200, seed=5)
    for step in run_filter(traj.observations, model, obs, initial):
        assert abs(step.belief.p.sum() - 1.0) <= 1e-12


def test_single_observation_fold():
    model = TransitionModel2(0.2, 0.8)
    obs = GaussianPairObservation(0.0, 1.0, 1.0)
    steps = run_filter([0.3], model, obs, Belief.uniform())
    assert len(steps) == 1 and steps[0].k == 1


def test_empty_observations_rejected():
    with pytest.raises(ValueError):
        run_filter([], TransitionModel2(0.2, 0.8), GaussianPairObservation(0, 1, 1), Belief.uniform())


def test_degenerate_likelihood_raises_with_index():
    model = TransitionModel2(0.2, 0.8)
    with pytest.raises(DegenerateLikelihoodError) as excinfo:
        run_filter([0.5, 1.0, -2.0, 0.1], model, ZeroWeights(), Belief.uniform())
    assert excinfo.value.k == 3


def test_enumeration_single_step_prediction():
    model = TransitionModel2(0.25, 0.6)
    obs = GaussianPairObservation(1.0, 1.0, 1.0)
    post = enumerate_posterior([0.2], model, obs, Belief.uniform())
    np.testing.assert_allclose(post.p, model.matrix @ Belief.uniform().p, atol=1e-14)


def test_enumeration_cap():
    model = TransitionModel2(0.2, 0.8)
    obs = GaussianPairObservation(0.0, 1.0, 1.0)
    with pytest.raises(CapExceededError):
        enumerate_posterior(np.zeros(13), model, obs, Belief.uniform())
    enumerate_posterior(np.zeros(13), model, obs, Belief.uniform(), cap=13)


def test_absorbing_evidence_is_monotone_via_oracle():
    # appending a strongly anomalous observation cannot lower the
    # absorbing state's posterior mass
    model = TransitionModel2(0.1, 1.0)
    obs = GaussianPairObservation(0.0, 10.0, 1e-2)
    initial = Belief(np.array([0.8, 0.2]))
    ys = [0.1, -0.3, 0.2]
    before = enumerate_posterior(ys, model, obs, initial)
    after = enumerate_posterior(ys + [10.0], model, obs, initial)
    assert after.p[1] >= before.p[1]


def test_filter_accepts_raw_matrix():
    model = TransitionModel2(0.2, 0.8)
    obs = GaussianPairObservation(0.0, 1.0, 1.0)
    prev = Belief(np.array([0.4, 0.6]))
    via_model = filter_step(prev, 0.7, model, obs)
    via_matrix = filter_step(prev, 0.7, model.matrix, obs)
    np.testing.assert_array_equal(via_model.belief.p, via_matrix.belief.p)
