"""Value iteration for the optimal stopping threshold on a belief grid.

The value of holding anomalous-state belief p satisfies

    V(p) = min{ c p + E[V(p_next(p, y))],  1 - p }

where p_next is one filter update and the expectation runs over the
predictive measurement mixture.  Iterating from V = 0 converges
monotonically; the converged V is concave, the stopping region
{p : V(p) = 1 - p} is an interval [h_s, 1], and h_s is the optimal
threshold for penalty c.

The expectation is evaluated with Gauss-Hermite nodes placed on both
Gaussian components against the equal-weight mixture as reference
measure.  Written that way every quadrature term is a perspective of
the piecewise-linear interpolant (a positive affine normalizer times V
at the renormalized belief), so each backup preserves concavity of the
grid values exactly, independent of quadrature accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import NotAnIntervalError, NotConvergedError, QuadratureFailureError
from .signal_core import GaussianPairObservation, TransitionModel2, _readonly

DEFAULT_GRID_RESOLUTION = 2001
DEFAULT_NODES_PER_COMPONENT = 64
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100_000
DEFAULT_STOP_SET_ATOL = 1e-6
PREDICTIVE_MASS_ATOL = 1e-6


@dataclass(frozen=True)
class BeliefGrid:
    """Sorted anomalous-belief values in [0, 1], endpoints included."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 3:
            raise ValueError("grid needs at least 3 points")
        if pts[0] != 0.0 or pts[-1] != 1.0:
            raise ValueError("grid must include 0 and 1 as endpoints")
        if not np.all(np.diff(pts) > 0):
            raise ValueError("grid points must be strictly increasing")
        object.__setattr__(self, "points", _readonly(pts))

    @classmethod
    def uniform(cls, resolution: int = DEFAULT_GRID_RESOLUTION) -> "BeliefGrid":
        return cls(np.linspace(0.0, 1.0, resolution))

    @property
    def resolution(self) -> int:
        return self.points.size


@dataclass(frozen=True)
class ValueFunction:
    """Grid values of the optimal cost, with solver bookkeeping."""

    values: np.ndarray
    converged: bool
    iterations: int
    sup_norm_residual: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("value function must be finite")
        if vals.min() < -1e-12 or vals.max() > 1.0 + 1e-12:
            raise ValueError("values must lie in [0, 1]")
        object.__setattr__(self, "values", _readonly(vals))

    @classmethod
    def zero(cls, grid: BeliefGrid) -> "ValueFunction":
        return cls(
            values=np.zeros(grid.resolution),
            converged=False,
            iterations=0,
            sup_norm_residual=math.inf,
        )


@dataclass(frozen=True)
class GaussHermiteQuadrature:
    """Nodes on both measurement components, weighted by the half-half
    mixture; `sigmoid` holds the anomalous-vs-normal likelihood split
    expit(log f2/f1) at each node."""

    nodes: np.ndarray
    weights: np.ndarray
    sigmoid: np.ndarray

    def __post_init__(self):
        for name in ("nodes", "weights", "sigmoid"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, _readonly(arr))
        if not (self.nodes.size == self.weights.size == self.sigmoid.size):
            raise ValueError("quadrature arrays must have equal length")

    @classmethod
    def build(
        cls,
        obs: GaussianPairObservation,
        nodes_per_component: int = DEFAULT_NODES_PER_COMPONENT,
    ) -> "GaussHermiteQuadrature":
        t, w = np.polynomial.hermite.hermgauss(nodes_per_component)
        scale = math.sqrt(2.0 * obs.sigma2)
        ys = np.concatenate([obs.mu1 + scale * t, obs.mu2 + scale * t])
        weights = np.concatenate([w, w]) / (2.0 * math.sqrt(math.pi))
        return cls(nodes=ys, weights=weights, sigmoid=expit(obs.log_likelihood_ratio(ys)))


class _BackupOperator:
    """Precomputed one-step Bellman backup over a fixed grid."""

    def __init__(self, grid, model, obs, c, quadrature):
        p = grid.points
        q2 = model.rho * (1.0 - p) + model.a * p
        q1 = 1.0 - q2
        s = quadrature.sigmoid
        # normalizer of the updated belief relative to the reference
        # mixture; affine in p, so each weighted term below is a
        # perspective of the interpolated value function
        denom = np.outer(q1, 1.0 - s) + np.outer(q2, s)
        with np.errstate(invalid="ignore", divide="ignore"):
            p_next = np.where(denom > 0.0, np.outer(q2, s) / denom, 0.0)
        eff_weights = 2.0 * quadrature.weights[None, :] * denom
        mass = eff_weights.sum(axis=1)
        err = float(np.max(np.abs(mass - 1.0)))
        if err > PREDICTIVE_MASS_ATOL:
            raise QuadratureFailureError(
                f"predictive density integrates to 1 +/- {err:.3e}"
            )
        self.grid_points = p
        self.p_next = p_next
        self.eff_weights = eff_weights
        self.continue_base = c * p
        self.stop_value = 1.0 - p

    def apply(self, values: np.ndarray) -> np.ndarray:
        interp = np.interp(self.p_next.ravel(), self.grid_points, values)
        expected = (self.eff_weights * interp.reshape(self.p_next.shape)).sum(axis=1)
        return np.minimum(self.continue_base + expected, self.stop_value)


def bellman_backup(
    current: ValueFunction,
    grid: BeliefGrid,
    model: TransitionModel2,
    obs: GaussianPairObservation,
    c: float,
    quadrature: GaussHermiteQuadrature | None = None,
) -> ValueFunction:
    """One sweep of the value recursion over the grid."""
    if quadrature is None:
        quadrature = GaussHermiteQuadrature.build(obs)
    op = _BackupOperator(grid, model, obs, c, quadrature)
    new_values = op.apply(current.values)
    residual = float(np.max(np.abs(new_values - current.values)))
    return ValueFunction(
        values=new_values,
        converged=False,
        iterations=current.iterations + 1,
        sup_norm_residual=residual,
    )


def solve(
    grid: BeliefGrid,
    model: TransitionModel2,
    obs: GaussianPairObservation,
    c: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    quadrature: GaussHermiteQuadrature | None = None,
) -> ValueFunction:
    """Iterate the backup from V = 0 to the sup-norm fixed point.

    Iterates are monotone nondecreasing (value iteration with
    nonnegative per-step costs); raises NotConvergedError with the last
    residual if the cap is reached first.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if quadrature is None:
        quadrature = GaussHermiteQuadrature.build(obs)
    op = _BackupOperator(grid, model, obs, c, quadrature)
    values = np.zeros(grid.resolution)
    residual = math.inf
    for iteration in range(1, max_iter + 1):
        new_values = op.apply(values)
        residual = float(np.max(np.abs(new_values - values)))
        values = new_values
        if residual < tol:
            return ValueFunction(
                values=values,
                converged=True,
                iterations=iteration,
                sup_norm_residual=residual,
            )
    raise NotConvergedError(
        f"no convergence after {max_iter} iterations (residual {residual:.3e})",
        residual=residual,
        value_function=ValueFunction(
            values=values,
            converged=False,
            iterations=max_iter,
            sup_norm_residual=residual,
        ),
    )


def extract_stopping_set(
    vf: ValueFunction,
    grid: BeliefGrid,
    atol: float = DEFAULT_STOP_SET_ATOL,
) -> float:
    """Left edge h_s of the stop region {p : V(p) = 1 - p} on the grid.

    Raises NotAnIntervalError when the region is not an up-set, which
    flags a discretization failure (the exact region is an interval
    reaching 1).
    """
    gap = np.abs(vf.values - (1.0 - grid.points))
    mask = gap <= atol
    if not mask[-1]:
        raise NotAnIntervalError("belief 1 is not in the stop region")
    first = int(np.argmax(mask))
    if not mask[first:].all():
        raise NotAnIntervalError("stop region has interior gaps on the grid")
    return float(grid.points[first])
