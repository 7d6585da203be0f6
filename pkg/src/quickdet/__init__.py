"""Sequential detection of intermittent anomalies.

Core pieces: a two-state hidden Markov signal model with Gaussian
measurements, the posterior filter and its threshold stopping rule
(Shiryaev's rule is the absorbing special case), an occupation-time
filter that estimates detection delay on line, a value-iteration solver
for the optimal threshold, Monte-Carlo sweep harnesses, and a
pixel-grid pipeline for detecting dim targets emerging in image
sequences.
"""

from .errors import (
    CapExceededError,
    ConfigError,
    DegenerateLikelihoodError,
    EmptyTrialSetError,
    InvalidPatchError,
    NotAnIntervalError,
    NotConvergedError,
    QuadratureFailureError,
    QuickdetError,
    ScheduleOutOfBoundsError,
)
from .signal_core import (
    Belief,
    GaussianPairObservation,
    TransitionModel2,
    Trajectory,
    build_transition_matrix,
    density,
    simulate_trajectory,
    stationary_distribution,
)
from .hmm_filter import (
    FilterStep,
    enumerate_log_likelihood,
    enumerate_posterior,
    filter_step,
    run_filter,
)
from .occupation_filter import (
    ErrorRateDiagnostic,
    OccupationEstimate,
    enumerate_occupation,
    occupation_step,
    run_occupation,
    stability_probe,
)
from .stopping import (
    AlarmRecord,
    CostReport,
    StoppedTrial,
    StoppingRule,
    evaluate_cost,
    first_alarm,
    pfa_bound,
    run_with_resets,
    should_stop,
)
from .dp_threshold import (
    BeliefGrid,
    GaussHermiteQuadrature,
    ValueFunction,
    bellman_backup,
    extract_stopping_set,
    solve,
)
from .montecarlo import (
    ExperimentSpec,
    SweepResult,
    SweepRow,
    compare_variants,
    occupation_study,
    run_trials,
    scan_first_crossings,
    simulate_batch,
    soc_sweep,
)
from .aircraft import (
    AircraftStatistic,
    EmergenceDetection,
    EmergenceSchedule,
    ExponentialBackground,
    GridModel,
    ImageObservation,
    OffsetTarget,
    build_grid_transition,
    detect_emergence,
    generate_synthetic_sequence,
    unnormalized_output,
)

__version__ = "0.1.0"
