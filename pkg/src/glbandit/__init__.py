"""Generalized linear bandit toolkit.

Core pieces: link functions and aggregated losses (`glm`), the warm-up MLE
and projected-SGD machinery (`estimators`), decision policies
(`policies`), reward environments with hidden truth (`environments`), and
the benchmark harness plus CLI (`harness`, `io`, `cli`).
"""

from .environments import ClusteredDatasetEnv, RoundOutcome, SyntheticGlbEnv, cluster_dataset
from .estimators import (
    ConvergenceError,
    MleConfig,
    ProjectionBall,
    SgdAverager,
    SingularSystemError,
    project_to_ball,
    sgd_update,
    solve_mle,
)
from .glm import (
    GlmLink,
    ObservationBatch,
    aggregated_gradient,
    aggregated_hessian,
    aggregated_loss,
    cumulant,
    identity_link,
    link_derivative,
    link_value,
    logistic_link,
)
from .harness import (
    ClusteredEnvSpec,
    ExperimentConfig,
    GridSpec,
    PolicySpec,
    RegretTrace,
    SyntheticEnvSpec,
    grid_search,
    run_diagnostics,
    run_experiment,
    run_once,
    timing_report,
)
from .policies import (
    EpsilonGreedyPolicy,
    GlocPolicy,
    LaplaceTsPolicy,
    OraclePolicy,
    PracticalExploration,
    SgdTsPolicy,
    TheoryExploration,
    UcbGlmPolicy,
    UniformPolicy,
    select_arm_by_score,
    ts_sample,
)

__version__ = "0.1.0"
