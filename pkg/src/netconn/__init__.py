"""Estimation and control of algebraic connectivity for networks whose
links fail at random.

The package provides a stochastic power iteration that tracks the
second-smallest eigenvalue of the expected graph Laplacian (and the
matching Fiedler vector) from i.i.d. lossy samples of the topology, a
consensus-based distributed variant of the same recursion, power
control toward a target connectivity, a random-MAC collision model, a
Kiefer-Wolfowitz connectivity maximizer, and a reproducible experiment
harness.  A dense Jacobi eigensolver serves as the validation oracle
throughout.
"""

__version__ = "0.1.0"

from .graphs import (  # noqa: E402
    DegenerateGraphError,
    LinkFailureModel,
    RadioParams,
    Topology,
    build_rgg,
    coverage_radius,
    expected_laplacian,
    laplacian,
    load_topology,
    mean_degree,
    sample_laplacian,
    save_topology,
    topology_from_json,
    topology_to_json,
)
from .spectral import (  # noqa: E402
    EigPair,
    StepSchedule,
    convergence_bound,
    deflate,
    dense_sym_eig,
    eig_map,
    eps_bar_bound,
    eps_bar_bound_from_degree,
    iteration_matrix,
)
from .estimator import (  # noqa: E402
    DeflationContext,
    DegenerateIterateError,
    EstimatorState,
    deflated_matrices,
    estimate_spectrum,
    fiedler_error,
    init_state,
    run_estimator,
    run_tracking,
    step_centralized,
)
from .consensus import (  # noqa: E402
    CommCost,
    ConsensusConfig,
    NodeState,
    NodeStates,
    RoundTimeoutError,
    consensus_average,
    consensus_ratio,
    distributed_step,
    local_b,
    run_distributed,
)
from .control import (  # noqa: E402
    ConnectivityCurve,
    ControlConfig,
    KwConfig,
    MacModel,
    PowerGraph,
    collision_success_prob,
    connectivity_vs_power,
    kw_ascend,
    kw_maximize,
    measure_connectivity,
    power_update,
    run_connectivity_control,
)
from .harness import ConfigError, compare_oracle, resolve_config, run_scenario  # noqa: E402
from .trace import TraceRecord  # noqa: E402
