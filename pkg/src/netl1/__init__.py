"""netl1: minimum-l1 recovery solved over simulated multi-agent networks.

The package provides the color-scheduled consensus ADMM solver (row and
column data partitions), five baseline distributed algorithms, certified
centralized reference solvers, and a benchmarking engine that counts
communication steps to target accuracies.
"""

from .bench import (
    DESK_SCENARIOS,
    NETWORK_MODELS,
    RHO_GRID,
    InstanceSpec,
    connected_network,
    gen_instance,
    rho_sweep,
    scale_experiment,
    solve_bp_centralized,
    solve_regularized_bp,
)
from .engine import RunTrace, StopRule, global_estimate, relative_error, run
from .graphs import (
    Coloring,
    Graph,
    generate_network,
    greedy_coloring,
    incidence_matrix,
    is_connected,
    laplacian,
    load_network,
    save_network,
)
from .linalg import (
    FactorizationError,
    GramFactorization,
    InputError,
    PartitionSpec,
    PowerIterationError,
    affine_projection,
    gram_factorization,
    lambda_max,
    partition,
)
from .nodeprob import (
    BBConfig,
    ColSubproblem,
    RowSubproblem,
    psi_p,
    shrink_delta,
    solve_col_node,
    solve_row_node,
    x_of_u,
)
from .problems import ProblemInstance, load_instance, save_instance
from .solvers import EdgeDuals, NodeStates, SolverConfig, make_stepper

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
