"""Distributed solver state machines.

Every algorithm is expressed as "one communication step" transitions over
per-node state arrays. Single-looped algorithms (color-scheduled consensus
ADMM in its row and column variants, the synchronous edge-variable ADMM
baseline, consensus subgradient) consume one step per outer iteration;
double-looped algorithms (multiplier method with nonlinear Gauss-Seidel or
diagonal quadratic approximation inner loops, and the double Nesterov
scheme with a FISTA inner loop) consume one step per inner iteration and
none for their outer dual updates.

All row algorithms minimize (1/P) sum_p ||x_p||_1 subject to the per-node
constraints A_p x_p = b_p plus edge consensus. The per-node subproblems are
mapped onto the shared kernel min ||x||_1 + v'x + c||x||^2 s.t. Ax = b by
scaling (v, c) by P, which leaves the minimizer unchanged.

Node ids never decide freshness directly; the scheduling discipline is that
node p reads the neighbor value produced in the current round exactly when
the neighbor's color precedes p's color (equivalently, already swept nodes
in a Gauss-Seidel pass).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graphs import Coloring, Graph, incidence_matrix, is_proper, laplacian
from .linalg import InputError, affine_projection, lambda_max
from .nodeprob import (
    BBConfig,
    ColSubproblem,
    RowSubproblem,
    solve_col_node,
    solve_row_node,
)
from .problems import ProblemInstance
from .linalg import partition as partition_blocks

ROW_KINDS = ("dadmm_row", "dlasso", "subgradient", "mm_ngs", "mm_dqa", "dn")
COLUMN_KINDS = ("dadmm_col",)
ALL_KINDS = ROW_KINDS + COLUMN_KINDS

SINGLE_LOOPED = ("dadmm_row", "dadmm_col", "dlasso", "subgradient")
DOUBLE_LOOPED = ("mm_ngs", "mm_dqa", "dn")


@dataclass
class SolverConfig:
    """Algorithm selection and tuning knobs.

    rho is the augmented-Lagrangian weight (unused by the subgradient);
    delta the column-partition regularization; inner_tol_rel and inner_cap
    control the inner loops of the double-looped methods (the inner loop
    stops when the sweep-over-sweep iterate change falls below
    inner_tol_rel * (1 + ||b||_inf) or after inner_cap steps). warm_start
    toggles reuse of each node's previous dual solution.
    """

    kind: str
    rho: float = 1.0
    delta: float = 1e-3
    bb: BBConfig = field(default_factory=lambda: BBConfig(grad_tol=1e-8))
    inner_tol_rel: float = 1e-6
    inner_cap: int = 50
    warm_start: bool = True

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise InputError(f"unknown solver kind {self.kind!r}; expected one of {ALL_KINDS}")
        if self.kind != "subgradient" and self.rho <= 0:
            raise InputError("rho must be positive")
        if self.kind == "dadmm_col" and self.delta <= 0:
            raise InputError("delta must be positive")
        if self.inner_cap < 1:
            raise InputError("inner_cap must be at least 1")


@dataclass
class NodeStates:
    """Stacked per-node state: primal iterates and dual accumulators are
    (P, L) arrays (L = n for row algorithms, m for the column variant)."""

    primal: np.ndarray
    gamma: np.ndarray
    scratch: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, n_nodes: int, length: int) -> "NodeStates":
        return cls(primal=np.zeros((n_nodes, length)), gamma=np.zeros((n_nodes, length)))


@dataclass
class EdgeDuals:
    """One dual vector per edge, in the graph's edge order; used only by the
    double-looped algorithms (the ADMM variants keep just the per-node
    aggregates gamma_p)."""

    values: np.ndarray  # (E, L)

    @classmethod
    def zeros(cls, n_edges: int, length: int) -> "EdgeDuals":
        return cls(values=np.zeros((n_edges, length)))


@dataclass
class RoundInfo:
    """Per-communication-step bookkeeping: total inner BB iterations and the
    number of node solves that hit their iteration cap."""

    bb_iterations: int = 0
    flagged: int = 0

    def absorb(self, solution):
        self.bb_iterations += solution.iterations
        if not solution.converged:
            self.flagged += 1


def _neighbor_sums(graph: Graph, X: np.ndarray) -> np.ndarray:
    S = np.zeros_like(X)
    for i, j in graph.edges:
        S[i] += X[j]
        S[j] += X[i]
    return S


def _gamma_step(states: NodeStates, graph: Graph, rho: float, X_new: np.ndarray) -> None:
    # gamma_p += rho * sum_{j in N_p} (x_p - x_j); antisymmetric per edge,
    # so the gamma vectors always sum to zero over the nodes.
    deg = graph.degrees[:, None].astype(float)
    states.gamma += rho * (deg * X_new - _neighbor_sums(graph, X_new))


def _require_coloring(graph: Graph, coloring: Coloring) -> None:
    if coloring is None:
        raise InputError("this solver needs a proper coloring")
    if len(coloring.colors) != graph.n_nodes or not is_proper(graph, coloring):
        raise InputError("coloring is not a proper coloring of the graph")


# ---------------------------------------------------------------------------
# single-looped rounds


def d_admm_round(
    states: NodeStates,
    graph: Graph,
    coloring: Coloring,
    blocks: list[RowSubproblem],
    rho: float,
    cfg: SolverConfig,
    mapper=map,
    inspector=None,
) -> RoundInfo:
    """One communication step of color-scheduled consensus ADMM (row data).

    Color classes run in sequence; within a class the nodes are independent
    (they share no edges) and may be solved in any order or in parallel.
    Node p forms v_p from its dual aggregate minus rho times the sum of
    neighbor iterates, taking the current round's value for lower-color
    neighbors and the previous round's for higher-color ones, then solves

        min (1/P)||x||_1 + v_p'x + (D_p rho / 2)||x||^2  s.t.  A_p x = b_p.

    After all classes finish, every node's dual aggregate absorbs
    rho * sum_j (x_p - x_j) over its neighbors. The optional inspector
    callback receives (p, j, fresh) for every neighbor value consumed.
    """
    _require_coloring(graph, coloring)
    P = graph.n_nodes
    X_old = states.primal
    X_new = X_old.copy()
    colors = coloring.colors
    info = RoundInfo()

    def solve_one(p: int):
        acc = np.zeros(X_old.shape[1])
        for j in graph.adjacency[p]:
            fresh = colors[j] < colors[p]
            acc += X_new[j] if fresh else X_old[j]
            if inspector is not None:
                inspector(p, j, fresh)
        v = states.gamma[p] - rho * acc
        if not cfg.warm_start:
            blocks[p].reset()
        return solve_row_node(blocks[p], P * v, P * graph.degrees[p] * rho / 2.0, cfg.bb)

    for cls in coloring.classes:
        for p, sol in zip(cls, mapper(solve_one, cls)):
            X_new[p] = sol.x
            info.absorb(sol)

    states.primal = X_new
    _gamma_step(states, graph, rho, X_new)
    return info


def d_admm_col_round(
    states: NodeStates,
    graph: Graph,
    coloring: Coloring,
    col_blocks: list[ColSubproblem],
    rho: float,
    b: np.ndarray,
    cfg: SolverConfig,
    mapper=map,
) -> RoundInfo:
    """Column-partition variant: the same v_p recursion over the nodes'
    length-m dual estimates y_p, with the node problem

        min psi_p(y) + (v_p + b/P)'y + (D_p rho / 2)||y||^2

    solved unconstrained. Every node knows the full right-hand side b, and
    each transmits y_p (length m) instead of a length-n iterate.
    """
    _require_coloring(graph, coloring)
    P = graph.n_nodes
    Y_old = states.primal
    Y_new = Y_old.copy()
    colors = coloring.colors
    info = RoundInfo()

    def solve_one(p: int):
        acc = np.zeros(Y_old.shape[1])
        for j in graph.adjacency[p]:
            acc += Y_new[j] if colors[j] < colors[p] else Y_old[j]
        v = states.gamma[p] - rho * acc
        if not cfg.warm_start:
            col_blocks[p].reset()
        q = graph.degrees[p] * rho / 2.0
        return solve_col_node(col_blocks[p], v, b, P, q, cfg.bb)

    for cls in coloring.classes:
        for p, sol in zip(cls, mapper(solve_one, cls)):
            Y_new[p] = sol.y
            info.absorb(sol)

    states.primal = Y_new
    _gamma_step(states, graph, rho, Y_new)
    return info


def d_lasso_round(
    states: NodeStates,
    graph: Graph,
    blocks: list[RowSubproblem],
    rho: float,
    cfg: SolverConfig,
    mapper=map,
) -> RoundInfo:
    """One step of the synchronous edge-variable ADMM baseline.

    All nodes update simultaneously from the previous round's iterates.
    Eliminating the per-edge averaging variables z_ij = (x_i + x_j)/2 from
    the edge-variable reformulation leaves the node problem with linear
    term v_p = gamma_p - rho * (D_p x_p + sum_j x_j) and quadratic
    coefficient rho * D_p, twice the color-scheduled variant's D_p rho / 2.
    """
    P = graph.n_nodes
    X_old = states.primal
    V = states.gamma - rho * (_neighbor_sums(graph, X_old) + graph.degrees[:, None] * X_old)
    info = RoundInfo()

    def solve_one(p: int):
        if not cfg.warm_start:
            blocks[p].reset()
        return solve_row_node(blocks[p], P * V[p], P * rho * float(graph.degrees[p]), cfg.bb)

    X_new = np.empty_like(X_old)
    for p, sol in zip(range(P), mapper(solve_one, range(P))):
        X_new[p] = sol.x
        info.absorb(sol)

    states.primal = X_new
    _gamma_step(states, graph, rho, X_new)
    return info


def subgradient_round(
    states: NodeStates,
    graph: Graph,
    blocks: list[RowSubproblem],
    k: int,
    mapper=map,
) -> RoundInfo:
    """Consensus-subgradient step with diminishing step size 1/(k+1).

    Each node averages itself with its neighbors using weights 1/(D_p + 1),
    takes an l1 subgradient step at the averaged point (zero entries
    contribute zero), and projects back onto {x : A_p x = b_p}. The 1/P
    objective weight is absorbed into the step sequence, which stays square
    summable but not summable; with the weight kept on the subgradient the
    method crawls an order of magnitude slower at these scales.
    """
    if k < 1:
        raise InputError("subgradient iteration index starts at 1")
    P = graph.n_nodes
    X = states.primal
    W = (X + _neighbor_sums(graph, X)) / (graph.degrees[:, None] + 1.0)
    G = np.sign(W)
    alpha = 1.0 / (k + 1.0)

    def solve_one(p: int):
        sp = blocks[p]
        return affine_projection(sp.A, sp.b, sp.gram, W[p] - alpha * G[p])

    X_new = np.empty_like(X)
    for p, x in zip(range(P), mapper(solve_one, range(P))):
        X_new[p] = x
    states.primal = X_new
    return RoundInfo()


# ---------------------------------------------------------------------------
# double-looped machinery


def edge_differences(graph: Graph, X: np.ndarray) -> np.ndarray:
    """Per-edge differences x_i - x_j for edges stored as (i, j), i < j."""
    out = np.empty((graph.n_edges, X.shape[1]))
    for e, (i, j) in enumerate(graph.edges):
        out[e] = X[i] - X[j]
    return out


def gamma_from_edge_duals(graph: Graph, duals: EdgeDuals) -> np.ndarray:
    """Node-side aggregation gamma_p = sum_j sign(j - p) * lambda_{p,j}.

    The lower endpoint of each edge receives +lambda, the higher one
    -lambda (ties cannot occur on simple graphs), matching the incidence
    matrix columns.
    """
    gamma = np.zeros((graph.n_nodes, duals.values.shape[1]))
    for e, (i, j) in enumerate(graph.edges):
        gamma[i] += duals.values[e]
        gamma[j] -= duals.values[e]
    return gamma


def mm_outer_update(edge_duals: EdgeDuals, states: NodeStates, graph: Graph, rho: float) -> None:
    """Dual gradient ascent on the edge multipliers once an inner loop has
    finished: lambda_{i,j} += rho * (x_i - x_j), then the node aggregates
    gamma_p are rebuilt from the updated multipliers."""
    edge_duals.values += rho * edge_differences(graph, states.primal)
    states.gamma = gamma_from_edge_duals(graph, edge_duals)


def ngs_inner_round(
    states: NodeStates,
    graph: Graph,
    blocks: list[RowSubproblem],
    rho: float,
    cfg: SolverConfig,
) -> RoundInfo:
    """One nonlinear Gauss-Seidel sweep over the inner problem at fixed
    edge multipliers.

    Nodes are swept in index order; each exactly minimizes the inner
    objective in its own block using fresh values from already swept nodes
    and previous values from the rest, so the sweep cannot run in parallel.
    One sweep is one communication step.
    """
    P = graph.n_nodes
    X = states.primal.copy()
    info = RoundInfo()
    for p in range(P):
        acc = np.zeros(X.shape[1])
        for j in graph.adjacency[p]:
            acc += X[j]  # fresh for j already swept, previous otherwise
        v = states.gamma[p] - rho * acc
        if not cfg.warm_start:
            blocks[p].reset()
        sol = solve_row_node(blocks[p], P * v, P * graph.degrees[p] * rho / 2.0, cfg.bb)
        X[p] = sol.x
        info.absorb(sol)
    states.primal = X
    return info


def dqa_inner_round(
    states: NodeStates,
    graph: Graph,
    blocks: list[RowSubproblem],
    rho: float,
    cfg: SolverConfig,
    mapper=map,
) -> RoundInfo:
    """One diagonal-quadratic-approximation round on the inner problem.

    All candidate blocks u_p are computed in parallel from the previous
    iterates, then damped: x_p <- tau u_p + (1 - tau) x_p with tau = 1/P.
    """
    P = graph.n_nodes
    X_old = states.primal
    S = _neighbor_sums(graph, X_old)
    info = RoundInfo()

    def solve_one(p: int):
        v = states.gamma[p] - rho * S[p]
        if not cfg.warm_start:
            blocks[p].reset()
        return solve_row_node(blocks[p], P * v, P * graph.degrees[p] * rho / 2.0, cfg.bb)

    U = np.empty_like(X_old)
    for p, sol in zip(range(P), mapper(solve_one, range(P))):
        U[p] = sol.x
        info.absorb(sol)

    tau = 1.0 / P
    states.primal = tau * U + (1.0 - tau) * X_old
    return info


def dn_inner_round(
    states: NodeStates,
    graph: Graph,
    blocks: list[RowSubproblem],
    rho: float,
    alpha: float,
    t_inner: int,
    cfg: SolverConfig,
    mapper=map,
) -> RoundInfo:
    """One FISTA iteration on the inner problem at fixed edge multipliers.

    The smooth part has per-node gradient gamma_p + rho D_p y_p -
    rho sum_j y_j at the momentum points y; the proximal step solves the
    shared node kernel with v = -u_p/alpha and c = 1/(2 alpha) under the
    node constraint. t_inner is the 1-based index of the iterate being
    produced; its momentum coefficient (t-1)/(t+2) vanishes at t = 1.

    Expects states.scratch["fista_x"] (previous inner iterate) and
    states.scratch["fista_y"] (momentum points); both are updated.
    """
    P = graph.n_nodes
    X_prev = states.scratch["fista_x"]
    Y = states.scratch["fista_y"]
    grad = states.gamma + rho * graph.degrees[:, None] * Y - rho * _neighbor_sums(graph, Y)
    U = Y - alpha * grad
    info = RoundInfo()

    def solve_one(p: int):
        if not cfg.warm_start:
            blocks[p].reset()
        return solve_row_node(blocks[p], P * (-U[p] / alpha), P / (2.0 * alpha), cfg.bb)

    X_new = np.empty_like(X_prev)
    for p, sol in zip(range(P), mapper(solve_one, range(P))):
        X_new[p] = sol.x
        info.absorb(sol)

    momentum = (t_inner - 1.0) / (t_inner + 2.0)
    states.scratch["fista_y"] = X_new + momentum * (X_new - X_prev)
    states.scratch["fista_x"] = X_new
    states.primal = X_new
    return info


def nesterov_outer_update(
    lam: EdgeDuals, eta: EdgeDuals, states: NodeStates, graph: Graph, rho: float, k_outer: int
) -> None:
    """Accelerated dual update on the edge multipliers.

    The gradient step is taken at the extrapolated multipliers eta (the
    point the finished inner loop solved at); the new extrapolation uses
    the momentum coefficient (k-1)/(k+2) of the 1-based outer index k.
    The inner loops read gamma built from eta.
    """
    lam_new = eta.values + rho * edge_differences(graph, states.primal)
    momentum = (k_outer - 1.0) / (k_outer + 2.0)
    eta.values = lam_new + momentum * (lam_new - lam.values)
    lam.values = lam_new
    states.gamma = gamma_from_edge_duals(graph, EdgeDuals(values=eta.values))


# ---------------------------------------------------------------------------
# steppers: one object per run, advancing exactly one communication step


class Stepper:
    """Base: holds the problem context and advances one communication step."""

    def __init__(self, config, problem, graph, coloring, mapper):
        self.config = config
        self.problem = problem
        self.graph = graph
        self.coloring = coloring
        self.mapper = mapper
        self.states: NodeStates = None  # set by subclasses

    def step(self, k: int) -> RoundInfo:
        raise NotImplementedError


class DADMMRowStepper(Stepper):
    def __init__(self, config, problem, graph, coloring, blocks, mapper):
        super().__init__(config, problem, graph, coloring, mapper)
        self.blocks = blocks
        self.states = NodeStates.zeros(graph.n_nodes, problem.n)

    def step(self, k: int) -> RoundInfo:
        return d_admm_round(
            self.states, self.graph, self.coloring, self.blocks,
            self.config.rho, self.config, mapper=self.mapper,
        )


class DADMMColStepper(Stepper):
    def __init__(self, config, problem, graph, coloring, col_blocks, mapper):
        super().__init__(config, problem, graph, coloring, mapper)
        self.col_blocks = col_blocks
        self.states = NodeStates.zeros(graph.n_nodes, problem.m)

    def step(self, k: int) -> RoundInfo:
        return d_admm_col_round(
            self.states, self.graph, self.coloring, self.col_blocks,
            self.config.rho, self.problem.b, self.config, mapper=self.mapper,
        )


class DLassoStepper(Stepper):
    def __init__(self, config, problem, graph, coloring, blocks, mapper):
        super().__init__(config, problem, graph, coloring, mapper)
        self.blocks = blocks
        self.states = NodeStates.zeros(graph.n_nodes, problem.n)

    def step(self, k: int) -> RoundInfo:
        return d_lasso_round(
            self.states, self.graph, self.blocks, self.config.rho, self.config,
            mapper=self.mapper,
        )


class SubgradientStepper(Stepper):
    def __init__(self, config, problem, graph, coloring, blocks, mapper):
        super().__init__(config, problem, graph, coloring, mapper)
        self.blocks = blocks
        self.states = NodeStates.zeros(graph.n_nodes, problem.n)

    def step(self, k: int) -> RoundInfo:
        return subgradient_round(self.states, self.graph, self.blocks, k, mapper=self.mapper)


class _DoubleLoopedStepper(Stepper):
    def __init__(self, config, problem, graph, coloring, blocks, mapper):
        super().__init__(config, problem, graph, coloring, mapper)
        self.blocks = blocks
        self.states = NodeStates.zeros(graph.n_nodes, problem.n)
        self.inner_tol = config.inner_tol_rel * (1.0 + float(np.abs(problem.b).max()))
        self.t_inner = 0

    def _inner_finished(self, change: float) -> bool:
        return change <= self.inner_tol or self.t_inner >= self.config.inner_cap


class MMStepper(_DoubleLoopedStepper):
    """Multiplier-method outer loop with a Gauss-Seidel ("ngs") or damped
    parallel ("dqa") inner loop."""

    def __init__(self, config, problem, graph, coloring, blocks, mapper, flavor):
        super().__init__(config, problem, graph, coloring, blocks, mapper)
        self.flavor = flavor
        self.edge_duals = EdgeDuals.zeros(graph.n_edges, problem.n)

    def step(self, k: int) -> RoundInfo:
        before = self.states.primal.copy()
        if self.flavor == "ngs":
            info = ngs_inner_round(self.states, self.graph, self.blocks, self.config.rho, self.config)
        else:
            info = dqa_inner_round(
                self.states, self.graph, self.blocks, self.config.rho, self.config,
                mapper=self.mapper,
            )
        self.t_inner += 1
        change = float(np.abs(self.states.primal - before).max())
        if self._inner_finished(change):
            mm_outer_update(self.edge_duals, self.states, self.graph, self.config.rho)
            self.t_inner = 0
        return info


class DNStepper(_DoubleLoopedStepper):
    """Accelerated dual outer loop with a FISTA inner loop; the FISTA step
    size is 1/(rho * lambda_max(graph Laplacian)), computed once."""

    def __init__(self, config, problem, graph, coloring, blocks, mapper):
        super().__init__(config, problem, graph, coloring, blocks, mapper)
        self.alpha = 1.0 / (config.rho * lambda_max(laplacian(graph), tol=1e-10))
        self.lam = EdgeDuals.zeros(graph.n_edges, problem.n)
        self.eta = EdgeDuals.zeros(graph.n_edges, problem.n)
        self.k_outer = 1
        self.states.scratch["fista_x"] = np.zeros_like(self.states.primal)
        self.states.scratch["fista_y"] = np.zeros_like(self.states.primal)

    def step(self, k: int) -> RoundInfo:
        before = self.states.scratch["fista_x"].copy()
        self.t_inner += 1
        info = dn_inner_round(
            self.states, self.graph, self.blocks, self.config.rho, self.alpha,
            self.t_inner, self.config, mapper=self.mapper,
        )
        change = float(np.abs(self.states.primal - before).max())
        if self._inner_finished(change):
            nesterov_outer_update(
                self.lam, self.eta, self.states, self.graph, self.config.rho, self.k_outer
            )
            self.k_outer += 1
            self.t_inner = 0
            self.states.scratch["fista_y"] = self.states.primal.copy()
        return info


def make_stepper(
    config: SolverConfig,
    problem: ProblemInstance,
    graph: Graph,
    coloring: Coloring | None = None,
    mapper=map,
) -> Stepper:
    """Build the stepper for a configured algorithm on a partitioned problem.

    Rejects degenerate setups up front: fewer than two nodes or isolated
    nodes (a zero degree would destroy the strict convexity of the node
    subproblems), missing or mismatched partitions, and improper colorings.
    """
    if graph.n_nodes < 2:
        raise InputError("distributed solvers need at least 2 nodes")
    if int(graph.degrees.min()) == 0:
        raise InputError("graph has isolated nodes; every node needs a neighbor")
    if problem.partition is None:
        raise InputError("problem has no partition descriptor")
    if problem.partition.n_nodes != graph.n_nodes:
        raise InputError("partition node count does not match the graph")

    expected = "column" if config.kind in COLUMN_KINDS else "row"
    if problem.partition.kind != expected:
        raise InputError(f"{config.kind} needs a {expected} partition")

    if config.kind in ("dadmm_row", "dadmm_col"):
        if coloring is None:
            raise InputError("color-scheduled solvers need a coloring")
        _require_coloring(graph, coloring)

    if config.kind == "dadmm_col":
        col_blocks = [
            ColSubproblem(A_p, config.delta)
            for A_p in partition_blocks(problem.A, problem.b, problem.partition)
        ]
        return DADMMColStepper(config, problem, graph, coloring, col_blocks, mapper)

    blocks = [
        RowSubproblem(A_p, b_p)
        for A_p, b_p in partition_blocks(problem.A, problem.b, problem.partition)
    ]
    if config.kind == "dadmm_row":
        return DADMMRowStepper(config, problem, graph, coloring, blocks, mapper)
    if config.kind == "dlasso":
        return DLassoStepper(config, problem, graph, coloring, blocks, mapper)
    if config.kind == "subgradient":
        return SubgradientStepper(config, problem, graph, coloring, blocks, mapper)
    if config.kind == "mm_ngs":
        return MMStepper(config, problem, graph, coloring, blocks, mapper, flavor="ngs")
    if config.kind == "mm_dqa":
        return MMStepper(config, problem, graph, coloring, blocks, mapper, flavor="dqa")
    if config.kind == "dn":
        return DNStepper(config, problem, graph, coloring, blocks, mapper)
    raise InputError(f"unknown solver kind {config.kind!r}")


def incidence_gamma_check(graph: Graph, duals: EdgeDuals) -> np.ndarray:
    """Matrix form of gamma_from_edge_duals (B @ lambda), used for tests."""
    return incidence_matrix(graph) @ duals.values
