"""Run orchestration: iterate communication steps, record traces, stop.

A trace logs one record per communication step, plus the zero-initialized
state as step 0 before any communication. The error reported per step is
the maximum over nodes of ||x_p - x_ref|| / ||x_ref|| (conservative), with
node 0's series recorded alongside. For the column partition the global
estimate is the concatenation of the per-node fragments, so the max and
node-0 series coincide there.

Runs are deterministic functions of their inputs: node solves inside a
scheduling phase may execute on worker threads, but results are merged in
node-index order and all reductions run in fixed order, so traces are
byte-identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .graphs import Coloring, Graph, greedy_coloring, is_connected
from .linalg import InputError
from .nodeprob import psi_p
from .problems import ProblemInstance
from .solvers import SolverConfig, Stepper, make_stepper


@dataclass
class StopRule:
    """Relative-error targets (positive, decreasing) and the step budget."""

    targets: tuple[float, ...] = (1e-2, 1e-5)
    max_comm_steps: int = 10_000

    def __post_init__(self):
        targets = tuple(float(t) for t in self.targets)
        if not targets or any(t <= 0 for t in targets):
            raise InputError("targets must be positive")
        if any(a <= b for a, b in zip(targets, targets[1:])):
            raise InputError("targets must be strictly decreasing")
        if self.max_comm_steps < 1:
            raise InputError("max_comm_steps must be at least 1")
        object.__setattr__(self, "targets", targets)

    @property
    def finest(self) -> float:
        return self.targets[-1]


@dataclass
class RunTrace:
    """Per-communication-step series and the steps-to-accuracy summary.

    The series include the step-0 baseline, so each holds comm_steps + 1
    values. steps_to_accuracy maps each requested target to the first step
    whose max relative error reached it (targets never reached are absent).
    """

    solver: str
    rho: float
    delta: float | None
    comm_steps: int = 0
    max_rel_err: list[float] = field(default_factory=list)
    node0_rel_err: list[float] = field(default_factory=list)
    consensus_residual: list[float] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    inner_iterations: list[int] = field(default_factory=list)
    steps_to_accuracy: dict[float, int] = field(default_factory=dict)
    converged: bool = False
    flagged_rounds: int = 0

    def to_csv(self, path) -> None:
        """Write `step,max_rel_err,node0_rel_err,consensus_residual,objective`
        rows with 17 significant digits."""
        lines = ["step,max_rel_err,node0_rel_err,consensus_residual,objective"]
        for s in range(len(self.max_rel_err)):
            lines.append(
                f"{s},{self.max_rel_err[s]:.17g},{self.node0_rel_err[s]:.17g},"
                f"{self.consensus_residual[s]:.17g},{self.objective[s]:.17g}"
            )
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def relative_error(x, x_ref) -> float:
    """||x - x_ref|| / ||x_ref|| in the Euclidean norm; rejects zero x_ref."""
    x = np.asarray(x, dtype=float)
    x_ref = np.asarray(x_ref, dtype=float)
    denom = np.linalg.norm(x_ref)
    if denom == 0.0:
        raise InputError("reference solution must be nonzero")
    return float(np.linalg.norm(x - x_ref) / denom)


def global_estimate(states, partition, x_ref=None, col_blocks=None):
    """Assemble the network's current global estimate.

    Row partitions: every node carries a full-length copy; with a reference
    available the copy with the largest relative error is returned
    (conservative reporting), otherwise node 0's. Column partitions: the
    per-node fragments are concatenated in node order (col_blocks supplies
    the per-node data to map y_p to its fragment).
    """
    if partition.kind == "row":
        X = states.primal
        if x_ref is None:
            return X[0].copy()
        errs = [relative_error(X[p], x_ref) for p in range(X.shape[0])]
        return X[int(np.argmax(errs))].copy()
    if col_blocks is None:
        raise InputError("column estimates need the per-node column blocks")
    fragments = [psi_p(sp, y)[1] for sp, y in zip(col_blocks, states.primal)]
    return np.concatenate(fragments)


def _consensus_residual(graph: Graph, X: np.ndarray) -> float:
    worst = 0.0
    for i, j in graph.edges:
        worst = max(worst, float(np.linalg.norm(X[i] - X[j])))
    return worst


def _metrics(stepper: Stepper, x_ref: np.ndarray):
    states, graph = stepper.states, stepper.graph
    if stepper.problem.partition.kind == "row":
        X = states.primal
        errs = np.array([relative_error(X[p], x_ref) for p in range(X.shape[0])])
        worst = int(np.argmax(errs))
        return float(errs.max()), float(errs[0]), _consensus_residual(graph, X), float(
            np.abs(X[worst]).sum()
        )
    estimate = global_estimate(
        states, stepper.problem.partition, x_ref=x_ref, col_blocks=stepper.col_blocks
    )
    err = relative_error(estimate, x_ref)
    return err, err, _consensus_residual(graph, states.primal), float(np.abs(estimate).sum())


def run(
    config: SolverConfig,
    problem: ProblemInstance,
    graph: Graph,
    coloring: Coloring | None = None,
    rule: StopRule | None = None,
    x_ref=None,
    workers: int = 1,
) -> RunTrace:
    """Execute one algorithm until the finest accuracy target or the budget.

    The graph must be connected. x_ref defaults to problem.x_ref and must be
    a nonzero reference solution; errors are measured against it at every
    step. workers > 1 parallelizes independent node solves without changing
    the trace (results merge in node order).
    """
    rule = rule or StopRule()
    if not is_connected(graph):
        raise InputError("the network must be connected")
    if x_ref is None:
        x_ref = problem.x_ref
    if x_ref is None:
        raise InputError("a reference solution is required to trace errors")
    x_ref = np.asarray(x_ref, dtype=float)
    if np.linalg.norm(x_ref) == 0.0:
        raise InputError("reference solution must be nonzero")

    if coloring is None:
        coloring = greedy_coloring(graph)

    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    mapper = executor.map if executor is not None else map
    try:
        stepper = make_stepper(config, problem, graph, coloring, mapper=mapper)
        trace = RunTrace(
            solver=config.kind,
            rho=config.rho,
            delta=config.delta if config.kind == "dadmm_col" else None,
        )

        def record(step: int, inner: int):
            max_err, node0_err, consensus, objective = _metrics(stepper, x_ref)
            trace.max_rel_err.append(max_err)
            trace.node0_rel_err.append(node0_err)
            trace.consensus_residual.append(consensus)
            trace.objective.append(objective)
            trace.inner_iterations.append(inner)
            for target in rule.targets:
                if max_err <= target and target not in trace.steps_to_accuracy:
                    trace.steps_to_accuracy[target] = step
            return max_err

        record(0, 0)
        for k in range(1, rule.max_comm_steps + 1):
            info = stepper.step(k)
            trace.comm_steps = k
            if info.flagged:
                trace.flagged_rounds += 1
            err = record(k, info.bb_iterations)
            if err <= rule.finest:
                trace.converged = True
                break
    finally:
        if executor is not None:
            executor.shutdown(wait=True)
    return trace
