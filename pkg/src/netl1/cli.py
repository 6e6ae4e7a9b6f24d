"""Command line interface.

Subcommands: gen-instance, gen-network, oracle, run, sweep-rho, scale.
Exit codes: 0 on success/convergence, 2 when a run exhausts its step
budget, 1 on input errors.
"""

from __future__ import annotations

import argparse
import sys

from . import bench, engine, graphs, problems
from .linalg import InputError
from .solvers import ALL_KINDS, SolverConfig

_ALGO_ALIASES = {
    "dadmm": None,  # resolved against --partition
    "dlasso": "dlasso",
    "subgradient": "subgradient",
    "mm-ngs": "mm_ngs",
    "mm-dqa": "mm_dqa",
    "dn": "dn",
}


def _resolve_kind(algo: str, partition: str) -> str:
    if algo == "dadmm":
        return "dadmm_col" if partition == "column" else "dadmm_row"
    kind = _ALGO_ALIASES.get(algo, algo)
    if kind not in ALL_KINDS:
        raise InputError(f"unknown algorithm {algo!r}")
    if partition == "column":
        raise InputError(f"{algo} supports only the row partition")
    return kind


def _load_problem(args, partition_kind: str, n_nodes: int) -> problems.ProblemInstance:
    problem = problems.load_instance(args.instance)
    problem = problem.with_partition(partition_kind, n_nodes)
    if problem.x_ref is None:
        problem.x_ref = bench.solve_bp_centralized(problem.A, problem.b, tol=args.oracle_tol)
    return problem


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--algo", required=True, choices=sorted(_ALGO_ALIASES))
    p.add_argument("--partition", default="row", choices=("row", "column"))
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--instance", required=True)
    p.add_argument("--network", required=True)
    p.add_argument("--max-steps", type=int, default=10_000)
    p.add_argument("--targets", default="1e-2,1e-5",
                   help="comma-separated decreasing relative-error targets")
    p.add_argument("--oracle-tol", type=float, default=1e-9)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--trace-out", default=None)


def cmd_gen_instance(args) -> int:
    spec = bench.InstanceSpec(m=args.m, n=args.n, P=args.P, k=args.k, seed=args.seed)
    problem = bench.gen_instance(spec, kind=args.partition)
    problems.save_instance(args.out, problem)
    print(f"wrote {args.m}x{args.n} instance (k={args.k}, P={args.P}) to {args.out}")
    return 0


def cmd_gen_network(args) -> int:
    params = {}
    if args.model == "erdos_renyi":
        params["p"] = float(args.param)
    elif args.model == "watts_strogatz":
        n, p = args.param.split(",")
        params.update(n=int(n), p=float(p))
    elif args.model == "geometric":
        params["d"] = float(args.param)
    g = graphs.generate_network(args.model, args.P, args.seed, **params)
    coloring = graphs.greedy_coloring(g)
    graphs.save_network(args.out, g, coloring)
    status = "connected" if graphs.is_connected(g) else "NOT connected"
    print(f"wrote {args.model} network P={g.n_nodes} E={g.n_edges} "
          f"C={coloring.n_colors} ({status}) to {args.out}")
    return 0


def cmd_oracle(args) -> int:
    problem = problems.load_instance(args.instance)
    problem.x_ref = bench.solve_bp_centralized(problem.A, problem.b, tol=args.tol)
    out = args.out or args.instance
    problems.save_instance(out, problem)
    print(f"reference solution (l1 norm {abs(problem.x_ref).sum():.12g}) stored in {out}")
    return 0


def _parse_targets(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t.strip())


def cmd_run(args) -> int:
    kind = _resolve_kind(args.algo, args.partition)
    g, coloring = graphs.load_network(args.network)
    if coloring is None:
        coloring = graphs.greedy_coloring(g)
    problem = _load_problem(args, args.partition, g.n_nodes)
    rho = args.rho if args.rho is not None else bench.FIXED_RHO[kind]
    config = SolverConfig(kind=kind, rho=rho, delta=args.delta)
    rule = engine.StopRule(targets=_parse_targets(args.targets), max_comm_steps=args.max_steps)
    trace = engine.run(config, problem, g, coloring, rule, workers=args.workers)
    if args.trace_out:
        trace.to_csv(args.trace_out)
    summary = ", ".join(
        f"{t:g}: {trace.steps_to_accuracy.get(t, 'not reached')}" for t in rule.targets
    )
    print(f"{kind} rho={rho:g}: {trace.comm_steps} communication steps "
          f"(steps to accuracy {summary})")
    return 0 if trace.converged else 2


def cmd_sweep_rho(args) -> int:
    kind = _resolve_kind(args.algo, args.partition)
    g, coloring = graphs.load_network(args.network)
    if coloring is None:
        coloring = graphs.greedy_coloring(g)
    problem = _load_problem(args, args.partition, g.n_nodes)
    grid = _parse_targets(args.grid)
    config = SolverConfig(kind=kind, rho=grid[0], delta=args.delta)
    rule = engine.StopRule(targets=_parse_targets(args.targets), max_comm_steps=args.max_steps)
    result = bench.rho_sweep(grid, config, problem, g, coloring, rule)
    for rho in grid:
        tr = result.traces[rho]
        reached = tr.steps_to_accuracy.get(rule.finest, "not reached")
        print(f"  rho={rho:g}: steps to {rule.finest:g} = {reached}")
    print(f"best rho = {result.best_rho:g}")
    if args.trace_out:
        result.best_trace.to_csv(args.trace_out)
    return 0 if result.best_trace.converged else 2


def cmd_scale(args) -> int:
    p_values = [int(p) for p in args.p_values.split(",")] if args.p_values else None
    if p_values is None:
        p_values, P = [], 2
        while P <= args.pmax:
            p_values.append(P)
            P *= 2
    result = bench.scale_experiment(
        m=args.m, n=args.n, k=args.k, p_values=p_values, seed=args.seed,
        rho=args.rho, target=args.target, max_comm_steps=args.max_steps,
    )
    if args.out:
        result.to_csv(args.out)
    for kind, exponent in result.exponents.items():
        print(f"{kind}: fitted exponent {exponent:.3f}, steps {result.steps[kind]}")
    if any(-1 in steps for steps in result.steps.values()):
        print("warning: some cells exhausted the step budget (recorded as -1)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netl1",
        description="Distributed minimum-l1 solvers on simulated networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-instance", help="generate a Gaussian instance file")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--P", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--partition", default="row", choices=("row", "column"))
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_instance)

    p = sub.add_parser("gen-network", help="generate a network file")
    p.add_argument("--model", required=True, choices=sorted(graphs._MODEL_IDS))
    p.add_argument("--P", type=int, required=True)
    p.add_argument("--param", default="", help="p, 'n,p' or d depending on the model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_network)

    p = sub.add_parser("oracle", help="compute and store a certified reference solution")
    p.add_argument("--instance", required=True)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("run", help="run one algorithm and trace communication steps")
    _add_run_args(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("sweep-rho", help="pick the best penalty weight from a grid")
    _add_run_args(p)
    p.add_argument("--grid", default="1e-3,1e-2,1e-1,1,10")
    p.set_defaults(fn=cmd_sweep_rho)

    p = sub.add_parser("scale", help="steps-to-accuracy as the network grows")
    p.add_argument("--m", type=int, default=128)
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--target", type=float, default=1e-3)
    p.add_argument("--max-steps", type=int, default=10_000)
    p.add_argument("--pmax", type=int, default=64)
    p.add_argument("--p-values", default=None, help="comma-separated override")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_scale)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (InputError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
