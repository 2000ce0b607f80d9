"""Command-line driver: read an MPS file, solve, write solution and log.

Exit codes: 0 optimal, 1 imprecise, 2 iteration or time limit, 3 numerical
failure, 4 I/O or model error.  The solution and log files contain only
deterministic content (numbers, not timings), so two runs with the same
configuration produce byte-identical files; the timing breakdown is
printed to stdout.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

import numpy as np

from .errors import ModelError, SolverError
from .ipm import SolverOptions, SolveReport, run
from .model import Sense, Status, UserSolution, to_internal
from .mps import read_mps

EXIT_OPTIMAL = 0
EXIT_IMPRECISE = 1
EXIT_LIMIT = 2
EXIT_NUMERICAL = 3
EXIT_MODEL = 4

_STATUS_EXIT = {
    Status.OPTIMAL: EXIT_OPTIMAL,
    Status.IMPRECISE: EXIT_IMPRECISE,
    Status.ITERATION_LIMIT: EXIT_LIMIT,
    Status.TIME_LIMIT: EXIT_LIMIT,
    Status.NUMERICAL_FAILURE: EXIT_NUMERICAL,
    Status.OUT_OF_MEMORY: EXIT_NUMERICAL,
}


@dataclass
class CliConfig:
    input_path: str
    solution_path: str | None = None
    log_path: str | None = None
    options: SolverOptions = None
    quiet: bool = False

    def __post_init__(self):
        if self.options is None:
            self.options = SolverOptions()
        stem = os.path.splitext(self.input_path)[0]
        if self.solution_path is None:
            self.solution_path = stem + ".sol"
        if self.log_path is None:
            self.log_path = stem + ".log"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="loft",
        description="Factorisation-based interior point LP solver")
    p.add_argument("input", help="MPS file (fixed or free format)")
    p.add_argument("-o", "--output", help="solution file (default: <input>.sol)")
    p.add_argument("--log", help="iteration log file (default: <input>.log)")
    p.add_argument("--tol-feas", type=float, default=1e-8,
                   help="feasibility tolerance (default 1e-8)")
    p.add_argument("--tol-opt", type=float, default=1e-8,
                   help="relative gap tolerance (default 1e-8)")
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--correctors", type=int, default=10,
                   help="cap on centrality correctors per iteration")
    p.add_argument("--refine-cap", type=int, default=2,
                   help="max iterative refinement passes per solve")
    p.add_argument("--system", choices=["auto", "augmented", "normal_equations"],
                   default="auto")
    p.add_argument("--block-width", type=int, choices=[32, 64, 128], default=64,
                   help="dense kernel column-block width")
    p.add_argument("--reg-primal", type=float, default=1e-10,
                   help="static primal regularisation")
    p.add_argument("--reg-dual", type=float, default=1e-10,
                   help="static dual regularisation")
    p.add_argument("--time-limit", type=float, default=None, help="seconds")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def config_from_args(args) -> CliConfig:
    options = SolverOptions(
        tol_feas=args.tol_feas, tol_opt=args.tol_opt, max_iter=args.max_iter,
        corrector_cap=args.correctors, refine_cap=args.refine_cap,
        system=args.system, static_primal=args.reg_primal,
        static_dual=args.reg_dual, block_width=args.block_width,
        time_limit=args.time_limit)
    return CliConfig(input_path=args.input, solution_path=args.output,
                     log_path=args.log, options=options, quiet=args.quiet)


def write_solution(path: str, sol: UserSolution, user) -> None:
    with open(path, "w") as f:
        f.write("* loft solution file\n")
        f.write(f"problem    {user.name}\n")
        f.write(f"status     {sol.status.value}\n")
        f.write(f"objective  {sol.objective:.16e}\n")
        f.write(f"iterations {sol.iterations}\n")
        f.write(f"\ncolumns {user.num_cols}\n")
        f.write("* name value reduced_cost\n")
        for j, name in enumerate(user.col_names or
                                 [f"C{j}" for j in range(user.num_cols)]):
            f.write(f"{name} {sol.x[j]:.16e} {sol.reduced_costs[j]:.16e}\n")
        f.write(f"\nrows {user.num_rows}\n")
        f.write("* name activity dual\n")
        for i, name in enumerate(user.row_names or
                                 [f"R{i}" for i in range(user.num_rows)]):
            f.write(f"{name} {sol.row_activity[i]:.16e} {sol.row_dual[i]:.16e}\n")


def write_log(path: str, report: SolveReport, sol: UserSolution, user) -> None:
    with open(path, "w") as f:
        f.write("* loft iteration log\n")
        f.write(f"problem {user.name}\n")
        f.write(f"system {report.system}\n")
        f.write(f"correctors_budget {report.correctors_budget}\n")
        f.write("iter mu primal_inf dual_inf gap alpha_p alpha_d "
                "correctors refinements max_perturbation\n")
        for k, rec in enumerate(report.iterations):
            f.write(f"{k} {rec.mu:.16e} {rec.primal_inf:.16e} {rec.dual_inf:.16e} "
                    f"{rec.gap:.16e} {rec.alpha_p:.16e} {rec.alpha_d:.16e} "
                    f"{rec.correctors} {rec.refinements} "
                    f"{rec.max_perturbation:.16e}\n")
        f.write(f"status {sol.status.value}\n")
        f.write(f"objective {sol.objective:.16e}\n")
        f.write(f"iterations {sol.iterations}\n")


def main(config: CliConfig) -> int:
    """Read, scale, convert, solve, recover, write outputs."""
    try:
        user = read_mps(config.input_path)
        lp = to_internal(user)
        sol, report = run(lp, config.options)
        write_solution(config.solution_path, sol, user)
        write_log(config.log_path, report, sol, user)
    except (SolverError, OSError) as exc:
        print(f"loft: error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except MemoryError:
        print("loft: error: out of memory", file=sys.stderr)
        return EXIT_NUMERICAL

    if not config.quiet:
        total = max(report.total_time, 1e-12)
        busy = report.form_time + report.factor_time + report.solve_time
        print(f"problem    {user.name} ({user.num_rows} rows, "
              f"{user.num_cols} cols, {user.A.nnz} nonzeros)")
        print(f"system     {report.system}")
        print(f"status     {sol.status.value}")
        print(f"objective  {sol.objective:.10e}")
        print(f"iterations {sol.iterations}")
        print(f"time       {report.total_time:.3f}s  "
              f"(form {report.form_time / total:.0%}, "
              f"factor {report.factor_time / total:.0%}, "
              f"solve {report.solve_time / total:.0%}, "
              f"other {(total - busy) / total:.0%})")
    return _STATUS_EXIT[sol.status]


def cli_main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        return main(config)
    except ModelError as exc:
        print(f"loft: error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(cli_main())
