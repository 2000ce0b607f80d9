"""Primal-dual interior point iterations.

Each iteration: residuals and termination check, refresh and factorise the
reduced KKT system, compute the affine (predictor) direction, then improve
it with multiple centrality correctors computed from the same
factorisation, and take fraction-to-boundary steps.  The number of
correctors attempted is budgeted once per solve by balancing the measured
symbolic factor/solve effort.  Every linear solve runs through iterative
refinement with a componentwise backward-error stop.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError

from .errors import FactorizationBreakdown, ModelError
from .factor import factorize, refine, solve as factor_solve
from .frontal import PivotParams
from .kkt import (
    AUGMENTED,
    NORMAL_EQUATIONS,
    Direction,
    RegularizationParams,
    SystemPlan,
    choose_system,
    compute_theta,
    recover_direction,
    reduce_rhs,
    regularized_theta,
)
from .model import InternalLp, Status, UserSolution, objective_values, recover_user_solution

GAMMA_CORRECTOR = 0.1      # complementarity target box [gamma*mu_t, mu_t/gamma]
CORRECTOR_STEP_GAIN = 0.05  # accept a corrector only for this much more step
CORRECTOR_ENLARGE = 0.1     # trial step enlargement when probing a corrector
SIGMA_CLIP = (1e-4, 0.9)
RETRY_FACTOR = 100.0        # static regularisation growth after a breakdown
MAX_FACTOR_ATTEMPTS = 3
IMPRECISE_RELAXATION = 1e4  # tolerance relaxation that still earns "imprecise"


@dataclass
class SolverOptions:
    tol_feas: float = 1e-8
    tol_opt: float = 1e-8
    max_iter: int = 100
    refine_cap: int = 2
    corrector_cap: int = 10
    step_factor: float = 0.9995
    sigma_min: float = SIGMA_CLIP[0]
    sigma_max: float = SIGMA_CLIP[1]
    system: str = "auto"  # auto | augmented | normal_equations
    static_primal: float = 1e-10
    static_dual: float = 1e-10
    block_width: int = 64
    solve_efficiency: float = 1.0  # alpha_F in the corrector budget
    time_limit: float | None = None
    keep_iterates: bool = False

    def validate(self) -> None:
        if min(self.tol_feas, self.tol_opt) <= 0:
            raise ModelError("tolerances must be positive")
        if not 0 < self.step_factor < 1:
            raise ModelError("step factor must lie in (0, 1)")
        if self.system not in ("auto", AUGMENTED, NORMAL_EQUATIONS):
            raise ModelError(f"unknown system choice {self.system!r}")


@dataclass
class IterationPoint:
    """Primal-dual iterate; entries off the bound sets are identically 0."""

    x: np.ndarray
    y: np.ndarray
    xl: np.ndarray
    xu: np.ndarray
    zl: np.ndarray
    zu: np.ndarray

    def copy(self) -> "IterationPoint":
        return IterationPoint(self.x.copy(), self.y.copy(), self.xl.copy(),
                              self.xu.copy(), self.zl.copy(), self.zu.copy())

    def is_interior(self, lp: InternalLp) -> bool:
        hl, hu = lp.has_lower, lp.has_upper
        return bool(np.all(self.xl[hl] > 0) and np.all(self.zl[hl] > 0)
                    and np.all(self.xu[hu] > 0) and np.all(self.zu[hu] > 0))


@dataclass
class Residuals:
    r1: np.ndarray
    r2: np.ndarray
    r3: np.ndarray
    r4: np.ndarray
    r5: np.ndarray
    r6: np.ndarray


@dataclass
class IterationRecord:
    mu: float
    primal_inf: float
    dual_inf: float
    gap: float
    alpha_p: float = 0.0
    alpha_d: float = 0.0
    correctors: int = 0
    refinements: int = 0
    max_perturbation: float = 0.0


@dataclass
class SolveReport:
    status: Status = Status.ITERATION_LIMIT
    iterations: list = field(default_factory=list)
    system: str = ""
    correctors_budget: int = 0
    form_time: float = 0.0
    factor_time: float = 0.0
    solve_time: float = 0.0
    total_time: float = 0.0
    points: list = field(default_factory=list)  # only with keep_iterates

    @property
    def num_iterations(self) -> int:
        return len(self.iterations)


def compute_mu(point: IterationPoint, lp: InternalLp) -> float:
    """Average complementarity over the bounded parts."""
    nb = lp.num_bounded
    if nb == 0:
        raise ModelError("model has no bounded variable: barrier undefined")
    hl, hu = lp.has_lower, lp.has_upper
    total = float(point.xl[hl] @ point.zl[hl]) + float(point.xu[hu] @ point.zu[hu])
    return total / nb


def compute_residuals(point: IterationPoint, lp: InternalLp, sigma: float,
                      mu: float, complementarity_targets=None) -> Residuals:
    """Newton right-hand side.  Predictor uses sigma = 0; corrector mode
    zeroes r1..r4 and takes r5, r6 from the supplied targets."""
    hl, hu = lp.has_lower, lp.has_upper
    n = lp.num_cols
    if complementarity_targets is not None:
        t5, t6 = complementarity_targets
        zero_m = np.zeros(lp.num_rows)
        zero_n = np.zeros(n)
        return Residuals(zero_m, zero_n, zero_n.copy(), zero_n.copy(), t5, t6)
    r1 = lp.b - lp.A @ point.x
    r2 = np.zeros(n)
    r3 = np.zeros(n)
    r2[hl] = lp.lower[hl] - point.x[hl] + point.xl[hl]
    r3[hu] = lp.upper[hu] - point.x[hu] - point.xu[hu]
    r4 = lp.c - lp.A.T @ point.y - point.zl + point.zu
    r5 = np.zeros(n)
    r6 = np.zeros(n)
    r5[hl] = sigma * mu - point.xl[hl] * point.zl[hl]
    r6[hu] = sigma * mu - point.xu[hu] * point.zu[hu]
    return Residuals(r1, r2, r3, r4, r5, r6)


def step_sizes(point: IterationPoint, direction: Direction, lp: InternalLp,
               eta: float) -> tuple[float, float]:
    """Fraction-to-boundary step sizes, separately for primal and dual."""

    def max_step(v, dv, mask) -> float:
        neg = mask & (dv < 0)
        if not neg.any():
            return np.inf
        return float(np.min(-v[neg] / dv[neg]))

    hl, hu = lp.has_lower, lp.has_upper
    a_p = min(max_step(point.xl, direction.dxl, hl),
              max_step(point.xu, direction.dxu, hu))
    a_d = min(max_step(point.zl, direction.dzl, hl),
              max_step(point.zu, direction.dzu, hu))
    return min(1.0, eta * a_p), min(1.0, eta * a_d)


def corrector_count(solve_effort: float, factor_effort: float,
                    efficiency: float, refine_cap: int, cap: int = 10) -> int:
    """Balance (1+k)(1+f/2) solves against one factorisation; at least 1."""
    k = int(np.floor(factor_effort * efficiency
                     / ((1.0 + refine_cap / 2.0) * solve_effort))) - 1
    return max(1, min(cap, k))


def _feasibility_norms(res: Residuals, lp: InternalLp) -> tuple[float, float]:
    """Unscaled primal and dual infeasibility (infinity norms)."""
    hl, hu = lp.has_lower, lp.has_upper
    cs, rs = lp.col_scale, lp.row_scale
    pieces = [np.abs(res.r1 / rs)]
    if hl.any():
        pieces.append(np.abs(cs[hl] * res.r2[hl]))
    if hu.any():
        pieces.append(np.abs(cs[hu] * res.r3[hu]))
    primal = float(np.max(np.concatenate(pieces)))
    dual = float(np.max(np.abs(res.r4 / cs)))
    return primal, dual


def _data_norms(lp: InternalLp) -> tuple[float, float]:
    hl, hu = lp.has_lower, lp.has_upper
    cs, rs = lp.col_scale, lp.row_scale
    pieces = [np.abs(lp.b / rs)]
    if hl.any():
        pieces.append(np.abs(cs[hl] * lp.lower[hl]))
    if hu.any():
        pieces.append(np.abs(cs[hu] * lp.upper[hu]))
    return float(np.max(np.concatenate(pieces))), float(np.max(np.abs(lp.c / cs)))


def termination_status(primal_inf: float, dual_inf: float, gap: float,
                       norm_blu: float, norm_c: float, fp: float, fd: float,
                       tol_feas: float, tol_opt: float) -> bool:
    """The pure termination predicate; monotone in all three residuals."""
    return (primal_inf <= tol_feas * (1.0 + norm_blu)
            and dual_inf <= tol_feas * (1.0 + norm_c)
            and gap <= tol_opt * (1.0 + 0.5 * abs(fp + fd)))


def termination_check(point: IterationPoint, lp: InternalLp, res: Residuals,
                      options: SolverOptions, relax: float = 1.0) -> bool:
    primal_inf, dual_inf = _feasibility_norms(res, lp)
    fp, fd = objective_values(point, lp)
    norm_blu, norm_c = _data_norms(lp)
    return termination_status(primal_inf, dual_inf, abs(fp - fd), norm_blu,
                              norm_c, fp, fd, options.tol_feas * relax,
                              options.tol_opt * relax)


def starting_point(lp: InternalLp, plan: SystemPlan, options: SolverOptions
                   ) -> IterationPoint:
    """Least-squares primal/dual guess shifted well inside the bounds.

    Solves min ||x|| s.t. Ax = b and the dual least-squares analogue with
    one augmented factorisation at Theta = I, then pushes every bound gap
    and multiplier up to at least 1.  Falls back to all-ones gaps if that
    factorisation breaks down.
    """
    n, m = lp.num_cols, lp.num_rows
    reg = RegularizationParams(options.static_primal, options.static_dual)
    x_hat = np.zeros(n)
    y_hat = np.zeros(m)
    z_hat = lp.c.copy()
    try:
        kkt = plan.aug_builder.build(np.ones(n), reg)
        kkt.symbolic = plan.aug_symbolic
        fact = factorize(kkt, plan.aug_symbolic, _pivot_params(options, reg))
        sol = factor_solve(fact, np.concatenate([np.zeros(n), lp.b]))
        x_hat = sol[:n]
        sol = factor_solve(fact, np.concatenate([lp.c, np.zeros(m)]))
        y_hat = sol[n:]
        z_hat = -sol[:n]  # z = c - A'y
    except (FactorizationBreakdown, LinAlgError):
        pass  # all-ones fallback below

    hl, hu = lp.has_lower, lp.has_upper
    xl = np.zeros(n)
    xu = np.zeros(n)
    zl = np.zeros(n)
    zu = np.zeros(n)
    raw_l = np.where(np.isfinite(lp.lower), x_hat - lp.lower, 1.0)
    raw_u = np.where(np.isfinite(lp.upper), lp.upper - x_hat, 1.0)
    gaps = np.concatenate([raw_l[hl], raw_u[hu]])
    shift_p = max(0.0, -1.5 * float(gaps.min())) if gaps.size else 0.0
    xl[hl] = np.maximum(1.0, raw_l[hl] + shift_p)
    xu[hu] = np.maximum(1.0, raw_u[hu] + shift_p)

    zs = np.concatenate([z_hat[hl], -z_hat[hu]])
    shift_d = max(0.0, -1.5 * float(zs.min())) if zs.size else 0.0
    zl[hl] = np.maximum(1.0, z_hat[hl] + shift_d)
    zu[hu] = np.maximum(1.0, -z_hat[hu] + shift_d)

    return IterationPoint(x=x_hat, y=y_hat, xl=xl, xu=xu, zl=zl, zu=zu)


def _pivot_params(options: SolverOptions, reg: RegularizationParams) -> PivotParams:
    return PivotParams(static_neg=reg.static_primal, static_pos=reg.static_dual)


class _DirectionSolver:
    """One factorisation plus however many refined solves it serves."""

    def __init__(self, lp: InternalLp, plan: SystemPlan, options: SolverOptions,
                 report: SolveReport):
        self.lp = lp
        self.plan = plan
        self.options = options
        self.report = report
        self.kkt = None
        self.fact = None
        self.theta_reg = None
        self.refinements = 0

    def refresh(self, point: IterationPoint) -> None:
        """Form and factorise the KKT matrix at the current point, retrying
        with 100x the static regularisation after a breakdown."""
        inv_theta = compute_theta(point, self.lp)
        reg = RegularizationParams(self.options.static_primal,
                                   self.options.static_dual)
        last_exc: Exception | None = None
        for attempt in range(MAX_FACTOR_ATTEMPTS):
            t0 = time.perf_counter()
            kkt = self.plan.build(inv_theta, reg)
            self.report.form_time += time.perf_counter() - t0
            try:
                fact = factorize(kkt, self.plan.symbolic,
                                 _pivot_params(self.options, reg))
            except FactorizationBreakdown as exc:
                last_exc = exc
                reg = reg.scaled(RETRY_FACTOR)
                continue
            self.report.factor_time += fact.factor_time
            self.kkt = kkt
            self.fact = fact
            self.theta_reg = regularized_theta(inv_theta, reg)
            return
        raise FactorizationBreakdown(
            f"factorisation failed after {MAX_FACTOR_ATTEMPTS} attempts "
            f"with growing static regularisation: {last_exc}")

    def direction(self, point: IterationPoint, res: Residuals) -> Direction:
        rhs, r7 = reduce_rhs(res, point, self.lp, self.plan.kind, self.theta_reg)
        t0 = time.perf_counter()
        sol, omegas = refine(self.kkt, self.fact, rhs, self.options.refine_cap)
        self.report.solve_time += time.perf_counter() - t0
        self.refinements += len(omegas) - 1
        return recover_direction(self.plan.kind, sol, res, point, self.lp,
                                 self.theta_reg, r7)


def centrality_corrector(point: IterationPoint, direction: Direction,
                         solver: _DirectionSolver, mu_target: float,
                         alphas: tuple[float, float], lp: InternalLp,
                         options: SolverOptions):
    """One corrector attempt: push the trial complementarity products into
    the box [gamma mu_t, mu_t / gamma] using the existing factorisation.

    Returns (direction, alphas, accepted); a rejected corrector leaves the
    previous direction untouched.
    """
    hl, hu = lp.has_lower, lp.has_upper
    a_p = min(1.0, alphas[0] + CORRECTOR_ENLARGE)
    a_d = min(1.0, alphas[1] + CORRECTOR_ENLARGE)
    lo = GAMMA_CORRECTOR * mu_target
    hi = mu_target / GAMMA_CORRECTOR

    t5 = np.zeros(lp.num_cols)
    t6 = np.zeros(lp.num_cols)
    vl = (point.xl[hl] + a_p * direction.dxl[hl]) * (point.zl[hl] + a_d * direction.dzl[hl])
    vu = (point.xu[hu] + a_p * direction.dxu[hu]) * (point.zu[hu] + a_d * direction.dzu[hu])
    t5[hl] = np.clip(vl, lo, hi) - vl
    t6[hu] = np.clip(vu, lo, hi) - vu
    if not (np.any(t5) or np.any(t6)):
        return direction, alphas, False

    res_corr = compute_residuals(point, lp, 0.0, 0.0, complementarity_targets=(t5, t6))
    try:
        corr = solver.direction(point, res_corr)
    except (FactorizationBreakdown, LinAlgError):
        return direction, alphas, False
    combined = direction + corr
    new_alphas = step_sizes(point, combined, lp, options.step_factor)
    if min(new_alphas) >= min(alphas) + CORRECTOR_STEP_GAIN:
        return combined, new_alphas, True
    return direction, alphas, False


def run(lp: InternalLp, options: SolverOptions | None = None
        ) -> tuple[UserSolution, SolveReport]:
    """Solve the internal LP; returns the recovered user solution and the
    full iteration report."""
    options = options or SolverOptions()
    options.validate()
    if lp.num_bounded == 0:
        raise ModelError("model has no bounded variable: barrier undefined")

    report = SolveReport()
    t_start = time.perf_counter()
    status = Status.ITERATION_LIMIT

    plan = choose_system(lp, options.system)
    report.system = plan.kind
    symb = plan.symbolic
    budget = corrector_count(2.0 * symb.nnz_l, symb.flops,
                             options.solve_efficiency, options.refine_cap,
                             options.corrector_cap)
    report.correctors_budget = budget

    point = starting_point(lp, plan, options)
    solver = _DirectionSolver(lp, plan, options, report)

    for _ in range(options.max_iter):
        mu = compute_mu(point, lp)
        res = compute_residuals(point, lp, 0.0, mu)
        primal_inf, dual_inf = _feasibility_norms(res, lp)
        fp, fd = objective_values(point, lp)
        record = IterationRecord(mu=mu, primal_inf=primal_inf,
                                 dual_inf=dual_inf, gap=abs(fp - fd))
        if options.keep_iterates:
            report.points.append(point.copy())

        if termination_check(point, lp, res, options):
            status = Status.OPTIMAL
            break
        if options.time_limit is not None and \
                time.perf_counter() - t_start > options.time_limit:
            status = Status.TIME_LIMIT
            break

        solver.refinements = 0
        try:
            solver.refresh(point)
        except FactorizationBreakdown:
            status = Status.NUMERICAL_FAILURE
            break
        record.max_perturbation = solver.fact.max_perturbation

        try:
            affine = solver.direction(point, res)
        except (FactorizationBreakdown, LinAlgError):
            status = Status.NUMERICAL_FAILURE
            break

        # Mehrotra: probe the undamped affine step, pick the centering
        # weight, then resolve with the second-order complementarity term
        alphas_aff = step_sizes(point, affine, lp, 1.0)
        trial = _advance(point, affine, alphas_aff, lp)
        mu_aff = compute_mu(trial, lp)
        sigma = float(np.clip((mu_aff / mu) ** 3, options.sigma_min,
                              options.sigma_max))
        res_c = compute_residuals(point, lp, sigma, mu)
        hl, hu = lp.has_lower, lp.has_upper
        res_c.r5[hl] -= affine.dxl[hl] * affine.dzl[hl]
        res_c.r6[hu] -= affine.dxu[hu] * affine.dzu[hu]
        try:
            predictor = solver.direction(point, res_c)
        except (FactorizationBreakdown, LinAlgError):
            status = Status.NUMERICAL_FAILURE
            break
        alphas = step_sizes(point, predictor, lp, options.step_factor)
        if min(alphas) < min(step_sizes(point, affine, lp, options.step_factor)):
            # second-order term hurt more than it helped; keep the affine step
            predictor = affine
            alphas = step_sizes(point, affine, lp, options.step_factor)

        direction = predictor
        accepted = 0
        for _ in range(budget):
            direction, alphas, ok = centrality_corrector(
                point, direction, solver, sigma * mu, alphas, lp, options)
            if not ok:
                break
            accepted += 1

        point = _advance(point, direction, alphas, lp)
        record.alpha_p, record.alpha_d = alphas
        record.correctors = accepted
        record.refinements = solver.refinements
        report.iterations.append(record)

    if status != Status.OPTIMAL:
        res = compute_residuals(point, lp, 0.0, compute_mu(point, lp))
        if termination_check(point, lp, res, options):
            status = Status.OPTIMAL
        elif termination_check(point, lp, res, options, relax=IMPRECISE_RELAXATION):
            status = Status.IMPRECISE

    report.status = status
    report.total_time = time.perf_counter() - t_start
    solution = recover_user_solution(point, lp, status, report.num_iterations)
    return solution, report


def _advance(point: IterationPoint, direction: Direction,
             alphas: tuple[float, float], lp: InternalLp) -> IterationPoint:
    a_p, a_d = alphas
    new = IterationPoint(
        x=point.x + a_p * direction.dx,
        y=point.y + a_d * direction.dy,
        xl=point.xl + a_p * direction.dxl,
        xu=point.xu + a_p * direction.dxu,
        zl=point.zl + a_d * direction.dzl,
        zu=point.zu + a_d * direction.dzu,
    )
    hl, hu = lp.has_lower, lp.has_upper
    new.xl[~hl] = 0.0
    new.xu[~hu] = 0.0
    new.zl[~hl] = 0.0
    new.zu[~hu] = 0.0
    return new
