"""Experiment driver: drift sweeps, convergence studies, scaling checks.

Sweep cells (method x epsilon) are independent, so they run on a bounded
thread pool; results always merge back in plan order, keeping output
deterministic regardless of scheduling.  A failing cell is recorded with
its error message and whatever partial series it produced instead of
aborting the sweep.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import (
    ConfigError,
    DegenerateFieldError,
    FieldDomainError,
    FixedPointDivergedError,
    InvalidParameterError,
    NumericalBlowupError,
)
from .fields import PROBLEM_NAMES, ProblemSpec, builtin_problem, cross_product_matrix
from .integrators import _MAX_TOTAL_STEPS, METHODS, IntegratorConfig, integrate
from .invariants import DriftSeries, drift_series
from .reference import ReferenceConfig, global_error

__all__ = [
    "ConvergenceStudy",
    "DriftScaling",
    "ExperimentPlan",
    "ExperimentResult",
    "CellResult",
    "PreconditionReport",
    "conservation_preconditions",
    "default_t_end",
    "drift_scaling_table",
    "run_convergence_study",
    "run_drift_experiment",
    "run_drift_scaling",
    "theorem_coverage",
]

logger = logging.getLogger(__name__)

_SCALING_CHANNELS = {"H": "energy", "M": "momentum", "I": "magnetic_moment"}
_COMMUTATOR_TOL = 1e-13
_FIELD_SAMPLE_TOL = 1e-12

DESK_T_END = 1000.0
FULL_T_END = 10000.0


def default_t_end() -> float:
    """Desk-scale horizon unless CPD_FULL_HORIZON requests the long one."""
    flag = os.environ.get("CPD_FULL_HORIZON", "").strip().lower()
    return FULL_T_END if flag in ("1", "true", "yes", "on") else DESK_T_END


def _worker_count(n_cells: int) -> int:
    raw = os.environ.get("CPD_THREADS")
    if raw is None:
        cap = os.cpu_count() or 1
    else:
        try:
            cap = int(raw)
        except ValueError:
            raise ConfigError(f"CPD_THREADS must be an integer, got {raw!r}") from None
        if cap < 1:
            raise ConfigError(f"CPD_THREADS must be >= 1, got {cap}")
    return max(1, min(cap, n_cells))


@dataclass(frozen=True)
class ExperimentPlan:
    """One drift sweep: a problem crossed with methods and epsilon values."""

    problem: ProblemSpec
    methods: tuple
    h: float
    t_end: float
    sample_stride: int = 1
    epsilons: tuple = (1.0,)
    quad_nodes: int | None = None
    fp_tol: float = 1e-16
    fp_max_iter: int = 50

    def __post_init__(self) -> None:
        methods = tuple(str(m).lower() for m in self.methods)
        if not methods:
            raise InvalidParameterError("plan needs at least one method")
        for m in methods:
            if m not in METHODS:
                raise InvalidParameterError(
                    f"unknown method {m!r}; expected one of {METHODS}"
                )
        object.__setattr__(self, "methods", methods)
        if not (np.isfinite(self.h) and self.h > 0):
            raise InvalidParameterError(f"h must be positive and finite, got {self.h!r}")
        if not (np.isfinite(self.t_end) and self.t_end >= 0):
            raise InvalidParameterError(
                f"t_end must be finite and >= 0, got {self.t_end!r}"
            )
        if self.t_end / self.h > _MAX_TOTAL_STEPS:
            raise InvalidParameterError(
                f"t_end/h = {self.t_end / self.h:.3g} exceeds the step budget"
            )
        if not (isinstance(self.sample_stride, int) and self.sample_stride >= 1):
            raise InvalidParameterError(
                f"sample_stride must be a positive integer, got {self.sample_stride!r}"
            )
        epsilons = tuple(float(e) for e in self.epsilons)
        if not epsilons:
            raise InvalidParameterError("plan needs at least one epsilon")
        for e in epsilons:
            if not (np.isfinite(e) and e > 0):
                raise InvalidParameterError(
                    f"epsilon values must be positive and finite, got {e!r}"
                )
        object.__setattr__(self, "epsilons", epsilons)

    def cell_keys(self) -> list:
        return [(m, e) for m in self.methods for e in self.epsilons]


@dataclass(frozen=True)
class CellResult:
    """Outcome of one (method, epsilon) cell of a sweep."""

    method: str
    epsilon: float
    drift: DriftSeries | None
    max_drift: dict | None
    duration: float
    step_count: int
    fp_total_iterations: int = 0
    fp_max_iterations: int = 0
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class ExperimentResult:
    plan: ExperimentPlan
    cells: tuple

    def cell(self, method: str, epsilon: float) -> CellResult:
        method = str(method).lower()
        for c in self.cells:
            if c.method == method and c.epsilon == float(epsilon):
                return c
        raise KeyError(f"no cell for ({method!r}, {epsilon!r})")


def _run_cell(plan: ExperimentPlan, method: str, epsilon: float) -> CellResult:
    problem = plan.problem.with_epsilon(epsilon)
    cfg = IntegratorConfig(
        method=method,
        h=plan.h,
        quad_nodes=plan.quad_nodes,
        fp_tol=plan.fp_tol,
        fp_max_iter=plan.fp_max_iter,
    )
    start = time.perf_counter()
    try:
        traj = integrate(problem, cfg, plan.t_end, sample_stride=plan.sample_stride)
        error = None
    except (FixedPointDivergedError, NumericalBlowupError, FieldDomainError) as exc:
        traj = getattr(exc, "partial", None)
        error = f"{type(exc).__name__}: {exc}"
    duration = time.perf_counter() - start

    drift = None
    max_drift = None
    step_count = 0
    fp_total = fp_max = 0
    if traj is not None and traj.times.size > 0:
        step_count = traj.step_count
        fp_total = traj.fp_total_iterations
        fp_max = traj.fp_max_iterations
        try:
            drift = drift_series(traj, problem)
            max_drift = drift.max_drift()
        except (DegenerateFieldError, FieldDomainError) as exc:
            error = error or f"{type(exc).__name__}: {exc}"
    return CellResult(
        method=method,
        epsilon=epsilon,
        drift=drift,
        max_drift=max_drift,
        duration=duration,
        step_count=step_count,
        fp_total_iterations=fp_total,
        fp_max_iterations=fp_max,
        error=error,
    )


def run_drift_experiment(plan: ExperimentPlan) -> ExperimentResult:
    """Integrate every (method, epsilon) cell and collect drift series."""
    keys = plan.cell_keys()
    workers = _worker_count(len(keys))
    if workers == 1:
        cells = [_run_cell(plan, m, e) for m, e in keys]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_cell, plan, m, e) for m, e in keys]
            cells = [f.result() for f in futures]
    for cell in cells:
        if cell.failed:
            logger.warning(
                "cell (%s, eps=%g) failed: %s", cell.method, cell.epsilon, cell.error
            )
    return ExperimentResult(plan=plan, cells=tuple(cells))


@dataclass(frozen=True)
class ConvergenceStudy:
    problem_name: str
    t_end: float
    ks: tuple
    hs: tuple
    errors: dict
    slopes: dict


def run_convergence_study(
    problem: ProblemSpec,
    methods,
    k_range,
    t_end: float,
    reference_config: ReferenceConfig | None = None,
) -> ConvergenceStudy:
    """Endpoint error against the reference at h = 2^-k for each k.

    Fits the least-squares slope of log error versus log h per method.
    """
    methods = tuple(str(m).lower() for m in methods)
    for m in methods:
        if m not in METHODS:
            raise InvalidParameterError(f"unknown method {m!r}")
    ks = tuple(int(k) for k in k_range)
    if not ks:
        raise InvalidParameterError("k_range must be non-empty")
    hs = tuple(2.0**-k for k in ks)
    for k, h in zip(ks, hs):
        steps = t_end / h
        if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
            raise InvalidParameterError(
                f"t_end={t_end!r} is not an integer number of steps at k={k}"
            )
    errors = {}
    slopes = {}
    for m in methods:
        errs = tuple(
            global_error(problem, m, h, t_end, cfg=reference_config) for h in hs
        )
        errors[m] = errs
        slopes[m] = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    return ConvergenceStudy(
        problem_name=problem.name,
        t_end=t_end,
        ks=ks,
        hs=hs,
        errors=errors,
        slopes=slopes,
    )


def drift_scaling_table(
    problem: ProblemSpec,
    method: str,
    h_list,
    t_end: float,
    sample_stride: int = 1,
    quad_nodes: int | None = None,
) -> dict:
    """One drift series per step size, keyed by h, for every channel."""
    table = {}
    for h in h_list:
        h = float(h)
        cfg = IntegratorConfig(method=method, h=h, quad_nodes=quad_nodes)
        traj = integrate(problem, cfg, t_end, sample_stride=sample_stride)
        table[h] = drift_series(traj, problem)
    return table


@dataclass(frozen=True)
class DriftScaling:
    method: str
    channel: str
    hs: tuple
    max_drifts: tuple
    exponent: float


def run_drift_scaling(
    problem: ProblemSpec,
    method: str,
    h_list,
    t_end: float,
    channel: str,
    table: dict | None = None,
    sample_stride: int = 1,
    quad_nodes: int | None = None,
) -> DriftScaling:
    """Fitted exponent of max drift versus h for one invariant channel.

    The caller is responsible for checking that the relevant conservation
    preconditions hold; see conservation_preconditions.
    """
    if channel not in _SCALING_CHANNELS:
        raise InvalidParameterError(
            f"channel must be one of {sorted(_SCALING_CHANNELS)}, got {channel!r}"
        )
    key = _SCALING_CHANNELS[channel]
    hs = tuple(float(h) for h in h_list)
    if len(hs) < 2:
        raise InvalidParameterError("need at least two step sizes to fit a slope")
    if table is None:
        table = drift_scaling_table(
            problem, method, hs, t_end,
            sample_stride=sample_stride, quad_nodes=quad_nodes,
        )
    maxima = tuple(table[h].max_drift()[key] for h in hs)
    exponent = float(np.polyfit(np.log(hs), np.log(maxima), 1)[0])
    return DriftScaling(
        method=str(method).lower(),
        channel=channel,
        hs=hs,
        max_drifts=maxima,
        exponent=exponent,
    )


@dataclass(frozen=True)
class PreconditionReport:
    """Which conservation statements the problem structurally supports."""

    problem_name: str
    checks: dict
    residuals: dict
    covered_channels: tuple = dataclass_field(init=False, default=())

    def __post_init__(self) -> None:
        covered = ["H"]
        if self.checks["constant_field"] and self.checks["momentum_commutation"]:
            covered.append("M")
        if self.checks["constant_field"] and self.checks["moment_commutation"]:
            covered.append("I")
        object.__setattr__(self, "covered_channels", tuple(covered))


def conservation_preconditions(problem: ProblemSpec) -> PreconditionReport:
    """Check the structural hypotheses behind the drift bounds.

    Energy needs nothing extra.  The momentum bound needs a constant field
    whose potential Hessian commutes with the planar rotation generator;
    the magnetic-moment bound swaps in commutation with the normalized
    field's cross-product matrix.  Results are logged, not enforced.
    """
    field = problem.field
    rng = np.random.default_rng(7)
    radii = rng.uniform(0.5, 1.5, size=16)
    angles = rng.uniform(0.0, 2.0 * np.pi, size=16)
    zs = rng.uniform(-1.0, 1.0, size=16)
    points = np.stack(
        [radii * np.cos(angles), radii * np.sin(angles), zs], axis=-1
    )
    b0 = field.B(problem.x0)
    b_scale = max(1.0, float(np.linalg.norm(b0)))
    field_dev = float(np.max(np.abs(field.B(points) - b0))) / b_scale
    constant_field = field_dev <= _FIELD_SAMPLE_TOL

    checks = {"constant_field": constant_field}
    residuals = {"constant_field": field_dev}

    if field.is_quadratic_U and field.hess_U is not None:
        Q = np.asarray(field.hess_U(problem.x0), dtype=float)
        S = problem.S
        r_mom = float(np.max(np.abs(Q @ S - S @ Q)))
        checks["momentum_commutation"] = r_mom <= _COMMUTATOR_TOL
        residuals["momentum_commutation"] = r_mom
        b_norm = float(np.linalg.norm(b0))
        if b_norm > 1e-12:
            b_hat = cross_product_matrix(b0 / b_norm)
            r_mag = float(np.max(np.abs(Q @ b_hat - b_hat @ Q)))
            checks["moment_commutation"] = r_mag <= _COMMUTATOR_TOL
            residuals["moment_commutation"] = r_mag
        else:
            checks["moment_commutation"] = False
            residuals["moment_commutation"] = float("inf")
    else:
        checks["momentum_commutation"] = False
        checks["moment_commutation"] = False
        residuals["momentum_commutation"] = float("inf")
        residuals["moment_commutation"] = float("inf")

    report = PreconditionReport(
        problem_name=problem.name, checks=checks, residuals=residuals
    )
    for name, ok in checks.items():
        logger.info(
            "precondition %s on %s: %s (residual %.3e)",
            name, problem.name, "holds" if ok else "violated", residuals[name],
        )
    return report


def theorem_coverage() -> dict:
    """Covered drift channels for every built-in problem at epsilon = 1."""
    return {
        name: conservation_preconditions(builtin_problem(name)).covered_channels
        for name in PROBLEM_NAMES
    }
