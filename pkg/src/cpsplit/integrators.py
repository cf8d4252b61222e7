"""Time steppers for the charged-particle equations.

Three one-step maps share a common interface:

``exs-o2``
    explicit symmetric splitting: exact half-rotations around the
    magnetic axis sandwich an explicit electric update,
``ims-o2``
    implicit symmetric splitting: the electric update averages the field
    along the chord from ``x^n`` to ``x^{n+1}`` (a Gauss-Legendre
    discretization of the averaged-vector-field integral), closed by a
    fixed-point iteration,
``boris``
    the synchronized Boris scheme, equivalent to the two-step relation
    ``(x^{n+1} - 2 x^n + x^{n-1}) / h^2 =
    ((x^{n+1} - x^{n-1}) / 2h) x B(x^n) + E(x^n)``.

Both splitting maps evaluate the double rotation that appears in their
velocity updates as the composition
``exp(h/2 M(x^{n+1})) exp(h/2 M(x^n))`` rather than the exponential of
the summed generators; the two agree for constant fields and only the
composed form keeps the map exactly symmetric for position-dependent
ones.

All steppers accept negative ``h``, which makes time-reversal checks a
matter of stepping forward and then backward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    FieldDomainError,
    FixedPointDivergedError,
    InvalidParameterError,
    NumericalBlowupError,
)
from .fields import FieldModel, ProblemSpec

METHODS = ("ims-o2", "exs-o2", "boris")

# below this rotation angle Rodrigues coefficients switch to their
# series expansions to avoid cancellation
_SMALL_ANGLE = 1e-8

# fixed-point increments that stall above this (scaled) level indicate
# divergence rather than a roundoff plateau
_STALL_CEILING = 1e-10

_MAX_TOTAL_STEPS = 2**31


@dataclass(frozen=True)
class ParticleState:
    """Position, velocity, and time of one particle."""

    x: np.ndarray
    v: np.ndarray
    t: float = 0.0


@dataclass(frozen=True)
class StepReport:
    """Outcome of a single step.

    ``fp_iterations`` counts fixed-point sweeps (0 for explicit maps);
    ``converged`` is False only when an implicit solve was cut short.
    """

    state: ParticleState
    fp_iterations: int = 0
    converged: bool = True


@dataclass(frozen=True)
class IntegratorConfig:
    """Method selection plus the numerical knobs of one run.

    ``quad_nodes=None`` defers to a per-field default: 2 nodes for a
    quadratic potential (whose averaged field is linear along the chord)
    and 10 otherwise.
    """

    method: str
    h: float
    quad_nodes: Optional[int] = None
    fp_tol: float = 1e-16
    fp_max_iter: int = 50

    def __post_init__(self):
        canon = str(self.method).lower()
        if canon not in METHODS:
            raise InvalidParameterError(
                f"unknown method {self.method!r}; choose from {', '.join(METHODS)}"
            )
        object.__setattr__(self, "method", canon)
        if not np.isfinite(self.h):
            raise InvalidParameterError(f"step size must be finite, got {self.h}")
        if self.quad_nodes is not None and (
            int(self.quad_nodes) != self.quad_nodes or self.quad_nodes < 1
        ):
            raise InvalidParameterError(
                f"quad_nodes must be a positive integer, got {self.quad_nodes}"
            )
        if not (self.fp_tol > 0.0):
            raise InvalidParameterError(f"fp_tol must be positive, got {self.fp_tol}")
        if self.fp_max_iter < 1:
            raise InvalidParameterError(
                f"fp_max_iter must be at least 1, got {self.fp_max_iter}"
            )


def resolve_quad_nodes(cfg: IntegratorConfig, field: FieldModel) -> int:
    if cfg.quad_nodes is not None:
        return int(cfg.quad_nodes)
    return 2 if field.is_quadratic_U else 10


def rotate_velocity(v: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    """Rotate ``v`` by the matrix exponential ``exp(t M(b))``.

    ``M(b)`` is the cross-product matrix with ``M v = v x b``, so this is
    the exact flow of ``v' = v x b`` over time ``t``, evaluated in closed
    form (Rodrigues) with a series branch for tiny angles.
    """
    w1 = t * float(b[0])
    w2 = t * float(b[1])
    w3 = t * float(b[2])
    v1 = float(v[0])
    v2 = float(v[1])
    v3 = float(v[2])
    sq = w1 * w1 + w2 * w2 + w3 * w3
    theta = math.sqrt(sq)
    if theta < _SMALL_ANGLE:
        c1 = 1.0 - sq / 6.0
        c2 = 0.5 - sq / 24.0
    else:
        c1 = math.sin(theta) / theta
        c2 = (1.0 - math.cos(theta)) / sq
    a1 = v2 * w3 - v3 * w2
    a2 = v3 * w1 - v1 * w3
    a3 = v1 * w2 - v2 * w1
    d1 = a2 * w3 - a3 * w2
    d2 = a3 * w1 - a1 * w3
    d3 = a1 * w2 - a2 * w1
    return np.array([v1 + c1 * a1 + c2 * d1, v2 + c1 * a2 + c2 * d2, v3 + c1 * a3 + c2 * d3])


def rotation_flow(x: np.ndarray, v: np.ndarray, t: float, field: FieldModel) -> np.ndarray:
    """Exact magnetic-rotation subflow: ``v`` advanced for time ``t`` in
    the frozen field ``B(x)``."""
    return rotate_velocity(v, field.B(x), t)


_UNIT_RULES: dict = {}


def _unit_gauss_legendre(nodes):
    if int(nodes) != nodes or nodes < 1:
        raise InvalidParameterError(f"quadrature nodes must be a positive integer, got {nodes}")
    rule = _UNIT_RULES.get(nodes)
    if rule is None:
        xi, wt = np.polynomial.legendre.leggauss(int(nodes))
        rule = (0.5 * (xi + 1.0), 0.5 * wt)
        _UNIT_RULES[nodes] = rule
    return rule


def avf_field_average(x_a, x_b, field: FieldModel, nodes: int) -> np.ndarray:
    """Gauss-Legendre average of the electric field along a chord.

    Approximates ``integral_0^1 E(rho x_a + (1 - rho) x_b) d rho``; with
    ``s`` nodes the rule is exact for integrands of polynomial degree up
    to ``2 s - 1``.
    """
    rho, w = _unit_gauss_legendre(nodes)
    x_a = np.asarray(x_a, dtype=float)
    x_b = np.asarray(x_b, dtype=float)
    points = x_b + np.outer(rho, x_a - x_b)
    return w @ field.E(points)


# ---------------------------------------------------------------------------
# step kernels on raw arrays


def _exs_kernel(x, v, h, field):
    Bx = field.B(x)
    Ex = field.E(x)
    rv = rotate_velocity(v, Bx, h / 2.0)
    x_new = x + h * rv + (h * h / 2.0) * Ex
    Ex_new = field.E(x_new)
    Bx_new = field.B(x_new)
    v_new = rotate_velocity(rv + (h / 2.0) * (Ex + Ex_new), Bx_new, h / 2.0)
    return x_new, v_new


def _ims_kernel(x, v, h, field, nodes, fp_tol, fp_max_iter):
    Bx = field.B(x)
    rv = rotate_velocity(v, Bx, h / 2.0)
    base = x + h * rv
    half_h_sq = h * h / 2.0
    guess = base + half_h_sq * field.E(x)
    integral = None
    last_inc = math.inf
    stall = 0
    iterations = 0
    for iterations in range(1, fp_max_iter + 1):
        integral = avf_field_average(x, guess, field, nodes)
        nxt = base + half_h_sq * integral
        inc = float(np.max(np.abs(nxt - guess)))
        guess = nxt
        if not math.isfinite(inc):
            raise FixedPointDivergedError(
                "implicit position update produced non-finite iterates",
                last_iterate=guess,
                increment=inc,
                iterations=iterations,
            )
        if inc <= fp_tol:
            break
        if inc >= last_inc:
            stall += 1
            if stall >= 3:
                ceiling = _STALL_CEILING * max(1.0, float(np.max(np.abs(guess))))
                if inc <= ceiling:
                    # roundoff plateau above fp_tol still counts as
                    # converged; the iterate cannot improve further
                    break
                raise FixedPointDivergedError(
                    f"implicit position update stalled at increment {inc:.3e}",
                    last_iterate=guess,
                    increment=inc,
                    iterations=iterations,
                )
        else:
            stall = 0
        last_inc = inc
    else:
        raise FixedPointDivergedError(
            f"implicit position update did not reach tolerance {fp_tol:.1e} "
            f"within {fp_max_iter} iterations",
            last_iterate=guess,
            increment=last_inc,
            iterations=fp_max_iter,
        )
    x_new = guess
    Bx_new = field.B(x_new)
    # the velocity update reuses the chord average that produced x_new,
    # which keeps the kinetic and potential changes exactly matched
    v_new = rotate_velocity(rv + h * integral, Bx_new, h / 2.0)
    return x_new, v_new, iterations


def _boris_kernel(x, v, h, field):
    Bx = field.B(x)
    Ex = field.E(x)
    v_half = v + (h / 2.0) * (np.cross(v, Bx) + Ex)
    x_new = x + h * v_half
    Bx_new = field.B(x_new)
    Ex_new = field.E(x_new)
    w = v_half + (h / 2.0) * Ex_new
    tv = (h / 2.0) * Bx_new
    # closed-form solve of v - v x tv = w (the implicit half-rotation)
    v_new = (w + np.cross(w, tv) + np.dot(w, tv) * tv) / (1.0 + np.dot(tv, tv))
    return x_new, v_new


def step_exs(state: ParticleState, cfg: IntegratorConfig, field: FieldModel) -> StepReport:
    """One explicit symmetric splitting step."""
    x_new, v_new = _exs_kernel(state.x, state.v, cfg.h, field)
    return StepReport(state=ParticleState(x=x_new, v=v_new, t=state.t + cfg.h))


def step_ims(state: ParticleState, cfg: IntegratorConfig, field: FieldModel) -> StepReport:
    """One implicit symmetric splitting step (fixed-point solve inside)."""
    nodes = resolve_quad_nodes(cfg, field)
    x_new, v_new, iterations = _ims_kernel(
        state.x, state.v, cfg.h, field, nodes, cfg.fp_tol, cfg.fp_max_iter
    )
    return StepReport(
        state=ParticleState(x=x_new, v=v_new, t=state.t + cfg.h),
        fp_iterations=iterations,
        converged=True,
    )


def step_boris(state: ParticleState, cfg: IntegratorConfig, field: FieldModel) -> StepReport:
    """One synchronized Boris step."""
    x_new, v_new = _boris_kernel(state.x, state.v, cfg.h, field)
    return StepReport(state=ParticleState(x=x_new, v=v_new, t=state.t + cfg.h))


STEPPERS = {"ims-o2": step_ims, "exs-o2": step_exs, "boris": step_boris}


@dataclass(frozen=True)
class Trajectory:
    """States sampled every ``sample_stride`` steps of one run.

    Row ``k`` holds the state after step ``k * sample_stride`` at time
    ``t = (k * sample_stride) * h``; row 0 is the initial state.
    """

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    method: str
    h: float
    sample_stride: int
    step_count: int
    fp_total_iterations: int = 0
    fp_max_iterations: int = 0

    @property
    def realized_t_end(self) -> float:
        return self.step_count * self.h

    def state(self, i: int) -> ParticleState:
        return ParticleState(
            x=self.positions[i].copy(), v=self.velocities[i].copy(), t=float(self.times[i])
        )


def integrate(
    problem: ProblemSpec,
    cfg: IntegratorConfig,
    t_end: float,
    sample_stride: int = 1,
) -> Trajectory:
    """March the chosen method from the problem's initial state.

    The horizon is realized as ``n = round(t_end / h)`` steps of exactly
    ``h`` each.  States are recorded every ``sample_stride`` steps (plus
    the initial state), and sampled states are checked for finiteness;
    a non-finite sample aborts with :class:`NumericalBlowupError`.  A
    failed implicit solve or a field-domain violation propagates with the
    partial trajectory attached as ``exc.partial``.
    """
    if not (cfg.h > 0.0):
        raise InvalidParameterError(f"integrate needs a positive step size, got {cfg.h}")
    if not np.isfinite(t_end) or t_end < 0.0:
        raise InvalidParameterError(f"t_end must be nonnegative, got {t_end}")
    if int(sample_stride) != sample_stride or sample_stride < 1:
        raise InvalidParameterError(
            f"sample_stride must be a positive integer, got {sample_stride}"
        )
    sample_stride = int(sample_stride)
    h = cfg.h
    n = int(round(t_end / h))
    if n > _MAX_TOTAL_STEPS:
        raise InvalidParameterError(
            f"{n} steps exceed the supported budget of {_MAX_TOTAL_STEPS}"
        )

    x = np.array(problem.x0, dtype=float)
    v = np.array(problem.v0, dtype=float)
    times = [0.0]
    xs = [x.copy()]
    vs = [v.copy()]
    fp_total = 0
    fp_max = 0

    def build(step_count):
        return Trajectory(
            times=np.array(times),
            positions=np.array(xs),
            velocities=np.array(vs),
            method=cfg.method,
            h=h,
            sample_stride=sample_stride,
            step_count=step_count,
            fp_total_iterations=fp_total,
            fp_max_iterations=fp_max,
        )

    implicit = cfg.method == "ims-o2"
    if implicit:
        nodes = resolve_quad_nodes(cfg, problem.field)
        fp_tol = cfg.fp_tol
        fp_max_iter = cfg.fp_max_iter
    field = problem.field

    for k in range(1, n + 1):
        try:
            if implicit:
                x, v, iterations = _ims_kernel(x, v, h, field, nodes, fp_tol, fp_max_iter)
                fp_total += iterations
                if iterations > fp_max:
                    fp_max = iterations
            elif cfg.method == "exs-o2":
                x, v = _exs_kernel(x, v, h, field)
            else:
                x, v = _boris_kernel(x, v, h, field)
        except (FixedPointDivergedError, FieldDomainError) as exc:
            exc.partial = build(k - 1)
            raise
        if k % sample_stride == 0:
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
                raise NumericalBlowupError(
                    f"non-finite state detected at step {k} (t = {k * h:g})",
                    partial=build(k - 1),
                )
            times.append(k * h)
            xs.append(x.copy())
            vs.append(v.copy())

    return build(n)
