"""High-accuracy reference trajectories from an embedded Runge-Kutta pair.

The charged-particle equations are integrated as the first-order system
y = (x, v), y' = (v, v x B(x) + E(x)) with a fifth-order pair, an embedded
fourth-order error estimate, first-same-as-last stage reuse, and a PI
step-size controller.  This is the yardstick the fixed-step methods are
measured against; it is deliberately independent of the stepper code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidParameterError,
    MaxStepsExceededError,
    StiffnessSuspectedError,
)
from .fields import ProblemSpec
from .integrators import IntegratorConfig, ParticleState, integrate

__all__ = [
    "ReferenceConfig",
    "global_error",
    "reference_solve",
    "reference_states",
]

_TOL_FLOOR = 1e-14
_SAFETY = 0.9
_SHRINK_LIMIT = 0.2
_GROWTH_LIMIT = 5.0
# classic PI exponents for a fifth-order pair
_ALPHA = 0.17
_BETA = 0.04

_C = (0.2, 0.3, 0.8, 8.0 / 9.0)
_A21 = 0.2
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = (
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
)
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = (
    35.0 / 384.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
)
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)


@dataclass(frozen=True)
class ReferenceConfig:
    """Accuracy and budget knobs for the adaptive solver."""

    rtol: float = 1e-12
    atol: float = 1e-12
    max_steps: int = 1_000_000
    h_initial: float | None = None

    def __post_init__(self) -> None:
        for label, tol in (("rtol", self.rtol), ("atol", self.atol)):
            if not (np.isfinite(tol) and tol >= _TOL_FLOOR):
                raise InvalidParameterError(
                    f"{label} must be a finite value >= {_TOL_FLOOR:g}, got {tol!r}"
                )
        if not (isinstance(self.max_steps, int) and self.max_steps > 0):
            raise InvalidParameterError(
                f"max_steps must be a positive integer, got {self.max_steps!r}"
            )
        if self.h_initial is not None and not (
            np.isfinite(self.h_initial) and self.h_initial > 0
        ):
            raise InvalidParameterError(
                f"h_initial must be positive and finite, got {self.h_initial!r}"
            )


def _rhs(field, y):
    x = y[:3]
    v = y[3:]
    out = np.empty(6)
    out[:3] = v
    out[3:] = np.cross(v, field.B(x)) + field.E(x)
    return out


def _error_norm(err, y_old, y_new, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y_old), np.abs(y_new))
    return math.sqrt(np.mean((err / scale) ** 2))


def _initial_step(field, y0, f0, rtol, atol, remaining):
    scale = atol + rtol * np.abs(y0)
    d0 = math.sqrt(np.mean((y0 / scale) ** 2))
    d1 = math.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    f1 = _rhs(field, y0 + h0 * f0)
    d2 = math.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, remaining)


class _AdaptiveSolver:
    """One-directional stepper that can be driven through a list of targets."""

    def __init__(self, problem: ProblemSpec, cfg: ReferenceConfig) -> None:
        self.field = problem.field
        self.cfg = cfg
        self.t = 0.0
        self.y = np.concatenate([problem.x0, problem.v0])
        self.f = _rhs(self.field, self.y)
        self.h_prop: float | None = cfg.h_initial
        self.err_old = 1e-4
        self.steps_taken = 0

    def advance_to(self, target: float) -> None:
        field, cfg = self.field, self.cfg
        while self.t < target:
            remaining = target - self.t
            if self.h_prop is None:
                self.h_prop = _initial_step(
                    field, self.y, self.f, cfg.rtol, cfg.atol, remaining
                )
            # the floor applies to the controller's own proposal; a small
            # final step clamped to land on the target is legitimate
            if self.h_prop < _TOL_FLOOR * max(1.0, abs(self.t)):
                raise StiffnessSuspectedError(
                    f"step size collapsed to {self.h_prop:.3e} at t={self.t:.6g}"
                )
            h = min(self.h_prop, remaining)

            if self.steps_taken >= cfg.max_steps:
                raise MaxStepsExceededError(
                    f"exceeded {cfg.max_steps} steps at t={self.t:.6g}"
                )
            self.steps_taken += 1

            y, k1 = self.y, self.f
            k2 = _rhs(field, y + h * (_A21 * k1))
            k3 = _rhs(field, y + h * (_A31 * k1 + _A32 * k2))
            k4 = _rhs(field, y + h * (_A41 * k1 + _A42 * k2 + _A43 * k3))
            k5 = _rhs(field, y + h * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4))
            k6 = _rhs(
                field,
                y + h * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5),
            )
            y_new = y + h * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
            k7 = _rhs(field, y_new)
            err = h * (
                _E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7
            )
            if not np.all(np.isfinite(y_new)):
                raise StiffnessSuspectedError(
                    f"non-finite trial state at t={self.t:.6g}, h={h:.3e}"
                )
            err_norm = _error_norm(err, y, y_new, cfg.rtol, cfg.atol)

            if err_norm <= 1.0:
                self.t = target if h == remaining else self.t + h
                self.y = y_new
                self.f = k7
                if err_norm == 0.0:
                    factor = _GROWTH_LIMIT
                else:
                    factor = _SAFETY * err_norm**-_ALPHA * self.err_old**_BETA
                    factor = min(_GROWTH_LIMIT, max(_SHRINK_LIMIT, factor))
                self.h_prop = h * factor
                self.err_old = max(err_norm, 1e-10)
            else:
                factor = max(_SHRINK_LIMIT, _SAFETY * err_norm**-0.2)
                self.h_prop = h * min(1.0, factor)

    def state(self) -> ParticleState:
        return ParticleState(x=self.y[:3].copy(), v=self.y[3:].copy(), t=self.t)


def reference_solve(
    problem: ProblemSpec, t_end: float, cfg: ReferenceConfig | None = None
) -> ParticleState:
    """Integrate the problem's initial state to ``t_end`` adaptively."""
    if not (np.isfinite(t_end) and t_end >= 0):
        raise InvalidParameterError(f"t_end must be finite and >= 0, got {t_end!r}")
    cfg = cfg or ReferenceConfig()
    solver = _AdaptiveSolver(problem, cfg)
    solver.advance_to(float(t_end))
    return solver.state()


def reference_states(
    problem: ProblemSpec,
    times: np.ndarray,
    cfg: ReferenceConfig | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample one adaptive trajectory at the given ascending times.

    Returns ``(positions, velocities)`` with shape ``(len(times), 3)``.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise InvalidParameterError("times must be a non-empty 1-D array")
    if not np.all(np.isfinite(times)) or times[0] < 0 or np.any(np.diff(times) < 0):
        raise InvalidParameterError("times must be finite, non-negative, ascending")
    cfg = cfg or ReferenceConfig()
    solver = _AdaptiveSolver(problem, cfg)
    xs = np.empty((times.size, 3))
    vs = np.empty((times.size, 3))
    for i, t in enumerate(times):
        solver.advance_to(float(t))
        xs[i] = solver.y[:3]
        vs[i] = solver.y[3:]
    return xs, vs


def global_error(
    problem: ProblemSpec,
    method: str,
    h: float,
    t_end: float,
    cfg: ReferenceConfig | None = None,
    quad_nodes: int | None = None,
) -> float:
    """Endpoint error of a fixed-step method against the adaptive solution.

    The error is the relative position gap plus the relative velocity gap,
    each normalized by the reference norm at ``t_end``.
    """
    stride = max(1, round(t_end / h))
    traj = integrate(
        problem,
        IntegratorConfig(method=method, h=h, quad_nodes=quad_nodes),
        t_end=t_end,
        sample_stride=stride,
    )
    end = traj.state(-1)
    ref = reference_solve(problem, t_end, cfg)
    x_scale = np.linalg.norm(ref.x) or 1.0
    v_scale = np.linalg.norm(ref.v) or 1.0
    return float(
        np.linalg.norm(end.x - ref.x) / x_scale
        + np.linalg.norm(end.v - ref.v) / v_scale
    )
