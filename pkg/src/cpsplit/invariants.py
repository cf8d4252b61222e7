"""Conserved and near-conserved quantities of the particle motion.

Four scalar channels are tracked along trajectories:

``energy``
    ``H = |v|^2 / 2 + U(x)``, conserved exactly by the flow,
``modified_energy``
    ``H - (h^2 / 8) |grad U(x)|^2``, the step-size-corrected energy that
    the explicit splitting conserves exactly for quadratic potentials,
``momentum``
    ``(v + A(x)) . (S x)`` for a skew generator ``S``, conserved by the
    flow when potential and field are invariant under the rotations
    generated by ``S``,
``magnetic_moment``
    ``|v x B(x)|^2 / (2 |B(x)|^3)``, the adiabatic invariant of gyration.

Drift series report ``|value - value_0| / |value_0|`` per sample; a
channel whose initial magnitude is below 1e-14 falls back to absolute
drift and is flagged in ``DriftSeries.absolute_channels``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFieldError
from .fields import FieldModel, ProblemSpec
from .integrators import ParticleState, Trajectory

CHANNELS = ("energy", "modified_energy", "momentum", "magnetic_moment")

# short column codes used in CSV headers and CLI channel selection
CHANNEL_CODES = {
    "H": "energy",
    "Hh": "modified_energy",
    "M": "momentum",
    "I": "magnetic_moment",
}

# below this |B| the gyration moment is numerically meaningless
_DEGENERATE_B = 1e-12

# initial magnitudes below this switch the drift to absolute
_RELATIVE_FLOOR = 1e-14


def energy(state: ParticleState, field: FieldModel) -> float:
    """Total energy ``|v|^2 / 2 + U(x)``."""
    return 0.5 * float(np.dot(state.v, state.v)) + float(field.U(state.x))


def modified_energy(state: ParticleState, field: FieldModel, h: float) -> float:
    """Energy minus the ``(h^2 / 8) |grad U|^2`` step-size correction."""
    g = field.grad_U(state.x)
    return energy(state, field) - (h * h / 8.0) * float(np.dot(g, g))


def momentum(state: ParticleState, field: FieldModel, S: np.ndarray) -> float:
    """Planar canonical momentum ``(v + A(x)) . (S x)``."""
    return float(np.dot(state.v + field.A(state.x), S @ state.x))


def magnetic_moment(state: ParticleState, field: FieldModel) -> float:
    """Adiabatic gyration moment ``|v x B|^2 / (2 |B|^3)``."""
    B = field.B(state.x)
    norm = float(np.linalg.norm(B))
    if norm < _DEGENERATE_B:
        raise DegenerateFieldError(
            f"magnetic moment undefined where |B| = {norm:.3e}"
        )
    c = np.cross(state.v, B)
    return float(np.dot(c, c)) / (2.0 * norm**3)


def invariant_series(traj: Trajectory, problem: ProblemSpec) -> dict:
    """Raw values of all four channels at every sampled state."""
    field = problem.field
    xs = traj.positions
    vs = traj.velocities
    h = traj.h

    kinetic = 0.5 * np.sum(vs * vs, axis=-1)
    H = kinetic + field.U(xs)

    grads = field.grad_U(xs)
    Hh = H - (h * h / 8.0) * np.sum(grads * grads, axis=-1)

    Sx = xs @ problem.S.T
    M = np.sum((vs + field.A(xs)) * Sx, axis=-1)

    B = field.B(xs)
    Bnorm = np.linalg.norm(B, axis=-1)
    if np.any(Bnorm < _DEGENERATE_B):
        raise DegenerateFieldError(
            "magnetic moment undefined along trajectory: |B| vanishes at a sample"
        )
    c = np.cross(vs, B)
    mu = np.sum(c * c, axis=-1) / (2.0 * Bnorm**3)

    return {"energy": H, "modified_energy": Hh, "momentum": M, "magnetic_moment": mu}


@dataclass(frozen=True)
class DriftSeries:
    """Per-sample drift of each channel relative to its initial value."""

    times: np.ndarray
    energy: np.ndarray
    modified_energy: np.ndarray
    momentum: np.ndarray
    magnetic_moment: np.ndarray
    absolute_channels: tuple = ()

    def max_drift(self) -> dict:
        return {channel: float(np.max(getattr(self, channel))) for channel in CHANNELS}


def drift_series(traj: Trajectory, problem: ProblemSpec) -> DriftSeries:
    """Drift of all channels along a sampled trajectory.

    Uses the trajectory's own step size for the modified-energy
    correction.  Channels starting below 1e-14 in magnitude are reported
    as absolute drift and flagged.
    """
    raw = invariant_series(traj, problem)
    drifts = {}
    flagged = []
    for channel in CHANNELS:
        series = raw[channel]
        initial = series[0]
        dev = np.abs(series - initial)
        if abs(initial) < _RELATIVE_FLOOR:
            flagged.append(channel)
            drifts[channel] = dev
        else:
            drifts[channel] = dev / abs(initial)
    return DriftSeries(
        times=traj.times.copy(),
        absolute_channels=tuple(flagged),
        **drifts,
    )
