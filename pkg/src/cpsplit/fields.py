"""Electromagnetic field models and benchmark problems.

A particle with position ``x`` and velocity ``v`` moves under

    x'' = v x B(x) + E(x),    E = -grad U,    B = curl A.

This module bundles the scalar potential, magnetic field, and vector
potential of a model into a :class:`FieldModel`, and a full initial-value
setup (field model, initial state, scaling parameter ``epsilon``, planar
rotation generator ``S``) into a :class:`ProblemSpec`.  Three built-in
benchmark problems share the initial state ``x0 = (0, 1, 0.1)``,
``v0 = (0.09, 0.05, 0.20)``:

``problem1``
    quadratic potential ``U = |x|^2 / 100`` and constant field
    ``B = (0, 0, 1) / epsilon``,
``problem2``
    axis-singular potential ``U = 1 / (100 sqrt(x1^2 + x2^2))`` with the
    same constant field,
``problem3``
    the same potential with the position-dependent field
    ``B = (0, 0, sqrt(x1^2 + x2^2)) / epsilon``.

All field callables broadcast over leading axes: they accept a single
point of shape ``(3,)`` or a batch of shape ``(n, 3)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from .errors import (
    ConfigError,
    FieldDomainError,
    InvalidParameterError,
    UnknownProblemError,
)

PROBLEM_NAMES = ("problem1", "problem2", "problem3")

# squared cylindrical radius below which the inverse-radius potential
# is treated as outside its domain
AXIS_GUARD_RSQ = 1e-24

_X0 = (0.0, 1.0, 0.1)
_V0 = (0.09, 0.05, 0.20)

# generator of rotations about the x3 axis, used by the planar momentum
_S_PLANAR = ((0.0, 1.0, 0.0), (-1.0, 0.0, 0.0), (0.0, 0.0, 0.0))


def as_vec3(value, name="vector"):
    """Coerce to a float array of shape (3,), rejecting anything else."""
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,):
        raise InvalidParameterError(f"{name} must have shape (3,), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError(f"{name} must be finite, got {arr}")
    return arr


def cross_product_matrix(b: np.ndarray) -> np.ndarray:
    """Matrix ``M`` with ``M @ v == v x b`` for every ``v``.

    Note the convention: the product is ``v x b``, not ``b x v``, so the
    rotation ``exp(t M)`` advances a velocity along the Lorentz force of
    the field vector ``b``.
    """
    b1, b2, b3 = float(b[0]), float(b[1]), float(b[2])
    return np.array([[0.0, b3, -b2], [-b3, 0.0, b1], [b2, -b1, 0.0]])


def vector_potential_constant_B(x: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Vector potential ``A(x) = -x x B / 2`` of a constant field ``B``."""
    return -0.5 * np.cross(x, B)


@dataclass(frozen=True)
class FieldModel:
    """Callables describing one electromagnetic environment.

    Attributes
    ----------
    U, grad_U : callable
        Scalar potential and its gradient.
    hess_U : callable or None
        Second derivative of ``U``; only some models declare it.
    B, A : callable
        Magnetic field and a vector potential with ``curl A = B``.
    is_constant_B, is_quadratic_U : bool
        Structure flags used to pick quadrature defaults and to decide
        which conservation statements apply.
    """

    U: Callable[[np.ndarray], np.ndarray]
    grad_U: Callable[[np.ndarray], np.ndarray]
    B: Callable[[np.ndarray], np.ndarray]
    A: Callable[[np.ndarray], np.ndarray]
    hess_U: Optional[Callable[[np.ndarray], np.ndarray]] = None
    is_constant_B: bool = False
    is_quadratic_U: bool = False

    def E(self, x: np.ndarray) -> np.ndarray:
        """Electric field ``-grad U`` at ``x``."""
        return -self.grad_U(x)


@dataclass(frozen=True)
class ProblemSpec:
    """A complete initial-value setup for the particle equations."""

    name: str
    field: FieldModel
    x0: np.ndarray
    v0: np.ndarray
    epsilon: float
    S: np.ndarray
    _rebuild: Optional[Callable[[float], "ProblemSpec"]] = dataclass_field(
        default=None, repr=False, compare=False
    )

    def with_epsilon(self, epsilon: float) -> "ProblemSpec":
        """The same problem with the field scaling parameter replaced."""
        _check_epsilon(epsilon)
        if epsilon == self.epsilon:
            return self
        if self._rebuild is None:
            raise InvalidParameterError(
                f"problem {self.name!r} cannot be rebuilt at a new epsilon"
            )
        return self._rebuild(float(epsilon))


def _check_epsilon(epsilon):
    if not np.isfinite(epsilon) or epsilon <= 0.0:
        raise InvalidParameterError(f"epsilon must be positive, got {epsilon}")


def _quadratic_potential(Q, q):
    """U(x) = x^T Q x / 2 + q . x with exact linear gradient Q x + q."""
    Q = np.asarray(Q, dtype=float)
    q = np.asarray(q, dtype=float)

    def U(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum((x @ Q) * x, axis=-1) + x @ q

    def grad_U(x):
        x = np.asarray(x, dtype=float)
        return x @ Q + q

    def hess_U(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(Q, x.shape[:-1] + (3, 3)).copy()

    return U, grad_U, hess_U, True


def _cylinder_radius_sq(x):
    x = np.asarray(x, dtype=float)
    rsq = x[..., 0] ** 2 + x[..., 1] ** 2
    if np.any(rsq < AXIS_GUARD_RSQ):
        raise FieldDomainError(
            "inverse-radius potential evaluated on (or too close to) the x3 axis"
        )
    return x, rsq


def _inverse_radius_potential(coeff):
    """U(x) = coeff / sqrt(x1^2 + x2^2), singular on the x3 axis."""

    def U(x):
        x, rsq = _cylinder_radius_sq(x)
        return coeff / np.sqrt(rsq)

    def grad_U(x):
        x, rsq = _cylinder_radius_sq(x)
        f = -coeff * rsq ** -1.5
        g = np.zeros_like(x)
        g[..., 0] = x[..., 0] * f
        g[..., 1] = x[..., 1] * f
        return g

    def hess_U(x):
        x, rsq = _cylinder_radius_sq(x)
        rm3 = rsq ** -1.5
        rm5 = rsq ** -2.5
        H = np.zeros(x.shape[:-1] + (3, 3))
        for i in range(2):
            for j in range(2):
                H[..., i, j] = coeff * (3.0 * x[..., i] * x[..., j] * rm5)
            H[..., i, i] -= coeff * rm3
        return H

    return U, grad_U, hess_U, False


def _constant_field(B0):
    B0 = np.asarray(B0, dtype=float)

    def B(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(B0, x.shape).copy()

    def A(x):
        x = np.asarray(x, dtype=float)
        return vector_potential_constant_B(x, B0)

    return B, A, True


def _radial_strength_field(epsilon):
    """B = (0, 0, sqrt(x1^2 + x2^2)) / epsilon with an azimuthal potential.

    The vector potential is A = (-x2 r, x1 r, 0) / (3 epsilon) with
    r = sqrt(x1^2 + x2^2), whose curl is exactly the displayed B.
    """

    def B(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., 2] = np.hypot(x[..., 0], x[..., 1]) / epsilon
        return out

    def A(x):
        x = np.asarray(x, dtype=float)
        r = np.hypot(x[..., 0], x[..., 1])
        out = np.zeros_like(x)
        out[..., 0] = -x[..., 1] * r / (3.0 * epsilon)
        out[..., 1] = x[..., 0] * r / (3.0 * epsilon)
        return out

    return B, A, False


def _assemble(name, epsilon, potential, fld, x0=_X0, v0=_V0, S=_S_PLANAR, rebuild=None):
    U, grad_U, hess_U, quadratic = potential
    B, A, constant = fld
    model = FieldModel(
        U=U,
        grad_U=grad_U,
        B=B,
        A=A,
        hess_U=hess_U,
        is_constant_B=constant,
        is_quadratic_U=quadratic,
    )
    return ProblemSpec(
        name=name,
        field=model,
        x0=np.array(x0, dtype=float),
        v0=np.array(v0, dtype=float),
        epsilon=float(epsilon),
        S=np.array(S, dtype=float),
        _rebuild=rebuild,
    )


def _make_problem1(epsilon):
    return _assemble(
        "problem1",
        epsilon,
        _quadratic_potential(np.eye(3) / 50.0, np.zeros(3)),
        _constant_field(np.array([0.0, 0.0, 1.0]) / epsilon),
        rebuild=_make_problem1,
    )


def _make_problem2(epsilon):
    return _assemble(
        "problem2",
        epsilon,
        _inverse_radius_potential(0.01),
        _constant_field(np.array([0.0, 0.0, 1.0]) / epsilon),
        rebuild=_make_problem2,
    )


def _make_problem3(epsilon):
    pot = _inverse_radius_potential(0.01)
    # the moment and drift studies only need first derivatives here
    return _assemble(
        "problem3",
        epsilon,
        (pot[0], pot[1], None, False),
        _radial_strength_field(epsilon),
        rebuild=_make_problem3,
    )


_BUILTIN_FACTORIES = {
    "problem1": _make_problem1,
    "problem2": _make_problem2,
    "problem3": _make_problem3,
}


def builtin_problem(name: str, epsilon: float = 1.0) -> ProblemSpec:
    """One of the built-in benchmark problems at the given ``epsilon``."""
    _check_epsilon(epsilon)
    try:
        factory = _BUILTIN_FACTORIES[name]
    except KeyError:
        raise UnknownProblemError(
            f"unknown problem {name!r}; available: {', '.join(PROBLEM_NAMES)}"
        ) from None
    return factory(float(epsilon))


# ---------------------------------------------------------------------------
# problem configuration files


def load_problem(path) -> ProblemSpec:
    """Build a :class:`ProblemSpec` from a TOML problem file.

    Expected layout::

        name = "my-problem"
        epsilon = 1.0
        x0 = [0.0, 1.0, 0.1]
        v0 = [0.09, 0.05, 0.2]
        S = [0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0]  # optional

        [potential]
        kind = "quadratic"        # or "inverse_radius" or "builtin:<name>"
        Q = [...9 reals...]       # quadratic only, row-major, symmetric
        q = [0.0, 0.0, 0.0]       # quadratic only, optional
        coeff = 0.01              # inverse_radius only, optional

        [field]
        kind = "constant"         # or "builtin:<name>"
        B = [0.0, 0.0, 1.0]       # constant only; divided by epsilon

    ``S`` defaults to the generator of rotations about the x3 axis.
    """
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read problem file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse problem file {path}: {exc}") from exc
    return _problem_from_config(data, where=str(path))


def _cfg_vector(table, key, n, where, required=True, default=None):
    if key not in table:
        if not required:
            return None if default is None else np.asarray(default, dtype=float)
        raise ConfigError(f"{where}: missing key {key!r}")
    value = np.asarray(table[key], dtype=float)
    if value.shape != (n,):
        raise ConfigError(f"{where}: {key!r} must be a flat list of {n} reals")
    if not np.all(np.isfinite(value)):
        raise ConfigError(f"{where}: {key!r} must be finite")
    return value


def _cfg_builtin_name(kind, where):
    name = kind.split(":", 1)[1]
    if name not in _BUILTIN_FACTORIES:
        raise ConfigError(f"{where}: unknown built-in reference {kind!r}")
    return name


def _problem_from_config(data, where="problem config", epsilon=None):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: top level must be a table")
    name = data.get("name")
    if not isinstance(name, str) or not name:
        raise ConfigError(f"{where}: missing or empty 'name'")
    if epsilon is None:
        epsilon = data.get("epsilon")
        if not isinstance(epsilon, (int, float)) or not np.isfinite(epsilon) or epsilon <= 0:
            raise ConfigError(f"{where}: 'epsilon' must be a positive real")
    epsilon = float(epsilon)

    x0 = _cfg_vector(data, "x0", 3, where)
    v0 = _cfg_vector(data, "v0", 3, where)
    S_flat = _cfg_vector(data, "S", 9, where, required=False)
    if S_flat is None:
        S = np.array(_S_PLANAR, dtype=float)
    else:
        S = S_flat.reshape(3, 3)
        if not np.array_equal(S, -S.T):
            raise ConfigError(f"{where}: 'S' must be skew-symmetric")

    pot_table = data.get("potential")
    if not isinstance(pot_table, dict):
        raise ConfigError(f"{where}: missing [potential] table")
    kind = pot_table.get("kind")
    if kind == "quadratic":
        Q_flat = _cfg_vector(pot_table, "Q", 9, where)
        Q = Q_flat.reshape(3, 3)
        if not np.array_equal(Q, Q.T):
            raise ConfigError(f"{where}: quadratic 'Q' must be symmetric")
        q = _cfg_vector(pot_table, "q", 3, where, required=False, default=np.zeros(3))
        potential = _quadratic_potential(Q, q)
    elif kind == "inverse_radius":
        coeff = pot_table.get("coeff", 0.01)
        if not isinstance(coeff, (int, float)) or not np.isfinite(coeff):
            raise ConfigError(f"{where}: 'coeff' must be a real number")
        potential = _inverse_radius_potential(float(coeff))
    elif isinstance(kind, str) and kind.startswith("builtin:"):
        ref = builtin_problem(_cfg_builtin_name(kind, where), epsilon)
        potential = (
            ref.field.U,
            ref.field.grad_U,
            ref.field.hess_U,
            ref.field.is_quadratic_U,
        )
    else:
        raise ConfigError(f"{where}: unknown potential kind {kind!r}")

    fld_table = data.get("field")
    if not isinstance(fld_table, dict):
        raise ConfigError(f"{where}: missing [field] table")
    kind = fld_table.get("kind")
    if kind == "constant":
        B_raw = _cfg_vector(fld_table, "B", 3, where)
        fld = _constant_field(B_raw / epsilon)
    elif isinstance(kind, str) and kind.startswith("builtin:"):
        ref = builtin_problem(_cfg_builtin_name(kind, where), epsilon)
        fld = (ref.field.B, ref.field.A, ref.field.is_constant_B)
    else:
        raise ConfigError(f"{where}: unknown field kind {kind!r}")

    def rebuild(new_epsilon, _data=data, _where=where):
        return _problem_from_config(_data, where=_where, epsilon=new_epsilon)

    return _assemble(name, epsilon, potential, fld, x0=x0, v0=v0, S=S, rebuild=rebuild)
