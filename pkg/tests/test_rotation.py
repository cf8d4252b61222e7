"""Rotation subflow and field-average quadrature against independent oracles."""

import numpy as np
import numpy.testing as npt
import pytest

from cpsplit import fields, integrators
from cpsplit.errors import InvalidParameterError

from conftest import sample_positions


def series_rotation(b, v, t, terms=30):
    """Truncated matrix-exponential series for exp(t * M(b)) @ v.

    M is built here from the raw component layout so the oracle shares
    nothing with the implementation under test.
    """
    M = t * np.array(
        [
            [0.0, b[2], -b[1]],
            [-b[2], 0.0, b[0]],
            [b[1], -b[0], 0.0],
        ]
    )
    acc = np.array(v, dtype=float)
    term = np.array(v, dtype=float)
    for k in range(1, terms + 1):
        term = M @ term / k
        acc = acc + term
    return acc


class TestRotationFlow:
    def test_quarter_turn_frozen_value(self):
        p = fields.builtin_problem("problem1")
        v = integrators.rotation_flow(
            np.zeros(3), np.array([1.0, 0.0, 0.0]), np.pi / 2.0, p.field
        )
        npt.assert_allclose(v, [0.0, -1.0, 0.0], rtol=0, atol=1e-15)

    def test_matches_series_oracle(self, rng):
        # angles stay below ~3.5 so the 30-term oracle is converged well
        # past the comparison tolerance
        for _ in range(300):
            b = rng.uniform(-2.0, 2.0, 3)
            v = rng.uniform(-2.0, 2.0, 3)
            t = rng.uniform(-1.0, 1.0)
            got = integrators.rotate_velocity(v, b, t)
            npt.assert_allclose(got, series_rotation(b, v, t), rtol=1e-12, atol=1e-12)

    def test_preserves_speed(self, rng):
        for _ in range(100):
            b = rng.uniform(-3, 3, 3)
            v = rng.uniform(-2, 2, 3)
            t = rng.uniform(-2, 2)
            got = integrators.rotate_velocity(v, b, t)
            assert np.linalg.norm(got) == pytest.approx(
                np.linalg.norm(v), rel=1e-14, abs=1e-14
            )

    def test_small_angle_branch(self, rng):
        # angles straddling the series switchover must agree with the
        # oracle without any cancellation cliff
        v = np.array([0.3, -1.2, 0.7])
        b = np.array([0.5, 0.25, -1.0])
        for t in [0.0, 1e-12, 3e-9, 9.9e-9, 1.01e-8, 1e-7, 1e-4]:
            got = integrators.rotate_velocity(v, b, t)
            npt.assert_allclose(
                got, series_rotation(b, v, t), rtol=1e-13, atol=1e-16
            )
        npt.assert_array_equal(integrators.rotate_velocity(v, b, 0.0), v)

    def test_inverse_is_negative_time(self, rng):
        b = rng.uniform(-2, 2, 3)
        v = rng.uniform(-2, 2, 3)
        back = integrators.rotate_velocity(integrators.rotate_velocity(v, b, 0.7), b, -0.7)
        npt.assert_allclose(back, v, rtol=0, atol=1e-15)

    def test_uses_field_at_given_position(self, rng):
        # problem3's field strength grows with cylinder radius, so the
        # rotation angle must too
        p = fields.builtin_problem("problem3")
        v = np.array([1.0, 0.0, 0.0])
        near = integrators.rotation_flow(np.array([0.5, 0.0, 0.0]), v, 1.0, p.field)
        far = integrators.rotation_flow(np.array([2.0, 0.0, 0.0]), v, 1.0, p.field)
        npt.assert_allclose(near, series_rotation([0, 0, 0.5], v, 1.0), rtol=1e-12)
        npt.assert_allclose(far, series_rotation([0, 0, 2.0], v, 1.0), rtol=1e-12)


def linear_form_potential(c, w, degree):
    """U with E = -grad U = -c * (w . x)^degree * w, for quadrature tests."""
    w = np.asarray(w, dtype=float)

    def U(x):
        return c * (np.asarray(x) @ w) ** (degree + 1) / (degree + 1)

    def grad_U(x):
        x = np.asarray(x)
        s = (x @ w) ** degree
        return np.multiply.outer(c * s, w)

    return fields.FieldModel(
        U=U,
        grad_U=grad_U,
        B=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        A=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
    )


def segment_average_exact(c, w, degree, x_a, x_b):
    """Analytic value of the averaged field -c (w.x)^d w over the segment."""
    g1 = float(np.dot(w, x_a))
    g0 = float(np.dot(w, x_b))
    d = degree
    # integral of ((1-s) g0 + s g1)^d over s in [0, 1]
    if g0 == g1:
        scalar = g0**d
    else:
        scalar = (g1 ** (d + 1) - g0 ** (d + 1)) / ((d + 1) * (g1 - g0))
    return -c * scalar * np.asarray(w, dtype=float)


class TestFieldAverage:
    @pytest.mark.parametrize("nodes", [1, 2, 3, 4, 6])
    def test_exact_for_matching_polynomial_degree(self, nodes, rng):
        x_a = np.array([0.3, -0.4, 1.1])
        x_b = np.array([-1.0, 0.8, 0.2])
        w = np.array([1.0, 0.7, 0.3])
        degree = 2 * nodes - 1
        model = linear_form_potential(0.8, w, degree)
        got = integrators.avf_field_average(x_a, x_b, model, nodes)
        want = segment_average_exact(0.8, w, degree, x_a, x_b)
        npt.assert_allclose(got, want, rtol=1e-14, atol=1e-16)

    @pytest.mark.parametrize("nodes", [1, 2, 3])
    def test_not_exact_one_degree_higher(self, nodes):
        x_a = np.array([1.5, 0.0, 0.0])
        x_b = np.array([-1.5, 0.5, 0.0])
        w = np.array([1.0, 0.7, 0.3])
        degree = 2 * nodes
        model = linear_form_potential(1.0, w, degree)
        got = integrators.avf_field_average(x_a, x_b, model, nodes)
        want = segment_average_exact(1.0, w, degree, x_a, x_b)
        assert np.linalg.norm(got - want) > 1e-9

    def test_symmetric_in_endpoints(self, rng):
        p = fields.builtin_problem("problem2")
        for x_a, x_b in zip(sample_positions(rng, 10), sample_positions(rng, 10)):
            ab = integrators.avf_field_average(x_a, x_b, p.field, 6)
            ba = integrators.avf_field_average(x_b, x_a, p.field, 6)
            npt.assert_allclose(ab, ba, rtol=1e-14, atol=1e-17)

    def test_coincident_endpoints(self, rng):
        p = fields.builtin_problem("problem1")
        x = sample_positions(rng, 1)[0]
        npt.assert_allclose(
            integrators.avf_field_average(x, x, p.field, 2),
            p.field.E(x),
            rtol=1e-15,
        )

    def test_node_count_validated(self):
        p = fields.builtin_problem("problem1")
        with pytest.raises(InvalidParameterError):
            integrators.avf_field_average(p.x0, p.x0, p.field, 0)
