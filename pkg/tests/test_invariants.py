"""Conserved quantities: frozen values, drift normalization, vector consistency."""

import numpy as np
import numpy.testing as npt
import pytest

from cpsplit import fields, invariants
from cpsplit.errors import DegenerateFieldError
from cpsplit.fields import FieldModel, ProblemSpec
from cpsplit.integrators import IntegratorConfig, ParticleState, integrate


def initial_state(problem):
    return ParticleState(x=problem.x0, v=problem.v0, t=0.0)


class TestFrozenValues:
    def test_energy_problem1(self):
        p = fields.builtin_problem("problem1")
        # 0.5 (0.09^2 + 0.05^2 + 0.2^2) + 0.0101
        assert invariants.energy(initial_state(p), p.field) == pytest.approx(
            0.0354, rel=1e-14
        )

    def test_modified_energy_problem1(self):
        p = fields.builtin_problem("problem1")
        # grad U(x0) = (0, 0.02, 0.002), so the h^2/8 correction at
        # h = 0.01 is 1.25e-5 * 4.04e-4 = 5.05e-9
        got = invariants.modified_energy(initial_state(p), p.field, h=0.01)
        assert got == pytest.approx(0.0354 - 5.05e-9, rel=1e-13)

    def test_momentum_problem1(self):
        p = fields.builtin_problem("problem1")
        # A(x0) = (-0.5, 0, 0), v0 + A = (-0.41, 0.05, 0.2), S x0 = (1, 0, 0)
        got = invariants.momentum(initial_state(p), p.field, p.S)
        assert got == pytest.approx(-0.41, rel=1e-14)

    def test_momentum_problem3(self):
        p = fields.builtin_problem("problem3")
        # azimuthal potential at x0: A = (-1/3, 0, 0)
        got = invariants.momentum(initial_state(p), p.field, p.S)
        assert got == pytest.approx(0.09 - 1.0 / 3.0, rel=1e-14)

    def test_magnetic_moment_problem1(self):
        p = fields.builtin_problem("problem1")
        # v0 x B = (0.05, -0.09, 0), moment = 0.0106 / 2
        got = invariants.magnetic_moment(initial_state(p), p.field)
        assert got == pytest.approx(0.0053, rel=1e-14)

    def test_magnetic_moment_scales_with_epsilon(self):
        p = fields.builtin_problem("problem1", epsilon=0.125)
        got = invariants.magnetic_moment(initial_state(p), p.field)
        assert got == pytest.approx(0.0053 * 0.125, rel=1e-13)

    def test_degenerate_field_rejected(self):
        zero = FieldModel(
            U=lambda x: np.zeros(np.shape(x)[:-1]),
            grad_U=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            B=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            A=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        )
        s = ParticleState(x=np.array([0.0, 1.0, 0.0]), v=np.array([0.1, 0.0, 0.0]))
        with pytest.raises(DegenerateFieldError):
            invariants.magnetic_moment(s, zero)


@pytest.fixture(scope="module")
def run():
    p = fields.builtin_problem("problem1")
    traj = integrate(p, IntegratorConfig("exs-o2", h=0.01), t_end=5.0, sample_stride=10)
    return p, traj


class TestDriftSeries:
    def test_first_row_is_zero(self, run):
        p, traj = run
        d = invariants.drift_series(traj, p)
        for channel in invariants.CHANNELS:
            series = getattr(d, channel)
            assert series[0] == 0.0
            assert series.shape == traj.times.shape
            assert np.all(series >= 0.0)

    def test_matches_pointwise_evaluation(self, run):
        # the vectorized series must agree with per-state evaluation of
        # the same quantities
        p, traj = run
        d = invariants.drift_series(traj, p)
        h = traj.h
        H = np.array([invariants.energy(traj.state(i), p.field) for i in range(traj.times.size)])
        Hh = np.array(
            [invariants.modified_energy(traj.state(i), p.field, h) for i in range(traj.times.size)]
        )
        M = np.array(
            [invariants.momentum(traj.state(i), p.field, p.S) for i in range(traj.times.size)]
        )
        mu = np.array(
            [invariants.magnetic_moment(traj.state(i), p.field) for i in range(traj.times.size)]
        )
        # drifts difference two nearly equal invariant values, so the
        # two evaluation orders can only agree to the eps-of-the-raw-value
        # floor, which lands near 1e-14 in drift units here
        npt.assert_allclose(d.energy, np.abs(H - H[0]) / abs(H[0]), rtol=1e-12, atol=2e-14)
        npt.assert_allclose(
            d.modified_energy, np.abs(Hh - Hh[0]) / abs(Hh[0]), rtol=1e-12, atol=2e-14
        )
        npt.assert_allclose(d.momentum, np.abs(M - M[0]) / abs(M[0]), rtol=1e-12, atol=2e-14)
        npt.assert_allclose(
            d.magnetic_moment, np.abs(mu - mu[0]) / abs(mu[0]), rtol=1e-12, atol=2e-14
        )
        assert d.absolute_channels == ()

    def test_max_drift_summary(self, run):
        p, traj = run
        d = invariants.drift_series(traj, p)
        m = d.max_drift()
        assert set(m) == set(invariants.CHANNELS)
        for channel in invariants.CHANNELS:
            assert m[channel] == np.max(getattr(d, channel))

    def test_zero_initial_value_switches_to_absolute(self):
        # initial planar momentum is exactly zero here, so the relative
        # normalization is undefined and the series must fall back to
        # absolute drift with the channel flagged
        B0 = np.array([0.0, 0.0, 1.0])
        model = FieldModel(
            U=lambda x: np.zeros(np.shape(x)[:-1]),
            grad_U=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            B=lambda x: np.broadcast_to(B0, np.shape(x)).copy(),
            A=lambda x: fields.vector_potential_constant_B(np.asarray(x, dtype=float), B0),
            is_constant_B=True,
            is_quadratic_U=True,
        )
        p = ProblemSpec(
            name="null-momentum",
            field=model,
            x0=np.array([0.0, 1.0, 0.0]),
            v0=np.array([0.5, 0.0, 0.0]),
            epsilon=1.0,
            S=np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
        )
        assert invariants.momentum(ParticleState(x=p.x0, v=p.v0), p.field, p.S) == 0.0
        traj = integrate(p, IntegratorConfig("exs-o2", h=0.05), t_end=2.0)
        d = invariants.drift_series(traj, p)
        assert "momentum" in d.absolute_channels
        assert "energy" not in d.absolute_channels

    def test_channel_codes_cover_output_columns(self):
        assert invariants.CHANNEL_CODES == {
            "H": "energy",
            "Hh": "modified_energy",
            "M": "momentum",
            "I": "magnetic_moment",
        }
