import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from scipy import integrate

from fracfkpp.fields import Field, GridSpec, Side, TailModel
from fracfkpp.semigroup import (apply_semigroup_spectral, canonical_decaying_datum,
                                canonical_monotone_datum)
from fracfkpp.solver import (BlowUpError, CoverageError, EvolveSchedule, KppNonlinearity,
                             LinearReaction, RangeViolation, comparison_slack, duhamel_integral,
                             duhamel_residual, evolve, frac_laplacian, logistic_closed_form,
                             map_field, step_etd1)

GRID = GridSpec(1024.0, 2 ** 12)
INNER = GRID.interior_mask()
LOGISTIC = KppNonlinearity.logistic()
PROP = settings(max_examples=12, deadline=None, suppress_health_check=[HealthCheck.too_slow])


def ode_logistic(level, t):
    """Independent route: tight adaptive Runge-Kutta on phi' = phi (1 - phi)."""
    sol = integrate.solve_ivp(lambda s, y: y * (1 - y), (0, t), [level], method="DOP853",
                              rtol=1e-13, atol=1e-15)
    return float(sol.y[0, -1])


class TestNonlinearity:
    def test_logistic_values(self):
        assert LOGISTIC.fprime0 == 1.0 and LOGISTIC.fprime1 == -1.0
        u = np.array([-0.5, 0.0, 0.25, 1.0, 1.5])
        np.testing.assert_allclose(LOGISTIC(u), [0.0, 0.0, 0.1875, 0.0, 0.0])

    def test_custom_table(self):
        f = KppNonlinearity.scaled_logistic(2.0)
        assert f.fprime0 == pytest.approx(2.0, rel=1e-3)
        assert f(0.5) == pytest.approx(0.5, rel=1e-6)

    @pytest.mark.parametrize("nodes,values", [
        ([0, 0.5, 1], [0, -0.1, 0]),      # f'(0) < 0
        ([0, 0.2, 0.4, 1], [0, 0.1, 0.3, 0]),  # convex kink
        ([0, 0.5, 1], [0.1, 0.2, 0]),     # f(0) != 0
        ([0, 0.5], [0, 0]),
    ])
    def test_custom_rejects(self, nodes, values):
        with pytest.raises(ValueError):
            KppNonlinearity.custom(nodes, values)

    def test_tail_images(self):
        assert LOGISTIC.tail(TailModel.constant(Side.RIGHT, 0.5)).level == 0.25
        p = LOGISTIC.tail(TailModel.power(Side.LEFT, 2.0, 2.0))
        assert p.amplitude == 2.0 and p.exponent == 2.0


class TestSchedule:
    def test_dt_limit(self):
        with pytest.raises(ValueError):
            EvolveSchedule(0.2, 1.0).validate_for(LOGISTIC)
        EvolveSchedule(0.1, 1.0).validate_for(LOGISTIC)

    def test_snapshot_range(self):
        with pytest.raises(ValueError):
            EvolveSchedule(0.01, 1.0, (0.5, 2.0))

    def test_every(self):
        s = EvolveSchedule.every(0.01, 1.0, 0.25)
        assert s.snapshot_times == (0.0, 0.25, 0.5, 0.75, 1.0)
        assert s.num_steps == 100


class TestStep:
    @given(c=st.floats(0.01, 0.99), dt=st.sampled_from([0.005, 0.01, 0.05, 0.1]),
           alpha=st.sampled_from([0.25, 0.5, 0.75, 1.0]))
    @settings(max_examples=30, deadline=None)
    def test_uniform_field_follows_ode(self, c, dt, alpha):
        out = step_etd1(Field.constant(GRID, c), dt, alpha, LOGISTIC)
        exact = logistic_closed_form(c, dt)
        assert np.max(np.abs(out.values - exact)) <= 2 * dt * dt
        assert out.right_tail.level == pytest.approx(out.values[0], abs=1e-15)

    @pytest.mark.parametrize("alpha", [0.5, 0.75])
    def test_zero_reaction_is_semigroup(self, alpha):
        u = canonical_decaying_datum(alpha, GRID)
        a = step_etd1(u, 0.01, alpha, LinearReaction(0.0))
        b = apply_semigroup_spectral(u, 0.01, alpha)
        assert np.array_equal(a.values, b.values)

    def test_richardson_ratio(self):
        u0 = canonical_decaying_datum(0.5, GRID)
        finals = {}
        for dt in (0.02, 0.01, 0.005):
            traj = evolve(u0, EvolveSchedule(dt, 1.0, (1.0,)), 0.5, LOGISTIC)
            finals[dt] = traj.final().values
        e1 = np.max(np.abs(finals[0.02] - finals[0.01])[INNER])
        e2 = np.max(np.abs(finals[0.01] - finals[0.005])[INNER])
        assert 3.5 <= e1 / e2 <= 4.5

    def test_range_violation(self):
        with pytest.raises(RangeViolation) as info:
            step_etd1(Field.constant(GRID, 1.5), 0.01, 0.5, LOGISTIC)
        assert info.value.time is not None

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    def test_blow_up(self):
        u = canonical_decaying_datum(0.5, GRID)
        with pytest.raises(BlowUpError):
            step_etd1(u, 1.0, 0.5, LinearReaction(1e308))


class TestEvolve:
    @pytest.mark.parametrize("level", [0.0, 1.0])
    def test_equilibria(self, level):
        traj = evolve(Field.constant(GRID, level), EvolveSchedule.every(0.05, 2.0, 0.5), 0.5,
                      LOGISTIC)
        for snap in traj.snapshots:
            assert np.all(snap.values == level)

    def test_half_at_three(self):
        traj = evolve(Field.constant(GRID, 0.5), EvolveSchedule(0.01, 3.0, (3.0,)), 0.75, LOGISTIC)
        assert np.max(np.abs(traj.final().values - logistic_closed_form(0.5, 3.0))) <= 1e-4

    def test_snapshot_times_and_lookup(self):
        traj = evolve(Field.constant(GRID, 0.2), EvolveSchedule(0.03, 0.9, (0.0, 0.31, 0.9)), 0.5,
                      LOGISTIC)
        np.testing.assert_allclose(traj.times, [0.0, 0.3, 0.9])
        assert traj.at(0.31, tol=0.02).time_stamp == pytest.approx(0.3)
        with pytest.raises(CoverageError):
            traj.at(0.5)

    def test_rejects_out_of_range_data(self):
        with pytest.raises(ValueError):
            evolve(Field.constant(GRID, 1.2), EvolveSchedule(0.01, 0.1), 0.5, LOGISTIC)

    def test_deterministic(self):
        u0 = canonical_monotone_datum(0.5, GRID)
        s = EvolveSchedule(0.02, 0.4, (0.4,))
        a = evolve(u0, s, 0.5, LOGISTIC).final().values
        b = evolve(u0, s, 0.5, LOGISTIC).final().values
        assert np.array_equal(a, b)

    def test_step_error_carries_time(self):
        class Faulty(LinearReaction):
            """Linear reaction that returns NaN from its seventh evaluation on."""
            calls = 0

            def __call__(self, u):
                Faulty.calls += 1
                out = super().__call__(u)
                return out if Faulty.calls < 7 else np.full_like(out, np.nan)

        u0 = canonical_decaying_datum(0.5, GRID)
        with pytest.raises(BlowUpError) as info:
            evolve(u0, EvolveSchedule(0.01, 1.0), 0.5, Faulty(0.5))
        # two evaluations per step: the seventh falls in the step starting at t = 0.03
        assert info.value.time == pytest.approx(0.03)
        assert "at t=0.03" in str(info.value)


class TestClosedForm:
    def test_fixed_point(self):
        assert logistic_closed_form(1.0, 7.3) == 1.0

    def test_ln3(self):
        assert logistic_closed_form(0.5, math.log(3)) == pytest.approx(0.75, rel=1e-15)
        assert ode_logistic(0.5, math.log(3)) == pytest.approx(0.75, rel=1e-11)

    @given(level=st.floats(1e-3, 1.0), t=st.floats(0.0, 20.0))
    def test_matches_ode(self, level, t):
        assert logistic_closed_form(level, t) == pytest.approx(ode_logistic(level, t), rel=1e-9)

    def test_exponential_approach(self):
        phi = lambda t: logistic_closed_form(0.3, t)  # noqa: E731
        ratio = (1 - phi(11.0)) / (1 - phi(10.0))
        assert ratio == pytest.approx(math.exp(-1), rel=0.01)

    def test_monotone(self):
        t = np.linspace(0, 30, 301)
        assert np.all(np.diff(logistic_closed_form(0.01, t)) >= 0)

    def test_domain(self):
        with pytest.raises(ValueError):
            logistic_closed_form(0.0, 1.0)


def lorentzian(grid):
    vals = 1.0 / (1.0 + grid.x ** 2)
    return Field(grid, vals, TailModel.power(Side.LEFT, 1.0, 2.0),
                 TailModel.power(Side.RIGHT, 1.0, 2.0))


def half_laplacian_pv(x):
    """Independent route: (1/pi) int_0^inf (2u(x) - u(x+z) - u(x-z)) / z^2 dz for u = 1/(1+x^2)."""
    u = lambda y: 1.0 / (1.0 + y * y)  # noqa: E731

    def g(z):
        if z < 1e-4:  # second-order Taylor term, -u''(x)
            return -(6 * x * x - 2) / (1 + x * x) ** 3
        return (2 * u(x) - u(x + z) - u(x - z)) / (z * z)
    return integrate.quad(g, 0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=500)[0] / math.pi


class TestFracLaplacian:
    LAP_GRID = GridSpec(1024.0, 2 ** 14)

    def _lap(self):
        return frac_laplacian(lorentzian(self.LAP_GRID), 0.5)

    @pytest.mark.parametrize("x,expected", [(0.0, 1.0), (2.0, -0.12)])
    def test_identity_values(self, x, expected):
        out = self._lap()
        i = int(np.argmin(np.abs(self.LAP_GRID.x - x)))
        assert self.LAP_GRID.x[i] == x
        assert out.values[i] == pytest.approx(expected, rel=1e-4)

    def test_zero_at_one(self):
        out = self._lap()
        i = int(np.argmin(np.abs(self.LAP_GRID.x - 1.0)))
        # the exact value vanishes, so the error is measured against the O(1) scale of the field
        assert abs(out.values[i]) <= 1e-4

    def test_identity_on_half_box(self):
        g = self.LAP_GRID
        out = self._lap()
        x = g.x
        exact = (1 - x * x) / (1 + x * x) ** 2
        sel = np.abs(x) <= g.L / 2
        scale = np.maximum(np.abs(exact), 1e-4 * np.max(np.abs(exact)))
        assert np.max((np.abs(out.values - exact) / scale)[sel]) <= 1e-4

    @pytest.mark.parametrize("x", [0.5, 2.0, 7.0])
    def test_against_principal_value(self, x):
        out = self._lap()
        i = int(np.argmin(np.abs(self.LAP_GRID.x - x)))
        assert out.values[i] == pytest.approx(half_laplacian_pv(x), rel=1e-6, abs=1e-10)

    def test_constant_is_annihilated(self):
        out = frac_laplacian(Field.constant(GRID, 0.7), 0.75)
        assert np.max(np.abs(out.values)) <= 1e-14


class TestDuhamel:
    def test_linear_flow(self):
        u0 = canonical_decaying_datum(0.5, GRID)
        traj = evolve(u0, EvolveSchedule.every(0.02, 1.0, 0.02), 0.5, LinearReaction(0.0))
        assert duhamel_residual(traj, 1.0) <= 1e-4

    def test_uniform_half(self):
        traj = evolve(Field.constant(GRID, 0.5), EvolveSchedule.every(0.01, 1.0, 0.02), 0.5,
                      LOGISTIC)
        assert duhamel_residual(traj, 1.0) <= 1e-4

    def test_step_halving(self):
        u0 = canonical_decaying_datum(0.5, GRID)
        res = []
        for dt in (0.02, 0.01):
            traj = evolve(u0, EvolveSchedule.every(dt, 1.0, 0.02), 0.5, LOGISTIC)
            res.append(duhamel_residual(traj, 1.0, m=50))
        assert 3.2 <= res[0] / res[1] <= 4.8

    def test_coverage(self):
        traj = evolve(Field.constant(GRID, 0.5), EvolveSchedule(0.01, 1.0, (0.0, 1.0)), 0.5,
                      LOGISTIC)
        with pytest.raises(CoverageError):
            duhamel_residual(traj, 1.0, m=50)

    def test_panel_count(self):
        traj = evolve(Field.constant(GRID, 0.5), EvolveSchedule.every(0.01, 1.0, 0.1), 0.5,
                      LOGISTIC)
        with pytest.raises(ValueError):
            duhamel_residual(traj, 1.0, m=7)


# ---------------------------------------------------------------------------
# Properties of the discrete flow

DT = 0.02
T_END = 2.0
SLACK = comparison_slack(DT, T_END)


def _run(u0, alpha, f=LOGISTIC, spacing=0.5):
    return evolve(u0, EvolveSchedule.every(DT, T_END, spacing), alpha, f)


@PROP
@given(alpha=st.sampled_from([0.5, 0.75]), lam=st.floats(0.05, 1.0),
       kind=st.sampled_from(["decay", "mono"]))
def test_comparison_principle(alpha, lam, kind):
    v0 = (canonical_decaying_datum if kind == "decay" else canonical_monotone_datum)(alpha, GRID)
    u = _run(v0.scaled(lam), alpha)
    v = _run(v0, alpha)
    for a, b in zip(u.snapshots, v.snapshots):
        assert np.all(a.values <= b.values + SLACK)


@PROP
@given(alpha=st.sampled_from([0.5, 0.75]), r1=st.floats(0.3, 1.0), dr=st.floats(0.0, 1.0))
def test_nonlinearity_comparison(alpha, r1, dr):
    u0 = canonical_decaying_datum(alpha, GRID)
    u = _run(u0, alpha, KppNonlinearity.scaled_logistic(r1))
    v = _run(u0, alpha, KppNonlinearity.scaled_logistic(r1 + dr))
    for a, b in zip(u.snapshots, v.snapshots):
        assert np.all(a.values <= b.values + SLACK)


@PROP
@given(alpha=st.sampled_from([0.25, 0.5, 0.75, 1.0]), scale=st.floats(0.05, 1.0))
def test_range_preservation(alpha, scale):
    grid = GRID if alpha != 0.25 else GridSpec(8192.0, 2 ** 14)
    traj = _run(canonical_monotone_datum(alpha, grid).scaled(scale), alpha)
    for s in traj.snapshots:
        assert s.values.min() >= -SLACK and s.values.max() <= 1 + SLACK
    assert traj.max_overshoot <= 1e-3


@PROP
@given(alpha=st.sampled_from([0.5, 0.75, 1.0]), scale=st.floats(0.05, 1.0))
def test_monotone_preservation(alpha, scale):
    traj = _run(canonical_monotone_datum(alpha, GRID).scaled(scale), alpha)
    for s in traj.snapshots:
        assert np.all(np.diff(s.values[INNER]) >= -SLACK)


@PROP
@given(alpha=st.sampled_from([0.5, 0.75]), kind=st.sampled_from(["decay", "mono"]))
def test_linearized_growth_bound(alpha, kind):
    u0 = (canonical_decaying_datum if kind == "decay" else canonical_monotone_datum)(alpha, GRID)
    traj = _run(u0, alpha)
    linear = u0
    for s in traj.snapshots[1:]:
        t = s.time_stamp
        # T_t built from T_0.5 pieces keeps every call below the grid's safe time
        linear = apply_semigroup_spectral(linear, 0.5, alpha)
        bound = math.exp(t) * linear.values
        assert np.all(s.values[INNER] <= bound[INNER] + SLACK * math.exp(t))


def _kato(theta):
    def phi(u):
        d = np.maximum(u - theta, 0.0)
        return d * d / (d + 1.0)

    def dphi(u):
        d = np.maximum(u - theta, 0.0)
        return d * (d + 2.0) / (d + 1.0) ** 2
    return phi, dphi


@pytest.mark.parametrize("theta", [0.3, 0.6])
@pytest.mark.parametrize("alpha,kind", [(0.5, "decay"), (0.75, "mono")])
def test_kato_inequality(theta, alpha, kind):
    u0 = (canonical_decaying_datum if kind == "decay" else canonical_monotone_datum)(alpha, GRID)
    # a bump reaching above both thresholds
    u0 = u0.scaled(0.9 / u0.values.max()) if kind == "decay" else u0
    traj = evolve(u0, EvolveSchedule.every(DT, 1.0, DT), alpha, LOGISTIC)
    phi, dphi = _kato(theta)
    t = 1.0
    lhs = map_field(traj.at(t), phi, alpha)
    forcing = duhamel_integral(traj, t, 50, lambda u: map_field(u, lambda v: dphi(v) * LOGISTIC(v),
                                                                alpha))
    rhs = apply_semigroup_spectral(map_field(traj.at(0.0), phi, alpha), t, alpha) + forcing
    slack = comparison_slack(DT, t)
    assert np.all(lhs.values[INNER] <= rhs.values[INNER] + slack)


@pytest.mark.parametrize("level", [0.05, 0.5, 0.95])
def test_uniform_exactness(level):
    traj = evolve(Field.constant(GRID, level), EvolveSchedule.every(0.01, 5.0, 0.25), 0.5, LOGISTIC)
    for s in traj.snapshots:
        assert np.max(np.abs(s.values - logistic_closed_form(level, s.time_stamp))) <= 1e-4
