"""End-to-end acceptance criteria, each at its stated tolerance.

Every test records a one-line PASS/FAIL verdict (printed live and again in
the terminal summary) and then asserts it.  The long simulations are shared
through module-scoped fixtures.
"""

import math
import time

import numpy as np
import pytest

from fracfkpp import kernels
from fracfkpp.envelopes import (ExplicitEnvelope, IterationKind, compute_expi_schedule,
                                compute_expr_schedule, initial_state, iterate_expi_envelope,
                                iterate_expr_envelope, schedule_lower_constant,
                                verify_envelope_numerically)
from fracfkpp.fields import Field, GridSpec, TailModel
from fracfkpp.fronts import (FitError, FrontTracker, fit_exponential_rate,
                             heuristic_prefactor_diagnostic, policy_window, sigma_double_star, sigma_star, speed_at,
                             theorem_verdict)
from fracfkpp.semigroup import (apply_semigroup_spectral, canonical_decaying_datum,
                                canonical_monotone_datum, check_radial_monotone_preservation,
                                truncated_monotone_datum, truncated_power_datum)
from fracfkpp.solver import (EvolveSchedule, KppNonlinearity, comparison_slack, duhamel_integral,
                             duhamel_residual, evolve, frac_laplacian, logistic_closed_form,
                             map_field)

LOGISTIC = KppNonlinearity.logistic()
LEVELS = (0.1, 0.5, 0.9)


def verdict(log, n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    print(line)
    log.append(line)
    assert ok, line


def run_fronts(alpha, datum, grid, dt, t_end, spacing=0.1):
    tracker = FrontTracker(LEVELS)
    start = time.perf_counter()
    traj = evolve(datum(alpha, grid), EvolveSchedule.every(dt, t_end, spacing), alpha, LOGISTIC,
                  observer=tracker, keep_snapshots=False)
    return tracker.traces, time.perf_counter() - start, traj.max_overshoot


# ---------------------------------------------------------------------------
# shared long runs

@pytest.fixture(scope="module")
def half_decaying():
    return run_fronts(0.5, canonical_decaying_datum, GridSpec(32768.0, 2 ** 19), 0.01, 16.0)


@pytest.fixture(scope="module")
def half_monotone():
    return run_fronts(0.5, canonical_monotone_datum, GridSpec(32768.0, 2 ** 19), 0.01, 9.0)


@pytest.fixture(scope="module")
def gaussian_decaying():
    # the Gaussian front moves at bounded speed, so a small box already holds it
    return run_fronts(1.0, canonical_decaying_datum, GridSpec(512.0, 2 ** 14), 0.01, 16.0)


# ---------------------------------------------------------------------------

def test_criterion_01_half_rate(half_decaying, acceptance_log):
    traces, seconds, _ = half_decaying
    parts, ok = [], True
    for lv in LEVELS:
        pw = policy_window(traces[lv], "right")
        window = (max(pw[0], 8.0), min(pw[1], 14.0))
        est = fit_exponential_rate(traces[lv], "right", window)
        v = theorem_verdict(est, sigma_star(0.5), 0.05)
        ok &= v.passed
        parts.append(f"lambda={lv} slope {est.slope:.4f} on [{window[0]:g},{window[1]:g}]")
    verdict(acceptance_log, 1, ok, "; ".join(parts) + f" (expected 0.5 +- 0.05; run {seconds:.0f}s)")


def test_criterion_02_prefactor_pinning(half_decaying, acceptance_log):
    traces, _, _ = half_decaying
    diag = heuristic_prefactor_diagnostic(traces[0.5], 0.5, 0.5)
    sel = (diag.times >= 10.0 - 1e-9) & (diag.times <= 14.0 + 1e-9)
    plain, heur = diag.plain[sel], diag.heuristic[sel]
    spread = float(plain.max() / plain.min())
    monotone = bool(np.all(np.diff(heur) < 0))
    drop = float(1.0 - heur[-1] / heur[0])
    pinned = spread <= 3.0
    refutes = monotone and drop >= 0.25
    detail = (f"x e^(-t/2) spread M/m = {spread:.4f} (need <= 3); "
              f"x e^(-t/2) t^(-1/2) decreasing={monotone}, drop {100 * drop:.1f}% (need >= 25%)")
    verdict(acceptance_log, 2, pinned and refutes, detail)


def test_criterion_03_monotone_rate(half_monotone, acceptance_log):
    traces, seconds, _ = half_monotone
    parts, ok = [], True
    for lv in LEVELS:
        est = fit_exponential_rate(traces[lv], "left", (4.0, 8.0))
        v = theorem_verdict(est, sigma_double_star(0.5), 0.1)
        ok &= v.passed
        parts.append(f"lambda={lv} slope {est.slope:.4f}")
    verdict(acceptance_log, 3, ok, "; ".join(parts) + f" (expected 1.0 +- 0.1; run {seconds:.0f}s)")


def test_criterion_04_alpha_sweep(acceptance_log):
    cases = (
        # alpha, points, levels fitted
        (0.25, 2 ** 17, (0.1, 0.5)),
        (0.75, 2 ** 18, LEVELS),
    )
    parts, ok = [], True
    for alpha, n_points, levels in cases:
        traces, _, _ = run_fronts(alpha, canonical_decaying_datum, GridSpec(32768.0, n_points),
                                  0.02, 16.0)
        expected = sigma_star(alpha)
        for lv in levels:
            est = fit_exponential_rate(traces[lv], "right", (12.0, 16.0))
            v = theorem_verdict(est, expected, 0.1 * expected)
            ok &= v.passed
            parts.append(f"alpha={alpha} lambda={lv} slope {est.slope:.4f} vs {expected:.4f}")
    verdict(acceptance_log, 4, ok, "; ".join(parts) + " (+-10%, window [12,16])")


def test_criterion_05_unbounded_speed(half_decaying, gaussian_decaying, acceptance_log):
    traces, _, _ = half_decaying
    ratios, absent = {}, []
    for lv in LEVELS:
        try:
            ratios[lv] = speed_at(traces[lv], 15.0) / speed_at(traces[lv], 5.0)
        except FitError:
            # the level set does not exist yet at t=5 (datum peak is ln2/pi)
            absent.append(lv)
    frac_ok = 0.5 in ratios and all(r > 2.0 for r in ratios.values())
    g_traces, _, _ = gaussian_decaying
    g_ratio = speed_at(g_traces[0.5], 15.0) / speed_at(g_traces[0.5], 5.0)
    g_ok = 0.8 <= g_ratio <= 1.25
    detail = ("alpha=1/2 speed(15)/speed(5): "
              + ", ".join(f"lambda={lv} {r:.1f}" for lv, r in ratios.items())
              + (f" (not yet formed at t=5: {absent})" if absent else "")
              + f" (need > 2); Gaussian lambda=0.5 ratio {g_ratio:.3f} (need in [0.8, 1.25])")
    verdict(acceptance_log, 5, frac_ok and g_ok, detail)


def test_criterion_06_kernel_suite(acceptance_log):
    parts, ok = [], True
    x = np.concatenate(([0.0], np.geomspace(0.1, 100.0, 13)))
    for alpha, ck_limit in ((0.5, 1e-6), (0.75, 1e-5)):
        spec = kernels.KernelSpec.for_alpha(alpha)
        norm = max(kernels.normalization_error(spec, t) for t in (0.5, 1.0, 2.0))
        scale = 0.0
        for t in (0.5, 2.0, 5.0):
            s = t ** (0.5 / alpha)
            direct = kernels.eval_stable_kernel(spec, t, x)
            scaled = kernels.eval_stable_kernel(spec, 1.0, x / s) / s
            scale = max(scale, float(np.max(np.abs(direct - scaled))))
        if alpha == 0.5:
            ck = kernels.chapman_kolmogorov_residual(spec, 1.0, 1.0, 0.0)
        else:
            ck = kernels.chapman_kolmogorov_residual(spec, 0.5, 1.5, 2.0)
        coarse = kernels.verify_p3(spec, kernels.default_probes())
        fine = kernels.verify_p3(spec, kernels.default_probes(n_t=17, n_x=49))
        drift = abs(fine.measured_B / coarse.measured_B - 1.0)
        this = (norm <= 1e-6 and scale <= 1e-8 and ck <= ck_limit
                and math.isfinite(coarse.measured_B) and drift <= 0.05)
        ok &= this
        parts.append(f"alpha={alpha} norm {norm:.1e} scale {scale:.1e} CK {ck:.1e} "
                     f"B {coarse.measured_B:.4f}->{fine.measured_B:.4f}")
    verdict(acceptance_log, 6, ok, "; ".join(parts))


def test_criterion_07_operator_identity(acceptance_log):
    grid = GridSpec(1024.0, 2 ** 14)
    u = Field(grid, 1.0 / (1.0 + grid.x ** 2), TailModel.power("left", 1.0, 2.0),
              TailModel.power("right", 1.0, 2.0))
    lap = frac_laplacian(u, 0.5)
    worst, parts, ok = 0.0, [], True
    for x in (0.0, 1.0, -1.0, 2.0, -2.0, 5.0, -5.0, 10.0, -10.0):
        i = int(np.argmin(np.abs(grid.x - x)))
        assert grid.x[i] == x
        exact = (1 - x * x) / (1 + x * x) ** 2
        got = float(lap.values[i])
        # at |x| = 1 the exact value is zero, so the error is taken relative to the unit peak
        err = abs(got - exact) / (abs(exact) if exact != 0 else 1.0)
        worst = max(worst, err)
        ok &= err <= 1e-4
        if x >= 0:
            parts.append(f"x={x:g}: {got:.6f}")
    verdict(acceptance_log, 7, ok, ", ".join(parts) + f"; worst relative error {worst:.1e}")


def test_criterion_08_envelope_residual(acceptance_log):
    parts, ok = [], True
    for env in (ExplicitEnvelope(0.4, 2.0, "Sub"), ExplicitEnvelope(1.0, 2.0, "Super")):
        rep = verify_envelope_numerically(env)
        this = rep.passed and rep.sign_ok and rep.worst_deviation <= 1e-4 * env.a
        ok &= this
        parts.append(f"{env.role.value} a={env.a:g}: worst deviation {rep.worst_deviation:.1e} "
                     f"(limit {1e-4 * env.a:.0e}), signs {'ok' if rep.sign_ok else 'wrong'}")
    verdict(acceptance_log, 8, ok, "; ".join(parts))


# ---------------------------------------------------------------------------
# criterion 9: property suites under a two-minute budget

PGRID = GridSpec(1024.0, 2 ** 12)
PINNER = PGRID.interior_mask()
PDT, PT = 0.02, 2.0
PSLACK = comparison_slack(PDT, PT)


def _prop_run(u0, alpha, f=LOGISTIC):
    return evolve(u0, EvolveSchedule.every(PDT, PT, 0.5), alpha, f)


def _comparison():
    for alpha in (0.5, 0.75):
        for datum in (canonical_decaying_datum, canonical_monotone_datum):
            v0 = datum(alpha, PGRID)
            lo, hi = _prop_run(v0.scaled(0.4), alpha), _prop_run(v0, alpha)
            for a, b in zip(lo.snapshots, hi.snapshots):
                if not np.all(a.values <= b.values + PSLACK):
                    return False
    return True


def _range():
    for alpha in (0.5, 0.75, 1.0):
        traj = _prop_run(canonical_monotone_datum(alpha, PGRID), alpha)
        if traj.max_overshoot > 1e-3:
            return False
        for s in traj.snapshots:
            if s.values.min() < -PSLACK or s.values.max() > 1 + PSLACK:
                return False
    return True


def _monotone():
    for alpha in (0.5, 0.75, 1.0):
        for s in _prop_run(canonical_monotone_datum(alpha, PGRID), alpha).snapshots:
            if not np.all(np.diff(s.values[PINNER]) >= -PSLACK):
                return False
    return True


def _radial():
    return all(check_radial_monotone_preservation(canonical_decaying_datum(alpha, PGRID), t,
                                                  alpha).preserved
               for alpha in (0.5, 0.75) for t in (0.5, 1.0))


def _kato():
    for theta in (0.3, 0.6):
        def phi(u):
            d = np.maximum(u - theta, 0.0)
            return d * d / (d + 1.0)

        def dphi(u):
            d = np.maximum(u - theta, 0.0)
            return d * (d + 2.0) / (d + 1.0) ** 2

        u0 = canonical_decaying_datum(0.5, PGRID)
        u0 = u0.scaled(0.9 / u0.values.max())
        traj = evolve(u0, EvolveSchedule.every(PDT, 1.0, PDT), 0.5, LOGISTIC)
        lhs = map_field(traj.at(1.0), phi, 0.5)
        forcing = duhamel_integral(
            traj, 1.0, 50, lambda u: map_field(u, lambda v: dphi(v) * LOGISTIC(v), 0.5))
        rhs = apply_semigroup_spectral(map_field(u0, phi, 0.5), 1.0, 0.5) + forcing
        if not np.all(lhs.values[PINNER] <= rhs.values[PINNER] + comparison_slack(PDT, 1.0)):
            return False
    return True


def _linearized():
    for alpha in (0.5, 0.75):
        u0 = canonical_decaying_datum(alpha, PGRID)
        linear = u0
        for s in _prop_run(u0, alpha).snapshots[1:]:
            linear = apply_semigroup_spectral(linear, 0.5, alpha)
            bound = math.exp(s.time_stamp) * (linear.values + PSLACK)
            if not np.all(s.values[PINNER] <= bound[PINNER]):
                return False
    return True


def _richardson():
    u0 = canonical_decaying_datum(0.5, PGRID)
    res = [duhamel_residual(evolve(u0, EvolveSchedule.every(dt, 1.0, 0.02), 0.5, LOGISTIC), 1.0,
                            m=50) for dt in (0.02, 0.01)]
    ratio = res[0] / res[1]
    return 3.2 <= ratio <= 4.8, ratio


def _uniform():
    worst = 0.0
    for level in (0.05, 0.5, 0.95):
        traj = evolve(Field.constant(PGRID, level), EvolveSchedule.every(0.01, 5.0, 0.25), 0.5,
                      LOGISTIC)
        for s in traj.snapshots:
            worst = max(worst, float(np.max(np.abs(s.values
                                                   - logistic_closed_form(level, s.time_stamp)))))
    return worst <= 1e-4, worst


def test_criterion_09_property_suites(acceptance_log):
    start = time.perf_counter()
    results = {
        "comparison": _comparison(),
        "range": _range(),
        "monotone": _monotone(),
        "radial": _radial(),
        "kato": _kato(),
        "linearized": _linearized(),
    }
    rich_ok, ratio = _richardson()
    uni_ok, worst = _uniform()
    results["richardson"] = rich_ok
    results["uniform"] = uni_ok
    seconds = time.perf_counter() - start
    ok = all(results.values()) and seconds <= 120.0
    failed = [k for k, v in results.items() if not v]
    detail = (f"{len(results) - len(failed)}/{len(results)} suites hold"
              + (f" (failed: {', '.join(failed)})" if failed else "")
              + f"; Richardson ratio {ratio:.2f}; uniform error {worst:.1e}; {seconds:.0f}s of 120s")
    verdict(acceptance_log, 9, ok, detail)


# ---------------------------------------------------------------------------
# criterion 10: envelope markers against the solver

XGRID = GridSpec(4096.0, 2 ** 14)
XDT = 0.01
FROZEN_T0 = {(IterationKind.DECAYING, 0.5): 3.1, (IterationKind.MONOTONE, 0.5): 1.0,
             (IterationKind.DECAYING, 0.75): 2.5, (IterationKind.MONOTONE, 0.75): 1.0}


def test_criterion_10_envelope_cross_check(acceptance_log):
    parts, ok = [], True
    for alpha in (0.5, 0.75):
        for kind in (IterationKind.DECAYING, IterationKind.MONOTONE):
            c = schedule_lower_constant(alpha, kind)
            if kind is IterationKind.DECAYING:
                sched = compute_expr_schedule(alpha, LOGISTIC, 0.1, c)
                state = iterate_expr_envelope(initial_state(sched, 1.0), 2)
                v0 = truncated_power_datum(alpha, state.eps, 1.0, XGRID)
            else:
                sched = compute_expi_schedule(alpha, LOGISTIC, 0.1, c)
                state = iterate_expi_envelope(initial_state(sched, -1.0), 2)
                v0 = truncated_monotone_datum(alpha, state.eps, -1.0, XGRID)
            assert sched.t0 == FROZEN_T0[(kind, alpha)]
            traj = evolve(v0, EvolveSchedule.every(XDT, 2 * sched.t0, sched.t0), alpha, LOGISTIC)
            mins = []
            for k in (1, 2):
                t = k * sched.t0
                if kind is IterationKind.DECAYING:
                    sel = np.abs(XGRID.x) <= state.markers[k]
                else:
                    sel = XGRID.x >= state.markers[k]
                floor = state.eps - comparison_slack(XDT, t)
                low = float(traj.at(t).values[sel].min())
                ok &= low >= floor
                mins.append(low / state.eps)
            parts.append(f"{kind.value} alpha={alpha}: t0={sched.t0:g}, "
                         f"markers {state.markers[1]:.3g}/{state.markers[2]:.3g}, "
                         f"min u/eps {mins[0]:.2f}/{mins[1]:.2f}")
    verdict(acceptance_log, 10, ok, "; ".join(parts) + " (sigma = 0.1, need min u/eps >= 1 - slack)")
