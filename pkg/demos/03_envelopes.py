# %% [markdown]
# # Explicit envelopes and the marker iteration
#
# Two tools pin the α = 1/2 front between known curves.
#
# * The profiles u_{a,b0}(t, x) = a / (1 + x² / b(t)²), with b(t) = (1 + b0) e^(t/2) - 1,
#   are exact super- or subsolutions depending on a.
# * A lower bound for general α comes from iterating small bumps: every period t0
#   the region where u exceeds ε widens by a fixed factor.

# %%
import numpy as np

from fracfkpp.envelopes import (ExplicitEnvelope, check_ordering, compute_expr_schedule,
                                dominating_super_envelope, envelope_residual_factor,
                                initial_state, iterate_expr_envelope, schedule_lower_constant,
                                seeded_sub_envelope, verify_envelope_numerically)
from fracfkpp.fields import GridSpec
from fracfkpp.semigroup import canonical_decaying_datum, truncated_power_datum
from fracfkpp.solver import EvolveSchedule, KppNonlinearity, comparison_slack, evolve

LOGISTIC = KppNonlinearity.logistic()

# %% [markdown]
# ## Residual signs
#
# The evolution residual of u_{a,b0} is the profile weight times
# 1/b(t) - 1 + a.  With a = 1 it is positive, so the profile is a supersolution.
# Below the threshold a = (b0 - 1)/b0 it is never positive.

# %%
for env in (ExplicitEnvelope(1.0, 2.0, "Super"), ExplicitEnvelope(0.4, 2.0, "Sub")):
    factors = [envelope_residual_factor(env, t) for t in (0.0, 1.0, 4.0)]
    report = verify_envelope_numerically(env)
    print(f"{env.role.value:>5} a={env.a}: factor at t=0,1,4 = {np.round(factors, 4)}; "
          f"numeric check {'passed' if report.passed else 'failed'} "
          f"(worst deviation {report.worst_deviation:.1e})")

# %% [markdown]
# ## Sandwiching a real solution

# %%
grid = GridSpec(4096.0, 2 ** 14)
u0 = canonical_decaying_datum(0.5, grid)
traj = evolve(u0, EvolveSchedule.every(0.01, 8.0, 0.5), 0.5, LOGISTIC)
upper = dominating_super_envelope(u0)
lower = seeded_sub_envelope(traj.at(2.0), 2.0)
print("super envelope:", upper)
print("sub envelope seeded at t=2:", lower)
above = check_ordering(None, traj, lambda t: upper.field(grid, t))
below = check_ordering(lambda t: lower.field(grid, t), traj, None, t_shift=2.0)
print("solution below the super envelope:", above.holds)
print("solution above the seeded sub envelope:", below.holds)

# %% [markdown]
# ## The marker iteration
#
# The schedule fixes a period t0 and a height ε.  The markers r_k grow
# geometrically and the solver should keep u ≥ ε on |x| ≤ r_k at time k t0.

# %%
sched = compute_expr_schedule(0.5, LOGISTIC, 0.1, schedule_lower_constant(0.5))
state = iterate_expr_envelope(initial_state(sched, 1.0), 2)
print(f"t0 = {sched.t0}, eps = {state.eps:.4g}, markers = {np.round(state.markers, 3)}")
v0 = truncated_power_datum(0.5, state.eps, 1.0, grid)
run = evolve(v0, EvolveSchedule.every(0.01, 2 * sched.t0, sched.t0), 0.5, LOGISTIC)
for k in (1, 2):
    t = k * sched.t0
    inside = np.abs(grid.x) <= state.markers[k]
    low = run.at(t).values[inside].min()
    print(f"k={k}: min u on |x| <= r_k is {low / state.eps:.2f} eps "
          f"(slack {comparison_slack(0.01, t):.1e})")
