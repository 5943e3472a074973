# %% [markdown]
# # Fronts that accelerate
#
# With ordinary diffusion, the Fisher-KPP equation u_t - u_xx = u(1 - u) sends
# out a front at the constant speed 2.  Replace the Laplacian by (-Δ)^α and the
# level sets run away exponentially: log |x_λ(t)| grows like t / (1 + 2α).
#
# This script runs a moderate-size version of that experiment (a few tens of
# seconds) and compares it with the Gaussian case.

# %%
import numpy as np

from fracfkpp.fields import GridSpec
from fracfkpp.fronts import (FrontTracker, fit_exponential_rate, heuristic_prefactor_diagnostic,
                             sigma_star, speed_at)
from fracfkpp.semigroup import canonical_decaying_datum
from fracfkpp.solver import EvolveSchedule, KppNonlinearity, evolve

LEVELS = (0.1, 0.5, 0.9)


def track(alpha, grid, t_end, dt=0.01):
    tracker = FrontTracker(LEVELS)
    evolve(canonical_decaying_datum(alpha, grid), EvolveSchedule.every(dt, t_end, 0.1), alpha,
           KppNonlinearity.logistic(), observer=tracker, keep_snapshots=False)
    return tracker.traces

# %% [markdown]
# ## α = 1/2
#
# A box of half-width 8192 holds the λ = 0.5 front until about t = 12.  The
# λ = 0.9 level forms late (the datum peaks near 0.22) and its slope is still
# high on this short window; longer runs bring it down to 1/2.

# %%
half = track(0.5, GridSpec(8192.0, 2 ** 17), 12.0)
for lv in LEVELS:
    est = fit_exponential_rate(half[lv], "right", (7.0, 11.0))
    print(f"lambda={lv}: slope of log x = {est.slope:.4f}   (predicted {sigma_star(0.5):.4f})")

# %% [markdown]
# The front position itself, from the time the λ = 0.5 set first appears.

# %%
tr = half[0.5]
for t in (4.0, 6.0, 8.0, 10.0, 11.0):
    k = int(np.argmin(np.abs(tr.times - t)))
    print(f"t={t:4.1f}  x_0.5 = {tr.right[k]:10.2f}")

# %% [markdown]
# ## Which prefactor?
#
# A leading-edge heuristic suggests x ~ t^(1/2) e^(t/2).  Dividing by e^(t/2)
# alone gives a series that levels off; dividing by t^(1/2) e^(t/2) gives one
# that keeps falling.

# %%
diag = heuristic_prefactor_diagnostic(tr, 0.5, 0.5)
for t in (6.0, 8.0, 10.0, 11.0):
    k = int(np.argmin(np.abs(diag.times - t)))
    print(f"t={t:4.1f}  x e^(-t/2) = {diag.plain[k]:.4f}   x e^(-t/2) t^(-1/2) = {diag.heuristic[k]:.4f}")

# %% [markdown]
# ## Speed: exponential against constant
#
# The Gaussian front (α = 1) settles near speed 2.  The α = 1/2 front speeds
# up without bound.

# %%
gauss = track(1.0, GridSpec(512.0, 2 ** 14), 12.0)
for name, traces in (("alpha=1/2", half), ("Gaussian", gauss)):
    s4, s10 = speed_at(traces[0.5], 4.0), speed_at(traces[0.5], 10.0)
    print(f"{name:>10}: speed(4) = {s4:8.3f}  speed(10) = {s10:8.3f}  ratio {s10 / s4:.2f}")
