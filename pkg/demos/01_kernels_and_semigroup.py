# %% [markdown]
# # Stable kernels and the heavy-tailed heat flow
#
# The fractional Laplacian (-Δ)^α generates a convolution semigroup whose kernel
# p(t, x) is the symmetric 2α-stable density.  Unlike the Gaussian, it decays
# only like a power, p(t, x) ~ c t |x|^(-1-2α).  This script looks at the
# kernel family, its tails, and what the heat flow does to a sharp step.

# %%
import numpy as np

from fracfkpp import kernels
from fracfkpp.fields import GridSpec
from fracfkpp.semigroup import apply_semigroup_spectral, canonical_decaying_datum, heaviside_datum

# %% [markdown]
# ## Peak heights and tails
#
# At α = 1/2 the kernel is the Cauchy density t / (π (t² + x²)), at α = 1 it is
# the Gaussian heat kernel.  Other α go through numerical Fourier inversion.

# %%
xs = np.array([0.0, 1.0, 10.0, 100.0])
for alpha in (0.25, 0.5, 0.75, 1.0):
    spec = kernels.KernelSpec.for_alpha(alpha)
    values = kernels.eval_stable_kernel(spec, 1.0, xs)
    print(f"alpha={alpha:<5} strategy={spec.strategy.value:<18}",
          "  ".join(f"p(1,{x:g})={v:.3e}" for x, v in zip(xs, values)))

# %% [markdown]
# The rescaled tail |x|^(1+2α) p(1, x) settles on the constant
# Γ(1+2α) sin(πα) / π.  Watching it converge is a quick sanity check.

# %%
for alpha in (0.25, 0.75):
    spec = kernels.KernelSpec.for_alpha(alpha)
    seq = kernels.tail_limit_sequence(spec)
    print(f"alpha={alpha}: rescaled tails {np.round(seq, 5)} -> {kernels.tail_constant(alpha):.5f}")

# %% [markdown]
# ## The comparability constant
#
# Every kernel with α < 1 is squeezed between multiples of
# q(t, x) = t / (t^(1/2α + 1) + |x|^(1 + 2α)).  The smallest such multiple B is
# measured on a probe grid.

# %%
for alpha in (0.25, 0.5, 0.75):
    report = kernels.verify_p3(kernels.KernelSpec.for_alpha(alpha), kernels.default_probes())
    print(f"alpha={alpha}: measured B = {report.measured_B:.4f}")

# %% [markdown]
# ## A step under the flow
#
# The Heaviside step spreads into the kernel's CDF.  Because the kernel has a
# power tail, the left side of the step picks up mass like |x|^(-2α) at once.

# %%
grid = GridSpec(1024.0, 2 ** 14)
step = heaviside_datum(grid)
for alpha in (0.5, 0.75):
    out = apply_semigroup_spectral(step, 1.0, alpha)
    probe = [-100.0, -10.0, 0.0, 10.0]
    idx = [int(np.argmin(np.abs(grid.x - x))) for x in probe]
    print(f"alpha={alpha}: T_1 H at x={probe}:", np.round(out.values[idx], 6))

# %% [markdown]
# ## The canonical decaying datum
#
# Time-averaging the kernel over s in [1, 2] gives a smooth, even bump with the
# same power tail.  It is the default initial condition for the front studies.

# %%
u0 = canonical_decaying_datum(0.5, grid)
print("peak", round(float(u0.values.max()), 6), "(ln 2 / pi =", round(np.log(2) / np.pi, 6), ")")
print("right tail model:", u0.right_tail.describe())
