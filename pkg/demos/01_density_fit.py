# %% [markdown]
# # Greedy kernel mixtures on a trimodal target
#
# Fit three unit-bandwidth kernels to a mixture with modes at -6, 0 and 6,
# once per objective, and compare how many modes each fit reaches.

# %%
import numpy as np

from subgreedy.data import gaussian_mixture_target
from subgreedy.density_fit import FitConfig, greedy_fit
from subgreedy.divergence import DEFAULT_GRID, f_divergence
from subgreedy.kde import mixture_on_grid

target = gaussian_mixture_target([-6.0, 0.0, 6.0], [1.0] * 3, [1 / 3] * 3)

# %%
for objective in ("surrogate", "point_estimate", "exact"):
    mix, steps = greedy_fit(target, FitConfig("reverse_kl", 3, 1.0, objective))
    fit = mixture_on_grid(mix, DEFAULT_GRID)
    centers = np.round([s.center[0] for s in steps], 3)
    print(f"{objective:>15}: centers {centers.tolist()}, "
          f"reverse KL {f_divergence(target, fit, 'reverse_kl'):.4g}, "
          f"forward KL {f_divergence(target, fit, 'forward_kl'):.4g}")

# %% [markdown]
# Each objective starts at the center mode and then places one kernel on
# each side. The surrogate and exact gains land on the outer modes. The point
# estimate overshoots them to about +-7.4. The step log records the objective
# value and the divergence after every addition. Small negative divergences
# come from quadrature error on a nearly exact fit.

# %%
_, steps = greedy_fit(target, FitConfig("reverse_kl", 3, 1.0, "exact"))
for i, s in enumerate(steps, 1):
    print(f"step {i}: center {s.center[0]:+.2f}, divergence {s.divergence:.4g}")
