# %% [markdown]
# # Diverse ensembles on two moons
#
# Train eleven-member ensembles with and without the repulsion term and
# compare accuracy and epistemic uncertainty near and far from the data.

# %%
import numpy as np

from subgreedy.data import eval_grid, two_moons
from subgreedy.ensemble import DiversityConfig, ensemble_predict, train_greedy_ensemble
from subgreedy.nn import TrainConfig
from subgreedy.uncertainty import epistemic_mi

train, test = two_moons(300, 0.3, seed=0), two_moons(1000, 0.3, seed=1000)
mu, sd = train.features.mean(axis=0), train.features.std(axis=0)
grid = eval_grid([[m - 6 * s, m + 6 * s] for m, s in zip(mu, sd)], 40)
far = np.linalg.norm((grid - mu) / sd, axis=1) >= 3
cfg = TrainConfig(learning_rate=0.05, epochs=100)

# %%
ensembles = {lam: train_greedy_ensemble(train.features, train.labels, cfg, DiversityConfig(lam, 11), seed=0)
             for lam in (0.0, 10.0)}
for lam, ens in ensembles.items():
    mean, _ = ensemble_predict(ens, test.features)
    _, stack = ensemble_predict(ens, grid)
    mi = epistemic_mi(stack)
    print(f"lambda {lam:>4}: accuracy {np.mean(mean.argmax(1) == test.labels):.3f}, "
          f"MI near data {mi[~far].mean():.4f}, MI far field {mi[far].mean():.4f}")

# %% [markdown]
# A coarse text map of the mutual information for the diverse ensemble.
# Darker characters mark higher disagreement between members.

# %%
_, stack = ensemble_predict(ensembles[10.0], grid)
mi = epistemic_mi(stack).reshape(40, 40)
shades = " .:-=+*#%@"
for row in mi.T[::-2]:  # rows are y, top row is largest y
    print("".join(shades[min(int(v / np.log(2) * 10), 9)] for v in row))
