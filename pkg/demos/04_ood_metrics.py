# %% [markdown]
# # Scoring out-of-distribution inputs by member disagreement
#
# Use epistemic mutual information as the OOD score. In-distribution inputs
# are the two-moons test split and OOD inputs are uniform noise over a box
# six standard deviations wide on either side of the training mean.

# %%
import numpy as np

from subgreedy.data import synthetic_ood, two_moons
from subgreedy.ensemble import DiversityConfig, ensemble_predict, train_greedy_ensemble
from subgreedy.metrics import MetricReport, adaptive_calibration_error
from subgreedy.nn import TrainConfig
from subgreedy.uncertainty import epistemic_mi

train, test = two_moons(300, 0.3, seed=0), two_moons(1000, 0.3, seed=1000)
mu, sd = train.features.mean(axis=0), train.features.std(axis=0)
ood = mu + synthetic_ood("uniform_noise", 1000, 2, seed=0, low=-6, high=6) * sd
cfg = TrainConfig(learning_rate=0.05, epochs=100)

# %%
for lam in (0.0, 10.0):
    ens = train_greedy_ensemble(train.features, train.labels, cfg, DiversityConfig(lam, 11), seed=0)
    mean, id_stack = ensemble_predict(ens, test.features)
    _, ood_stack = ensemble_predict(ens, ood)
    correct = mean.argmax(1) == test.labels
    report = MetricReport.from_scores("uniform_noise", epistemic_mi(id_stack), epistemic_mi(ood_stack),
                                      ace=adaptive_calibration_error(mean.max(1), correct),
                                      accuracy=float(correct.mean()))
    print(f"lambda {lam:>4}: " + ", ".join(f"{k} {v:.3f}" for k, v in report.to_dict().items()
                                          if isinstance(v, float)))
