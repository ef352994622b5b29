"""Report arithmetic: HQ ratios, Fisher intervals for pseudo-vs-actual correlation, cost accounting.

    python3 demos/04_reporting.py
"""
from datetime import timedelta

import numpy as np

from ttsops.loop import cost_account, format_duration
from ttsops.metrics import fisher_ci, format_ratio, mst_cost, pearson_r

print("1157 of 2719 speakers:", format_ratio(1157, 2719))
for r in (0.81, 0.88):
    lo, hi = fisher_ci(r, 200)
    print(f"r = {r} over 200 speakers -> 95% CI [{lo:.2f}, {hi:.2f}]")

# the interval narrows with more speakers
for n in (20, 200, 2000):
    lo, hi = fisher_ci(0.81, n)
    print(f"  n = {n:>4}: width {hi - lo:.3f}")

rng = np.random.default_rng(0)
actual = rng.uniform(2, 4.5, 200)
pseudo = actual + rng.normal(0, 0.3, 200)
r = pearson_r(pseudo, actual)
print(f"simulated pseudo vs actual MOS: r = {r:.3f}, CI {tuple(round(v, 3) for v in fisher_ci(r, 200))}")

# speaker diversity: total MST edge length over speaker embeddings
print("MST cost of 50 random 16-d speakers:", round(mst_cost(rng.normal(size=(50, 16))), 2))

total = cost_account(train_time=timedelta(hours=1, minutes=26, seconds=27),
                     eval_time=timedelta(hours=1, minutes=11, seconds=36),
                     regress_time=timedelta(minutes=9, seconds=7))
print("2 x training + evaluation + regression =", format_duration(total))
