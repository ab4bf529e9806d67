"""How fast does the chain forget where it started?

Starts five elements in the system (theta = 2, mu = 1), tabulates the law of
X(t) at a few times next to the equilibrium law, then compares the exact
distances to equilibrium with their guaranteed bounds.
"""
import numpy as np

from unseen.bounds import gini_bound, kolmogorov_bound, moment_bound
from unseen.chain import ChainParams, StateDistribution, equilibrium, transition_matrix

params = ChainParams.from_theta(2.0, 1.0)
start = StateDistribution.point(5)
pi = equilibrium(params).pmf(np.arange(10))

print("state  " + "  ".join(f"t={t:<5}" for t in (0.1, 0.5, 2.0)) + "  equilibrium")
rows = {t: transition_matrix(params, t, 5, 9)[0][5] for t in (0.1, 0.5, 2.0)}
for y in range(10):
    print(f"{y:5d}  " + "  ".join(f"{rows[t][y]:.5f}" for t in rows) + f"  {pi[y]:.5f}")

print("\n    t   kolmogorov (exact <= bound)   gini (exact <= bound)   mean (exact <= bound)")
for t in (0.0, 0.25, 1.0, 2.0, 4.0):
    k, g, m = kolmogorov_bound(params, start, t), gini_bound(params, start, t), moment_bound(params, start, 1, t)
    print(f"{t:5.2f}   {k.exact:.3e} <= {k.bound:.3e}     {g.exact:.3e} <= {g.bound:.3e}"
          f"   {m.exact:.3e} <= {m.bound:.3e}")
