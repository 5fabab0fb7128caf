# %% [markdown]
# # A conformally symmetric metric that is not locally symmetric
#
# The surface z = x^a (here a = -2) is not a quadric, so its centroaffine
# connection has non-parallel Ricci tensor. The metric built from it still
# has ∇W = 0, while ∇R stays of order one.

# %%
import numpy as np

from confsym import curvature as CV
from confsym import pipeline as P

cfg = P.RunConfig(fixture="zpow", params={"a": -2.0}, n=6, epsilon=-1, gamma="+-")
sd, sol, g = P.build_metric(cfg)
pts = P.sample_points(cfg, g, sd)
cp = CV.curvature_at(g, pts)
print(f"max |nabla W| = {np.abs(cp.DW).max():.2e}")
print(f"max |nabla R| = {np.abs(cp.DR).max():.2f}")

# %% [markdown]
# The rank of W on 2-forms is one at every sample and the sign matches ε.

# %%
wr = CV.weyl_rank_batch(cp.W, cp.g)
print("ranks:", set(wr.rank.tolist()), "signs:", set(wr.epsilon.tolist()))

# %% [markdown]
# The full report carries the two equivalence verdicts as flags.

# %%
result = P.run_pipeline(cfg)
print(result.status, result.flags)
