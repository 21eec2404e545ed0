# %% [markdown]
# ### The optimal discriminator on a small grid
#
# On a tabular MDP the best classifier between learner and expert pairs is
# known exactly: D*(s,a) = 1 / (1 + phi psi), with phi the action ratio and
# psi the ratio of discounted state occupancies. Train a network on samples
# and compare.

# %%
import numpy as np

from mail.discriminator import fit_tabular
from mail.envs import grid_mdp, occupancy, optimal_discriminator
from mail.numerics import Rng

mdp = grid_mdp()
d_pi, d_e = occupancy(mdp, mdp.policy), occupancy(mdp, mdp.expert)
ratio, joint = optimal_discriminator(mdp)
print("occupancy sums:", d_pi.sum(), d_e.sum())
print("ratio vs joint form, max gap:", np.nanmax(np.abs(ratio - joint)))

# %% [markdown]
# The expert drifts toward the bottom-right corner, so the learner dominates the top-left.

# %%
print("state occupancy ratio psi = d_E / d_pi:")
print(np.round((d_e / d_pi).reshape(5, 5), 2))

# %%
_, table = fit_tabular(mdp, 10**6, Rng(0))
visit = 0.5 * (d_pi[:, None] * mdp.policy + d_e[:, None] * mdp.expert)
mask = visit >= 1e-3
err = np.abs(table - ratio)[mask]
print(f"{mask.sum()} pairs checked; max |D - D*| = {err.max():.4f}, mean = {err.mean():.4f}")
