# %% [markdown]
# ### Pathwise vs score-function gradients
#
# Both estimate the gradient of E[log D(s, a)] for a ~ pi(.|s). The pathwise
# one differentiates through a = mu + xi sigma; the score-function one weights
# d log pi / d theta by log D. Same mean, very different spread.

# %%
import numpy as np

from mail.baselines import pathwise_samples, reinforce_samples
from mail.gradcheck import random_models
from mail.numerics import Rng

rng = Rng(3)
policy, discr, _ = random_models(rng)
s = rng.normal(4)
rep = lambda A: np.repeat(s[None], len(A), 0)


def g_value(A):
    return np.log(discr.prob(rep(A), A))


def g_grad(A):
    d, _, d_a = discr.grads(rep(A), A)
    return d_a / d[:, None]


# %%
xi = rng.normal((50_000, 2))
pw = pathwise_samples(policy, s, g_grad, xi)
rf = reinforce_samples(policy, s, g_value, xi)
live = rf.var(0) > 0
se = np.sqrt((pw.var(0) + rf.var(0))[live] / len(xi))
z = np.abs(pw.mean(0) - rf.mean(0))[live] / se
print(f"largest mean gap in standard errors: {z.max():.2f}")
print(f"variance ratio (score / pathwise): median {np.median(rf.var(0)[live] / pw.var(0)[live]):.1f}, "
      f"min {np.min(rf.var(0)[live] / pw.var(0)[live]):.1f}")
