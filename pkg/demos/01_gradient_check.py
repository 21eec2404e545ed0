# %% [markdown]
# ### Checking the backward-in-time policy gradient
#
# Freeze the noise of one rollout through the learned model. The objective
# is then a deterministic function of the policy parameters, so central
# differences should agree with the recursion to many digits.

# %%
import numpy as np

from mail.gradcheck import fd_gradient, random_models, rel_err
from mail.numerics import Rng
from mail.trainer import bptt_gradient, model_rollout, surrogate_objective

rng = Rng(0)
policy, discr, fwd = random_models(rng)
s0 = rng.normal(4)
noise = rng.normal((10, 2))

# %%
traj = model_rollout(policy, fwd, s0, noise)
g, J = bptt_gradient(traj, policy, discr, fwd, gamma=0.9)
fd = fd_gradient(lambda th: surrogate_objective(th, policy, discr, fwd, s0, noise, 0.9),
                 policy.get_params())
print(f"J = {J:.6f}, {policy.n_params} parameters")
print(f"relative error vs central differences: {rel_err(g, fd):.2e}")

# %% [markdown]
# Larger discounts push more weight onto late steps; the agreement holds for all of them.

# %%
for gamma in (0.0, 0.5, 0.9, 0.99):
    g, _ = bptt_gradient(traj, policy, discr, fwd, gamma)
    fd = fd_gradient(lambda th: surrogate_objective(th, policy, discr, fwd, s0, noise, gamma),
                     policy.get_params())
    print(f"gamma={gamma:<5} |g|={np.linalg.norm(g):.4f} rel err={rel_err(g, fd):.1e}")
