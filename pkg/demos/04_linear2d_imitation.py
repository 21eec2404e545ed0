# %% [markdown]
# ### Imitating an LQR expert on a 2D double integrator
#
# MAIL, behavioral cloning and the model-free adversarial baseline, scored on
# the hidden true reward: 0 is the do-nothing policy, 1 is the expert.
# Runs in well under a minute.

# %%
import numpy as np

from mail.baselines import BcConfig, MfConfig, train_bc, train_mf
from mail.envs import generate_expert_dataset, linear2d, lqr_expert
from mail.numerics import Rng
from mail.policy import GaussianPolicy
from mail.trainer import MailConfig, Reference, evaluate, train

env = linear2d()
K = lqr_expert(env)
ref = Reference.compute(env, K)
print(f"expert return {ref.expert_return:.2f}, zero-action return {ref.passive_return:.2f}")
expert = generate_expert_dataset(env, K, 25, Rng(1000))

# %%
def curve(rows, every=10):
    return [(r["env_transitions_total"], ref.score(r["mean_true_return"]))
            for r in rows if r["iteration"] % every == 0]


mail = train(MailConfig(budget_traj=200), env, expert, Rng(0))
for n, sc in curve(mail.rows)[::2]:
    print(f"MAIL  {n:>6} transitions  score {sc:7.3f}")

# %%
mf = train_mf(MfConfig(budget_traj=1000), env, expert, Rng(0))
for n, sc in curve(mf.rows)[::10]:
    print(f"MF    {n:>6} transitions  score {sc:7.3f}")

# %% [markdown]
# BC never touches the environment. Here the expert is linear, so even four
# demonstrations are enough for it.

# %%
for n_traj in (25, 4):
    pol = GaussianPolicy.build(4, 2, (32, 32), Rng(0))
    train_bc(pol, expert.subset(n_traj), BcConfig(), Rng(0))
    print(f"BC on {n_traj:>2} trajectories: score {ref.score(evaluate(pol, env, 100, Rng(99))[0]):.3f}")

# %% [markdown]
# At equilibrium the discriminator cannot tell the two apart.

# %%
print("mean D on policy data, last 10 iterations:",
      round(float(np.mean([r["mean_D_policy"] for r in mail.rows[-10:]])), 3))
