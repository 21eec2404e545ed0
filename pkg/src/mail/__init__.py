"""Model-based adversarial imitation learning on small, exactly solvable problems."""
from .baselines import BcConfig, MfConfig, mf_policy_gradient, train_bc, train_mf
from .discriminator import Discriminator
from .envs import (LinearEnv, TabularMdp, generate_expert_dataset, grid_mdp, linear2d,
                   lqr_expert, make_env, occupancy, optimal_discriminator)
from .forward_model import ForwardModel
from .nn import AdamState, Mlp, adam_step
from .numerics import Rng, matmul
from .policy import GaussianPolicy, PolicySample
from .replay import ExpertDataset, ReplayBuffer, sample_discriminator_batch, sample_model_batch
from .trainer import (MailConfig, MailTrainer, Reference, Trajectory, bptt_gradient,
                      collect_trajectory, evaluate, train)

__version__ = "0.1.0"
