"""Desk-scale score distillation lab: SDS, VSD, DDS and reward-weighted
variants over a toy conditional diffusion model."""

from .schedule import NoiseSchedule, add_noise, make_schedule
from .denoiser import (AdapterDenoiser, Condition, GuidanceConfig, MlpDenoiser,
                       class_condition, denoise_steps, diffusion_loss_and_grad,
                       guided_epsilon, load_denoiser, null_condition,
                       save_denoiser)
from .data import (MixtureSpec, ToyDataset, TrainConfig, adapter_update,
                   bimodal_grid_spec, bimodal_ring_spec, generate_dataset, grid_shape_spec,
                   ring_mixture_spec,
                   train_denoiser)
from .rewards import (ClassifierReward, CompositeReward, OracleLikelihoodMetric,
                      RewardModel, SmoothnessReward, evaluate,
                      train_classifier_reward)
from .render import IdentityRenderer, PatchRenderer, View, load_theta, save_theta
from .weighting import WeightScheme, weights_from_scores
from .distill import (CandidateSet, DistillConfig, GradientEstimate, METHODS,
                      PRESETS, ParticleSet, dds_grad, optimize, reward_dds_grad,
                      reward_sds_grad, reward_vsd_grad, score_candidates,
                      sds_grad, vsd_grad)

__version__ = "0.1.0"
