from .schedule import (
    Curriculum,
    DEFAULT_TIME_POINTS,
    NoiseSchedule,
    curriculum_n,
    default_huber_c,
    index_weights,
    loss_weight,
    noise_injection_scale,
    pseudo_huber,
    sample_index,
    skip_out_coeffs,
    timestep,
    timesteps,
)
from .normalizer import RangeNormalizer
from .denoiser import (
    DenoiserBundle,
    DenoiserHyper,
    ToyDenoiser,
    load_denoiser,
    save_denoiser,
    time_embedding,
)
from .training import (
    CtConfig,
    consistency_pair_loss,
    ct_loss_refiner,
    ct_loss_residual,
    train_ct,
)
from .sampling import (
    diffpcno_step,
    refiner_step,
    sample_multistep,
    sample_residual,
    stochastic_rollout,
    uncertainty_ensemble,
)

__all__ = [
    "Curriculum",
    "CtConfig",
    "DEFAULT_TIME_POINTS",
    "DenoiserBundle",
    "DenoiserHyper",
    "NoiseSchedule",
    "RangeNormalizer",
    "ToyDenoiser",
    "consistency_pair_loss",
    "ct_loss_refiner",
    "ct_loss_residual",
    "curriculum_n",
    "default_huber_c",
    "diffpcno_step",
    "index_weights",
    "load_denoiser",
    "loss_weight",
    "noise_injection_scale",
    "pseudo_huber",
    "refiner_step",
    "sample_index",
    "sample_multistep",
    "sample_residual",
    "save_denoiser",
    "skip_out_coeffs",
    "stochastic_rollout",
    "time_embedding",
    "timestep",
    "timesteps",
    "train_ct",
    "uncertainty_ensemble",
]
