from .kse import KseConfig, KseIntegrator, initial_condition, sample_config, solve_kse
from .kolmogorov import (
    KolmogorovConfig,
    gaussian_random_vorticity,
    solve_kolmogorov,
    vorticity_to_velocity,
)
from .swe import SweConfig, solve_swe_flood, tilted_dem
from .datasets import generate_dataset, load_dataset, read_manifest, write_manifest

__all__ = [
    "KseConfig",
    "KseIntegrator",
    "KolmogorovConfig",
    "SweConfig",
    "gaussian_random_vorticity",
    "generate_dataset",
    "initial_condition",
    "load_dataset",
    "read_manifest",
    "sample_config",
    "solve_kse",
    "solve_kolmogorov",
    "solve_swe_flood",
    "tilted_dem",
    "vorticity_to_velocity",
    "write_manifest",
]
