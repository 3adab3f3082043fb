"""Coalescing heavy-tailed random walks and their aged-path webs."""

from .engine import (EngineConfig, ResourceError, StartSet, WalkSystem, compute_ages,
                     dyadic_grid, full_occupancy, lattice_grid, run_coalescing,
                     run_dyadic_hierarchy, run_theta_grid, simulate, theta_grid)
from .io import ConfigError, RunConfig, parse_config, read_paths, write_paths
from .metrics import MetricOptions, hausdorff, metric_d, metric_d1, metric_rho, modulus
from .operators import Rectangle, filter_age, project, restrict, restrict_all, translate
from .paths import AgedPath, PathCollection
from .rng import RngStream
from .sampling import (CalibrationError, ConfigurationError, IncrementLaw, StableLaw,
                       build_increment_law, calibrate_tail_constant, sample_increment,
                       sample_stable)

__version__ = "0.1.0"
