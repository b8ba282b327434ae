"""Backscattering for the Schrödinger operator with a complex-shifted wave number.

Forward Lippmann-Schwinger solver, far-field amplitudes, spectral estimates of
the scattered correction, a numerical contraction certificate, and Born and
fixed-point reconstruction from backscattering data.
"""

__version__ = "0.1.0"

from .errors import (BackscatterError, ConfigError, ConvergenceError, CoverageError, DivergenceError,
                     EwaldSingularityError, GridError, QuadratureError, SupportError)
from .core_types import (FarFieldDataset, GridSpec, PotentialGrid, ScatteringSolution, SpectralField,
                         WaveParams, fibonacci_sphere, grid_l1_norm, grid_l2_norm, make_bump_potential,
                         make_gaussian_potential, make_radial_well)
from .forward_solver import GridResolutionWarning, apply_B, green_kernel, solve_scattering
from .far_field import (amplitude, amplitudes, backscattering_dataset, fixed_incident_dataset,
                        full_dataset, lemma1_residual)
from .spectral import (epsilon_hat, epsilon_hat_l1, epsilon_spectral_route, fourier_forward,
                       fourier_inverse, green_kernel_hat, t_integral)
from .certificate import (bound_integral_I, bound_integrand_closed_form, contraction_certificate,
                          orthogonality_residual)
from .inversion import born_inversion, fixed_point_refine, uniqueness_experiment
from .datatools import add_noise, radius_of_compactness, tail_contribution, truncation_experiment
