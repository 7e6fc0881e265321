"""Bayesian limited-data tomography and the spatial resolution of the MAP estimate."""

__version__ = "0.1.0"

from .beams import (Beam, BeamSet, SensitivityMatrix, assemble_sensitivity, orthogonal_array,
                    parallel_projection, project, random_beams)
from .errors import ConfigError, DegeneracyError, DomainError, NumericalError, UnsupportedPriorError
from .grid import Domain, Field, Grid, basis_eval, field_eval, gaussian_phantom
from .inference import (PosteriorResult, ResolutionMatrix, augmented_pseudoinverse, map_via_lsq,
                        posterior, resolution_matrix, sample_noise, sample_prior)
from .priors import (GaussianPrior, NoiseModel, augmented_tikhonov_covariance, augmented_tikhonov_prior,
                     laplacian_operator, nullspace_basis, squared_exponential_prior, tikhonov_prior)
from .resolution import (MapCovariance, PriorPredictive, ResolutionField, SpectralColumn, camera_covariance,
                         cutoff_frequency, map_covariance, node_resolution, prior_predictive,
                         resolution_field, spectral_column, tikhonov_limit_covariance)
