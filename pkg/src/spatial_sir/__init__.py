"""Spatial SIR epidemics: exact simulation, moment closure, tensor emulators and inference."""

from .artifact import load_artifact, save_artifact
from .closure import (ClosureSystem, MomentState, MomentTrajectory, fadeout_check, forward_rhs,
                      integrate_forward, nonspatial_rhs)
from .emulator import (CovEmulator, DesignSpace, ForwardRunner, MeanEmulator, build_emulators,
                       cross_validate, latin_hypercube)
from .exceptions import (CholeskyError, IntegrationError, InvalidArgumentError, OutOfDesignWarning,
                         UndefinedStatisticError, UnsupportedFormatError)
from .inference import (EmulatorSIRModel, FitResult, MCMCConfig, ObservedData, bspline_basis,
                        discrepancy, dram_block_update, latent_susceptibles, nb_loglik, run_mcmc)
from .kriging import NearestNeighborKriging, krige_scalar, matern
from .lattice import (BetaField, EpidemicState, Lattice, ParameterMap, Theta, beta_from_field,
                      build_grid_lattice, event_rates, initial_state, infection_matrix)
from .ssa import ensemble_moments, gillespie_run, sample_observations
from .tensor import GramAccumulator, fold, hosvd, nmode_product, top_eigenvectors, unfold

__version__ = "0.1.0"
