"""spdelab: moment behaviour of stochastic heat equations on an interval.

Library layout:
    domain      problem data (domain, noise, nonlinearity, initial profiles)
    kernels     absorbing/reflecting heat kernels, dual representations
    bounds      kernel-estimate checks and the singular renewal solver
    volterra    deterministic moment-equation solvers, rates, thresholds
    simulate    Euler-Maruyama path ensembles, reproducible seeding
    estimators  sample moments, energy, rate fits, noise-level scans
    cli         experiment runner (verify-kernels, bounds, solve, simulate,
                threshold) writing CSV tables, figures and a run manifest
"""

__version__ = "0.1.0"

from .domain import (DIRICHLET, NEUMANN, DomainSpec, InitialCondition, KernelQuery,
                     NoiseSpec, SigmaSpec, SpectralBasis, bump, constant, ground_mode)
from .errors import (MomentOverflowError, NoThresholdError, ResolutionError, WindowError)
from .kernels import (AccuracyError, dirichlet_kernel, gaussian_kernel, green_apply,
                      kernel_grid, neumann_kernel)
from .bounds import (BoundReport, RenewalProblem, RenewalSolution, mittag_leffler_half,
                     renewal_solve)
from .volterra import (MomentProblem, RateFit, ThresholdBracket, VolterraSolution,
                       critical_lambda, diagonal_trajectory, lyapunov_rate, picard_solve,
                       solve_second_moment, solve_two_point, spectral_radius_threshold,
                       stable_dt, validate_covariance)
from .simulate import (EnsembleAccumulators, PathResult, PathState, SimConfig, em_step,
                       run_ensemble, run_path)
from .estimators import (EnergyTrajectory, MomentTrajectory, RateEstimate,
                         energy_estimate, energy_of_solution, lambda_scan,
                         moment_estimate, rate_fit)
