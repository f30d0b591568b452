"""Front propagation for nonlocal KPP equations with periodic coefficients."""

from .asymptotics import (FrontRateRegressor, FrontTrace, HopfColeTransformer, RateFit,
                          RescaledProfile, dichotomy, fit_front_rate, front_trace, hopf_cole_rescale,
                          inner_average, inner_ratio, level_set_radius, limit_profile, outer_sup,
                          profile_deviation)
from .bounds import (AccEstimate, BarrierSet, acc_constant, barrier_constants, barrier_residuals,
                     calibrate_barriers, sandwich_check)
from .discretize import (Field, LineGrid, OperatorMatrix, TorusGrid, apply_line_operator,
                         assemble_line_operator, assemble_torus_operator, periodized_kernel,
                         quadratic_form, required_rmax)
from .evolve import Stepper, Trajectory, solve_cauchy, step
from .exceptions import *  # noqa: F401,F403
from .model import (InitialData, KernelSpec, ProblemSpec, ReactionSpec, ValidationReport,
                    eval_kernel, eval_reaction, validate_assumptions)
from .spectral import EigenPair, PrincipalEigensolver, eigen_residual, principal_eigenpair
from .steady import MonotoneSteadyState, SteadyState, positive_steady_state, steady_residual, weak_mean

__version__ = "0.1.0"
