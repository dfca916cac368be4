"""Risk-sensitive mean-field game solver toolkit.

Scalar-state solvers for the coupled backward (risk-sensitive HJB) /
forward (Fokker-Planck) system, the equivalent robust (Isaacs)
formulation, scalar Riccati reductions with closed forms, interacting
particle simulation with measure diagnostics, and structural uniqueness
checks.
"""

__version__ = "0.1.0"

from .kernels import BACKEND as kernel_backend  # noqa: F401
from .model import (CouplingFeatures, DensityTrajectory, Grid1D, ModelSpec,  # noqa: F401
                    TimeGrid, ValueTrajectory, cfl_dt_bound, density_moments,
                    sample_initial_density, validate_model)
from .riccati import (FiniteTimeBlowup, LQSpec, RiccatiSolution,  # noqa: F401
                      closed_form_z_constant, lq_feedback, lq_value,
                      solve_offset_ode, solve_riccati_scalar)
from .hjb import (CFLViolation, HJBSolveOptions, NonFiniteValue,  # noqa: F401
                  RobustSolution, solve_hjb, solve_hji_robust)
from .fpk import MassDrift, solve_fpk, stationarity_residual  # noqa: F401
from .mfg import (BVPClass, FixedPointReport, VerificationReport,  # noqa: F401
                  bvp_shooting_solution, detect_bvp_solvability, solve_mfg,
                  verify_equilibrium)
from .particles import (ConvergenceReport, ParticleEnsemble,  # noqa: F401
                        SimulationFault, convergence_study,
                        estimate_risk_sensitive_cost, step_particles,
                        wasserstein1)
from .analysis import (HamiltonianSpec, MonotonicityReport,  # noqa: F401
                       check_uniqueness_risk_neutral,
                       check_uniqueness_risk_sensitive,
                       mean_variance_expansion_check)
