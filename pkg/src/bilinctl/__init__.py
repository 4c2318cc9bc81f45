"""Finite-sample identification and robust LMI-based control of bilinear systems.

Pipeline: collect i.i.d. data under constant inputs, estimate the system by
ordinary least squares, certify the estimation error with finite-sample bounds
(a priori, data-dependent, or ellipsoidal), convert the bounds into a quadratic
residual envelope over an input box, and synthesize a state-feedback controller
with a certified region of attraction by semidefinite programming.
"""

from .bounds import (EllipsoidBoundSet, SpectralBoundSet, a_priori_bounds, burn_in_a_priori,
                     burn_in_data_dependent, check_ellipsoid_coverage, check_spectral_coverage,
                     data_dependent_bounds, ellipsoidal_bounds)
from .collect import CollectionPlan, ExperimentDataset, collect, validate_assumption
from .identify import EstimateSet, GramInfo, RankDeficientError, assemble, gram, identify, ols_affine, ols_linear
from .lifting import (LiftingSpec, empirical_subgaussian_check, lift, lift_batch,
                      pendulum_lifted_system, pendulum_lifting, pendulum_step, variance_proxy_bound)
from .residual import (InputBox, ResidualQuadBound, box_extremes, overestimate_norm,
                       qdelta_ellipsoidal, qdelta_individual)
from .sdp import CvxpySdpSolver, SdpProblem
from .synthesis import (ControllerSolution, SingularGainError, StateRegion, SynthesisOptions,
                        control_input, region_from_norm_bound, roa_membership, roa_report,
                        simulate_closed_loop, synthesize)
from .systems import (BilinearSystem, DimensionError, NoiseSpec, StateSamplerSpec,
                      academic_system, cstr_system, kron_input_state, residual, sample_noise,
                      sample_states, step, substream)

__version__ = "0.1.0"
