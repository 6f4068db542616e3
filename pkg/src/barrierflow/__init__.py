"""Interior Riemannian subgradient methods over barrier geometries.

The package provides Legendre barrier kernels, the induced projected metric
on affine or nonlinear constraint manifolds, the Hessian-barrier and mirror
schemes, an Euler integrator for the continuous flow, and diagnostics that
separate genuine KKT points from spurious equilibria.
"""
from .diagnostics import (PerturbedProblem, StationarityReport, classify, complementarity_check,
                          kkt_residual, perturb, perturbed_residual_system, scan_stable_roots,
                          slack_sign_check_psd)
from .errors import *  # noqa: F401,F403
from .flow import FlowConfig, FlowTrace, escape_experiment, integrate, omega_limit_estimate
from .geometry import (AffineManifold, NonlinearManifold, OpenRegion, project_tangent, retract,
                       search_direction, sphere)
from .kernels import KERNEL_IDS, BarrierKernel, make_kernel
from .oracles import NoiseSource, Problem, REGISTRY, registry_get
from .solvers import (SolverConfig, StepSchedule, Trace, mirror_step, rhb_step, run,
                      safe_step_threshold)

__version__ = "0.1.0"
