"""Finite-rank Markovian lifts of matrix-valued Volterra processes.

Simulators (exact Gaussian OU lift, squared lift, PSD jump/Hawkes lift,
covariance-modulated log price) paired with their analytic Laplace and
characteristic transforms (closed forms and matrix Riccati solvers), plus
kernel tooling (fractional fits, grid convolution, resolvents) and a
reproducible parallel Monte Carlo engine.
"""

from .measures import (
    AtomicMatrixMeasure,
    TimeGrid,
    eval_kernel,
    semigroup_apply,
)
from .fractional import FractionalKernelSpec, fit_fractional_measure
from .kernelops import convolve, resolvent_second_kind
from .ou import OULiftState, StepOperator, exact_step, forward_curve, project_volterra_ou
from .wishart import (
    WishartTransformQuery,
    affine_transform_wishart,
    closed_form_laplace,
    simulate_wishart,
)
from .jumps import (
    JumpLiftState,
    JumpMeasureSpec,
    drift_flow_step,
    hawkes_jump_spec,
    intensity,
    simulate_jump_path,
    volterra_projection,
)
from .riccati import (
    laplace_transform_jump,
    nonlinearity_R,
    solve_joint_riccati_heston,
    solve_lift_riccati_jump,
    solve_volterra_riccati_jump,
)
from .heston import HestonModelSpec, char_function, fourier_price_call
from .mc import Estimate, antithetic_wrap, collect_paths, path_rng, run_paths

__all__ = [
    "AtomicMatrixMeasure",
    "TimeGrid",
    "eval_kernel",
    "semigroup_apply",
    "FractionalKernelSpec",
    "fit_fractional_measure",
    "convolve",
    "resolvent_second_kind",
    "OULiftState",
    "StepOperator",
    "exact_step",
    "forward_curve",
    "project_volterra_ou",
    "WishartTransformQuery",
    "affine_transform_wishart",
    "closed_form_laplace",
    "simulate_wishart",
    "JumpLiftState",
    "JumpMeasureSpec",
    "drift_flow_step",
    "hawkes_jump_spec",
    "intensity",
    "simulate_jump_path",
    "volterra_projection",
    "laplace_transform_jump",
    "nonlinearity_R",
    "solve_joint_riccati_heston",
    "solve_lift_riccati_jump",
    "solve_volterra_riccati_jump",
    "HestonModelSpec",
    "char_function",
    "fourier_price_call",
    "Estimate",
    "antithetic_wrap",
    "collect_paths",
    "path_rng",
    "run_paths",
    "__version__",
]

__version__ = "0.1.0"
