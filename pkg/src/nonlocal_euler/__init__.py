"""Numerical lab for the 1D nonlocal Euler system with relaxation.

    rho_t + (rho Q*u)_x = 0
    u_t + u u_x = rho (Q*u - u)

on a periodic grid, with threshold classification, bound diagnostics,
characteristic tracing, a fixed-point iteration and a hyperbolic-scaling study.
"""

from .characteristics import (CharTrace, consistency_check, integrate_characteristic,
                              integrate_characteristics, riccati_blowup_time,
                              riccati_closed_form)
from .convolution import (DiscreteKernel, StencilTooWide, UnderResolvedKernel, convolve,
                          convolve_direct, convolve_fast, discretize_kernel)
from .grid import Grid1D, State, derivative, sample_initial_data, sobolev_energy
from .kernel import (KernelHypothesisError, KernelProps, KernelSpec, KernelSpecError,
                     eval_kernel, rescale_kernel, validate_kernel)
from .picard import PicardConfig, picard_solve, picard_step
from .solver import BlowupEvent, SchemeConfig, Trajectory, run, step
from .threshold import (DiagnosticsReport, ThresholdVerdict, classify, classify_burgers,
                        classify_limit, classify_rescaled, predict_blowup_upper_bound,
                        verify_bounds)

__version__ = "0.1.0"

__all__ = [
    "BlowupEvent", "CharTrace", "DiagnosticsReport", "DiscreteKernel", "Grid1D",
    "KernelHypothesisError", "KernelProps", "KernelSpec", "KernelSpecError",
    "PicardConfig", "SchemeConfig", "State", "StencilTooWide", "ThresholdVerdict",
    "Trajectory", "UnderResolvedKernel", "classify", "classify_burgers", "classify_limit",
    "classify_rescaled", "consistency_check", "convolve", "convolve_direct",
    "convolve_fast", "derivative", "discretize_kernel", "eval_kernel",
    "integrate_characteristic", "integrate_characteristics", "picard_solve", "picard_step",
    "predict_blowup_upper_bound", "rescale_kernel", "riccati_blowup_time",
    "riccati_closed_form", "run", "sample_initial_data", "sobolev_energy", "step",
    "validate_kernel", "verify_bounds",
]
