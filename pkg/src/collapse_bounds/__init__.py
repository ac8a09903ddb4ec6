"""Damping-rate predictions and exclusion bounds for dissipative collapse models."""
from .collapse_models import (CgfParams, DcslParams, DdpParams, cgf_gamma, dcsl_rates, ddp_gamma,
                              ddp_rates, shape_I, shape_K)
from .core import (CODATA, MICROMAGNET, GasSpec, MassPolicy, NumericalError, PhysicalConstants,
                   RatePrediction, SphereSpec, ValidationError)
from .exclusion import (ExclusionCurve, cgf_curve, cgf_xi_bound, dcsl_curve, dcsl_lambda_bound,
                        ddp_curve, ddp_temperature_bound)
from .measurement import fit_pressure_extrapolation, fit_ringdown

__version__ = "0.1.0"

__all__ = [
    "CODATA", "MICROMAGNET", "CgfParams", "DcslParams", "DdpParams", "ExclusionCurve", "GasSpec",
    "MassPolicy", "NumericalError", "PhysicalConstants", "RatePrediction", "SphereSpec",
    "ValidationError", "cgf_curve", "cgf_gamma", "cgf_xi_bound", "dcsl_curve", "dcsl_lambda_bound",
    "dcsl_rates", "ddp_curve", "ddp_gamma", "ddp_rates", "ddp_temperature_bound",
    "fit_pressure_extrapolation", "fit_ringdown", "shape_I", "shape_K",
]
