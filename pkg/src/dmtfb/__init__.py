"""Diversity-multiplexing tradeoff of the MIMO MAC with quantized, error-prone
feedback: exact achievable exponents and a Monte-Carlo outage simulator."""

__version__ = "0.1.0"

from .analytic import (  # noqa: E402
    DmtCurve,
    InfeasibleRateError,
    MultiplexPoint,
    SweepAxis,
    SystemConfig,
    c_recursion,
    cbar_recursion,
    d_exponent,
    d_opt,
    d_opt_piecewise_ymn,
    g_exponent,
    sample_curve,
    verify_closed_forms,
)

__all__ = [
    "DmtCurve",
    "InfeasibleRateError",
    "MultiplexPoint",
    "SweepAxis",
    "SystemConfig",
    "c_recursion",
    "cbar_recursion",
    "d_exponent",
    "d_opt",
    "d_opt_piecewise_ymn",
    "g_exponent",
    "sample_curve",
    "verify_closed_forms",
]
