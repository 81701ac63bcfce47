"""Certification backends."""

from dataclasses import replace

from ..errors import ConfigurationError
from ..model import NetworkParams
from ..smoothing import SmoothingParams
from .accelerated import SurrogateCertifier
from .base import BaseCertifier, Method
from .monte_carlo import MonteCarloCertifier

BASELINE_N = 100


def create_certifier(
    method: Method,
    base: NetworkParams,
    params: SmoothingParams,
    surrogate: NetworkParams | None = None,
    workers: int = 1,
    tag: str | None = None,
) -> BaseCertifier:
    """
    Factory function to create the certifier for a method.

    Args:
        method: "mc", "surrogate" or "baseline" (mc with N = 100)
        base: Base classifier
        params: Smoothing parameters
        surrogate: Surrogate weights, required for "surrogate"
        workers: Sampling threads
        tag: Method tag for logs; defaults to the method name

    Returns:
        Certifier instance
    """
    if method == "surrogate":
        if surrogate is None:
            raise ConfigurationError("method 'surrogate' needs surrogate weights")
        return SurrogateCertifier(base, surrogate, params, workers, tag or method)
    if method == "baseline":
        baseline = replace(params, n=BASELINE_N, n0=min(params.n0, BASELINE_N))
        return MonteCarloCertifier(base, baseline, workers, tag or method)
    if method == "mc":
        return MonteCarloCertifier(base, params, workers, tag or method)
    raise ConfigurationError(f"unknown method '{method}'")


__all__ = [
    "BASELINE_N",
    "BaseCertifier",
    "Method",
    "MonteCarloCertifier",
    "SurrogateCertifier",
    "create_certifier",
]
