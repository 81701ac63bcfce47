"""Surrogate-based certification backend."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError
from ..model import NetworkParams
from ..smoothing import CertOutcome, SmoothingParams
from ..surrogate import accelerated_certify
from .base import BaseCertifier


class SurrogateCertifier(BaseCertifier):
    """Certification from one surrogate forward pass plus an n0-sample PREDICT."""

    def __init__(
        self,
        base: NetworkParams,
        surrogate: NetworkParams,
        params: SmoothingParams,
        workers: int = 1,
        tag: str = "surrogate",
    ):
        super().__init__(params, workers)
        if surrogate.head != "simplex":
            raise ConfigurationError("surrogate weights must have the simplex head")
        self.base = base
        self.surrogate = surrogate
        self._tag = tag

    @property
    def name(self) -> str:
        return self._tag

    def certify(self, x: np.ndarray, example_id: int = 0) -> CertOutcome:
        return accelerated_certify(
            self.base, self.surrogate, x, self.params,
            example_id=example_id, workers=self.workers,
        )
