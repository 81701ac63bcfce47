"""Sampling-based certification backend."""

from __future__ import annotations

import numpy as np

from ..model import NetworkParams
from ..smoothing import CertOutcome, SmoothingParams, certify_mc
from .base import BaseCertifier


class MonteCarloCertifier(BaseCertifier):
    """
    CERTIFY with n fresh noisy samples per input.

    The baseline is this certifier with n = 100.
    """

    def __init__(
        self,
        base: NetworkParams,
        params: SmoothingParams,
        workers: int = 1,
        tag: str = "mc",
    ):
        super().__init__(params, workers)
        self.base = base
        self._tag = tag

    @property
    def name(self) -> str:
        return self._tag

    def certify(self, x: np.ndarray, example_id: int = 0) -> CertOutcome:
        return certify_mc(self.base, x, self.params, example_id=example_id, workers=self.workers)
