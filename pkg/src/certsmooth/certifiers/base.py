"""Base certifier interface."""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Literal

import numpy as np

from ..smoothing import CertOutcome, SmoothingParams

Method = Literal["mc", "surrogate", "baseline"]


class BaseCertifier(ABC):
    """Abstract base class for certification backends."""

    def __init__(self, params: SmoothingParams, workers: int = 1):
        self.params = params
        self.workers = workers

    @property
    @abstractmethod
    def name(self) -> str:
        """Method tag written to certification logs."""
        pass

    @abstractmethod
    def certify(self, x: np.ndarray, example_id: int = 0) -> CertOutcome:
        """
        Certify one input.

        Args:
            x: Clean input vector
            example_id: Keys the per-example noise streams

        Returns:
            Prediction or ABSTAIN with its radius.
        """
        pass
