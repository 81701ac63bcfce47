"""certsmooth - Randomized-smoothing certification by sampling and by surrogate."""

__version__ = "0.1.0"
