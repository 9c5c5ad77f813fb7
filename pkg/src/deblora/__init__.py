"""De-biasing long-tailed feature representations with a residual low-rank adapter."""

__version__ = "0.1.0"
