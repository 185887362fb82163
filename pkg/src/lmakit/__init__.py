"""Multi-segment piecewise-linear activations for compact networks."""

__version__ = "0.1.0"
