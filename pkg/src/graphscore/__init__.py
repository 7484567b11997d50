"""Score-function graph structure learning for spatiotemporal time series."""
__version__ = "0.1.0"
