"""Multi-exposure disparity fusion, depth metrics and a toy dual-encoder network."""

__version__ = "0.1.0"
