"""Physics-informed networks for advection-dispersion with point-source releases."""

__version__ = "0.1.0"
