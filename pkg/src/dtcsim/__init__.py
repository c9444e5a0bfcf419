"""Floquet time-crystal circuits: compilation, noisy simulation and error mitigation."""

__version__ = "0.1.0"
