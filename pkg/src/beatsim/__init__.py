"""Quantum-trajectory simulation of jump-driven light shifts of a Zeeman coherence."""

__version__ = "0.1.0"

from .model import AtomParams, DerivedRates, derive  # noqa: E402

__all__ = ["AtomParams", "DerivedRates", "derive", "__version__"]
