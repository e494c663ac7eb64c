"""Shape derivatives of two-phase torsional rigidity at concentric balls."""

__version__ = "0.1.0"
