"""Variable-ordering selection for cylindrical algebraic decomposition."""

__version__ = "0.1.0"
