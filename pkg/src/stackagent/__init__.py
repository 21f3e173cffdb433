"""Stack-memory agent runtime with a Turing-equivalence core."""

__version__ = "0.1.0"
