"""Risk-sensitive optimal growth with Markov regime switching."""

__version__ = "1.0.0"
