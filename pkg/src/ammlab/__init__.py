"""AMM state-machine simulator and MEV invariance harness."""

__version__ = "0.1.0"
