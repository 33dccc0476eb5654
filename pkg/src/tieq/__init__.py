"""Markov equilibria of capital accumulation with non-constant discounting,
and the overlapping-generations planner built on them."""
__version__ = "0.1.0"

from .model import (CobbDouglas, Exponential, Linear, LogUtility, OgEconomy, OgMixture,
                    PiecewiseExponential)

__all__ = ["CobbDouglas", "Exponential", "Linear", "LogUtility", "OgEconomy", "OgMixture",
           "PiecewiseExponential", "__version__"]
