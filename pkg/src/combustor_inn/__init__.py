"""Generative inverse design of gas-turbine combustor geometries.

An invertible flow learns the bidirectional map between six geometric design
parameters and three performance labels; run backwards, it proposes diverse
designs for requested performance targets. Forward surrogates, hyperband
tuning, a Gaussian-process baseline, and an HTTP service for interactive
exploration round out the workbench.
"""

__version__ = "0.1.0"
