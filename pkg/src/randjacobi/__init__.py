"""Integrated density of states of random juxtapositions of periodic Jacobi blocks.

Band-edge normal forms, phase-shift dynamics, Monte Carlo IDS estimates and
checks of the two-sided Lifshitz-tail bounds.
"""

__version__ = "0.1.0"
