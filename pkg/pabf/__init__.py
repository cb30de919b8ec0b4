"""
Projected adaptive biasing force (PABF) toolkit.

This package samples free energies along a periodic two-dimensional reaction
coordinate with overdamped Langevin dynamics, biased either by the raw ABF
mean-force estimate or by its gradient projection (PABF).
"""

__version__ = "0.1.0"
