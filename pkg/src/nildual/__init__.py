"""Minimal surfaces in the 3-dimensional Heisenberg group and their duals.

Construction from generating spinors, extended frames, or holomorphic
potentials; dual surfaces via the dual-spinor transformation and the
two-sided Sym formula; residual suites verifying every identity at desk
scale.
"""

__version__ = "0.1.0"
