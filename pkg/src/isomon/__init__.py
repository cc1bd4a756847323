"""Exact verification toolkit for rank-2 isomonodromy systems.

Certifies the flow equations, affine Weyl group symmetries and tau-function
bilinear relations of the rank-2 Schlesinger system and the Garnier system
by exact rational point checks, backed by numerical flow integration.
"""

__version__ = "0.1.0"
