"""Uncertainty propagation for two-module coupled solvers.

Standard and reduced non-intrusive spectral projection (NISP) drivers over
block Gauss-Seidel partitioned systems, with the supporting polynomial-chaos,
dimension-reduction, and benchmark-problem machinery.
"""

__version__ = "0.1.0"
