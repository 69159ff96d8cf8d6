"""Numerical laboratory for causal variational principles.

Finite causal fermion systems as dense Hermitian matrices, discrete measures
and their Euler-Lagrange residuals, one-sided jet calculus, surface-layer
conservation laws, an explicit lattice model with conserved symplectic form,
and a discretized Dirac-sea construction recovering Minkowski causality.
"""

from __future__ import annotations

__version__ = "0.1.0"
