"""Correlation-order dependent coupling regimes of the dissipative quantum Rabi model.

Two independent solvers are provided for the equal-time photon correlation
functions <a+^n a^n>:

* a density-matrix Lindblad solver on the truncated Fock x qubit space
  (:mod:`rabicorr.lindblad`), valid with or without counter-rotating and
  diamagnetic terms;
* the closed J = 0 moment hierarchy under the rotating-wave approximation
  (:mod:`rabicorr.hierarchy`).

:mod:`rabicorr.regimes` builds the weak / strong / ultra-strong regime maps
on top of them and :mod:`rabicorr.cli` is the command line entry point.
"""

from rabicorr.model import (
    Dissipator,
    RabiParams,
    RateSet,
    build_dissipators,
    build_hamiltonian,
)
from rabicorr.operators import (
    DimensionMismatchError,
    SpaceDims,
    SparseOperator,
    TruncationError,
    make_annihilator,
    make_atomic_ops,
    make_moment_observable,
    op_add_scaled,
    op_mul,
)

__version__ = "0.1.0"

__all__ = [
    "DimensionMismatchError",
    "Dissipator",
    "RabiParams",
    "RateSet",
    "SpaceDims",
    "SparseOperator",
    "TruncationError",
    "build_dissipators",
    "build_hamiltonian",
    "make_annihilator",
    "make_atomic_ops",
    "make_moment_observable",
    "op_add_scaled",
    "op_mul",
]
