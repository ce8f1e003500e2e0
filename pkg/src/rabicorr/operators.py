"""Sparse operators on the truncated space Fock(n_max) (x) C^2.

Basis ordering is photon-major: the state |k> (x) |s> has index ``2*k + s``
with ``s = 0`` the atomic ground state and ``s = 1`` the excited state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.sparse as sp

AtomicFactor = Literal["none", "sigma", "sigma_dag", "population"]

ATOM_LEVELS = 2
HERMITIAN_TOL = 1e-12


class DimensionMismatchError(ValueError):
    """Raised when operators built on different spaces are combined."""


class TruncationError(ValueError):
    """Raised when a requested moment order exceeds the photon cutoff."""


@dataclass(frozen=True)
class SpaceDims:
    """Truncation of the joint cavity-atom space.

    Attributes
    ----------
    n_max : int
        Photon cutoff; Fock states |0>..|n_max> are kept.
    """

    n_max: int

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be an integer >= 1, got {self.n_max!r}")

    @property
    def atom_levels(self) -> int:
        return ATOM_LEVELS

    @property
    def fock_dim(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return ATOM_LEVELS * (self.n_max + 1)

    def index(self, k: int, excited: bool) -> int:
        """Index of the basis state |k> (x) |e or g>."""
        if not 0 <= k <= self.n_max:
            raise TruncationError(f"Fock index {k} outside 0..{self.n_max}")
        return ATOM_LEVELS * k + int(excited)


def _canonical(matrix) -> sp.csr_matrix:
    m = sp.csr_matrix(matrix, dtype=np.complex128, copy=True)
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    return m


class SparseOperator:
    """Immutable complex sparse matrix tied to a :class:`SpaceDims`.

    Storage is canonical CSR (sorted indices, no duplicates, no explicit
    zeros). Arithmetic with operators of different dims raises
    :class:`DimensionMismatchError`.
    """

    __slots__ = ("dims", "_m", "hermitian_hint")

    def __init__(self, dims: SpaceDims, matrix, hermitian_hint: bool | None = None):
        m = _canonical(matrix)
        if m.shape != (dims.dim, dims.dim):
            raise DimensionMismatchError(
                f"matrix shape {m.shape} does not match dim {dims.dim}"
            )
        m.data.flags.writeable = False
        self.dims = dims
        self._m = m
        self.hermitian_hint = hermitian_hint
        if hermitian_hint:
            err = self.hermiticity_error()
            if err > HERMITIAN_TOL:
                raise ValueError(f"operator flagged Hermitian but |M - M^+| = {err:.3e}")

    @classmethod
    def from_entries(cls, dims: SpaceDims, rows, cols, values, hermitian_hint=None):
        """Build from coordinate triples; duplicates are summed."""
        m = sp.coo_matrix(
            (np.asarray(values, dtype=np.complex128), (np.asarray(rows), np.asarray(cols))),
            shape=(dims.dim, dims.dim),
        )
        return cls(dims, m, hermitian_hint)

    @classmethod
    def identity(cls, dims: SpaceDims) -> "SparseOperator":
        return cls(dims, sp.identity(dims.dim, dtype=np.complex128, format="csr"), True)

    @property
    def matrix(self) -> sp.csr_matrix:
        """The canonical CSR matrix (read-only data buffer)."""
        return self._m

    @property
    def nnz(self) -> int:
        return self._m.nnz

    def entries(self) -> list[tuple[int, int, complex]]:
        """Canonically ordered ``(row, col, value)`` triples."""
        coo = self._m.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return [
            (int(coo.row[i]), int(coo.col[i]), complex(coo.data[i])) for i in order
        ]

    def to_dense(self) -> np.ndarray:
        return self._m.toarray()

    def dag(self) -> "SparseOperator":
        return SparseOperator(self.dims, self._m.conj().T, self.hermitian_hint)

    def hermiticity_error(self) -> float:
        diff = self._m - self._m.conj().T
        return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0

    def expect(self, rho: np.ndarray) -> complex:
        """Tr(O rho) for a dense density matrix."""
        coo = self._m.tocoo()
        return complex(np.sum(coo.data * rho[coo.col, coo.row]))

    def _check(self, other: "SparseOperator"):
        if not isinstance(other, SparseOperator):
            return NotImplemented
        if other.dims != self.dims:
            raise DimensionMismatchError(f"{self.dims} vs {other.dims}")
        return None

    def __matmul__(self, other):
        return op_mul(self, other)

    def __add__(self, other):
        return op_add_scaled(self, other, 1.0)

    def __sub__(self, other):
        return op_add_scaled(self, other, -1.0)

    def __mul__(self, c):
        if isinstance(c, SparseOperator):
            return NotImplemented
        return SparseOperator(self.dims, self._m * complex(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __repr__(self):
        return f"SparseOperator(n_max={self.dims.n_max}, nnz={self.nnz})"


def op_mul(a: SparseOperator, b: SparseOperator) -> SparseOperator:
    """Exact sparse product ``a @ b``."""
    if a._check(b) is NotImplemented:
        raise TypeError("op_mul expects SparseOperator arguments")
    return SparseOperator(a.dims, a.matrix @ b.matrix)


def op_add_scaled(a: SparseOperator, b: SparseOperator, c: complex) -> SparseOperator:
    """Return ``a + c * b``."""
    if a._check(b) is NotImplemented:
        raise TypeError("op_add_scaled expects SparseOperator arguments")
    return SparseOperator(a.dims, a.matrix + complex(c) * b.matrix)


def _photon_op(dims: SpaceDims, fock: sp.spmatrix) -> SparseOperator:
    return SparseOperator(dims, sp.kron(fock, sp.identity(ATOM_LEVELS), format="csr"))


def _atom_op(dims: SpaceDims, atom: np.ndarray) -> SparseOperator:
    return SparseOperator(
        dims, sp.kron(sp.identity(dims.fock_dim), sp.csr_matrix(atom), format="csr")
    )


def make_annihilator(dims: SpaceDims) -> SparseOperator:
    """Photon annihilation operator a (x) I_2, a|k> = sqrt(k)|k-1>."""
    k = np.arange(1, dims.fock_dim)
    fock = sp.diags(np.sqrt(k).astype(np.complex128), offsets=1,
                    shape=(dims.fock_dim, dims.fock_dim))
    return _photon_op(dims, fock)


def make_number(dims: SpaceDims) -> SparseOperator:
    fock = sp.diags(np.arange(dims.fock_dim, dtype=np.complex128))
    return SparseOperator(dims, sp.kron(fock, sp.identity(ATOM_LEVELS), format="csr"), True)


def make_atomic_ops(dims: SpaceDims) -> tuple[SparseOperator, SparseOperator, SparseOperator]:
    """Return ``(sigma, sigma_dag, inversion)``.

    ``sigma = |g><e|`` and ``inversion = sigma_dag sigma - sigma sigma_dag``.
    """
    lower = np.array([[0.0, 1.0], [0.0, 0.0]])
    sigma = _atom_op(dims, lower)
    sigma_dag = _atom_op(dims, lower.T)
    inversion = SparseOperator(dims, sp.kron(sp.identity(dims.fock_dim),
                                             sp.diags([-1.0, 1.0]), format="csr"), True)
    return sigma, sigma_dag, inversion


def falling_factorial(k: int, n: int) -> float:
    """k (k-1) ... (k-n+1); zero when n > k."""
    if n > k:
        return 0.0
    out = 1.0
    for j in range(k - n + 1, k + 1):
        out *= j
    return out


def make_moment_observable(dims: SpaceDims, n: int,
                           atomic: AtomicFactor = "none") -> SparseOperator:
    """Normal-ordered moment operator of order ``n``.

    ``none`` -> a+^n a^n, ``population`` -> a+^n a^n sigma+ sigma,
    ``sigma`` -> a+^n a^(n-1) sigma, ``sigma_dag`` -> a+^(n-1) a^n sigma+.

    ``population`` also accepts ``n = 0`` (the bare atomic population).
    The photon factors are built on the Fock ladder directly, so they are
    exact on the truncated space and unaffected by the edge defect of
    a a+ at |n_max>.
    """
    lowest = 0 if atomic == "population" else 1
    if int(n) != n or n < lowest:
        raise ValueError(f"moment order must be an integer >= {lowest}, got {n!r}")
    if n > dims.n_max:
        raise TruncationError(f"order {n} exceeds photon cutoff n_max={dims.n_max}")

    k = np.arange(dims.fock_dim)
    if atomic in ("none", "population"):
        fock = sp.diags([falling_factorial(int(j), n) for j in k]).astype(np.complex128)
    elif atomic == "sigma":
        # <k+1| a+^n a^(n-1) |k>... only the |k> -> |k+1> shift survives
        vals = [np.sqrt(j + 1) * falling_factorial(int(j), n - 1) for j in k[:-1]]
        fock = sp.diags(np.asarray(vals, dtype=np.complex128), offsets=-1,
                        shape=(dims.fock_dim, dims.fock_dim))
    elif atomic == "sigma_dag":
        vals = [np.sqrt(j + 1) * falling_factorial(int(j), n - 1) for j in k[:-1]]
        fock = sp.diags(np.asarray(vals, dtype=np.complex128), offsets=1,
                        shape=(dims.fock_dim, dims.fock_dim))
    else:
        raise ValueError(f"unknown atomic factor {atomic!r}")

    photon = _photon_op(dims, fock)
    if atomic == "none":
        return SparseOperator(dims, photon.matrix, True)
    sigma, sigma_dag, _ = make_atomic_ops(dims)
    if atomic == "population":
        return SparseOperator(dims, (photon @ sigma_dag @ sigma).matrix, True)
    if atomic == "sigma":
        return photon @ sigma
    return photon @ sigma_dag


def observable_name(n: int, atomic: AtomicFactor = "none") -> str:
    """Column/key name used for moment observables in time series."""
    suffix = {"none": "", "population": "_ee", "sigma": "_sigma", "sigma_dag": "_sigmadag"}
    return f"g{n}{suffix[atomic]}"
