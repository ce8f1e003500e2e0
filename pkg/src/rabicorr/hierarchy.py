"""Closed J = 0 moment hierarchy of the rotating-wave model.

Variables for each order n = 1..n_cut::

    x1(n) = <a+^n a^n>                 (real)
    x2(n) = <a+^(n-1) a^(n-1) s+ s>    (real; x2(1) = <s+ s>)
    x3(n) = <a+^n a^(n-1) s>           (complex; its conjugate is never stored)

and the equations (W = coupling)::

    x1'(n) = -2 ga n x1(n) + i W n (x3(n) - x3*(n))
    x2'(n) = 2 gp x1(n-1) - (2 (n-1) ga + 2 gp + 2 gd) x2(n) - i W (x3(n) - x3*(n))
    x3'(n) = -((2n-1) ga + gs + gp + gd) x3(n) + i W x1(n) - 2 i W x2(n+1) - i W n x2(n)

with x1(0) = 1 and the closure x2(n_cut + 1) = 0.

These equations correspond to the Hamiltonian with the sign of the coupling
reversed, which is a unitary symmetry (s -> -s) leaving x1 and x2 unchanged.
Relative to a density matrix evolved with ``+W`` the hierarchy's x3 is
therefore ``-<a+^n a^(n-1) s>``; :func:`moments_from_density` applies that
sign, and time series report the physical ``<a+^n a^(n-1) s>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
import scipy.sparse as sp
from scipy import stats
from scipy.integrate import solve_ivp

from rabicorr.lindblad import InitialState, IntegrationError, TimeSeries
from rabicorr.model import RabiParams, RateSet
from rabicorr.operators import (
    SpaceDims,
    falling_factorial,
    make_moment_observable,
    observable_name,
)

MOMENT_TOL = 1e-8

# real layout per order: x1, x2, Re x3, Im x3
_X1, _X2, _U, _V = range(4)


def _idx(n: int, var: int) -> int:
    return 4 * (n - 1) + var


@dataclass
class MomentVector:
    """J = 0 moments for orders 1..n_cut."""

    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray

    def __post_init__(self):
        self.x1 = np.asarray(self.x1, dtype=float)
        self.x2 = np.asarray(self.x2, dtype=float)
        self.x3 = np.asarray(self.x3, dtype=complex)
        if not (self.x1.shape == self.x2.shape == self.x3.shape) or self.x1.ndim != 1:
            raise ValueError("x1, x2, x3 must be 1-d arrays of equal length")

    @property
    def n_cut(self) -> int:
        return self.x1.size

    def to_real(self) -> np.ndarray:
        out = np.empty(4 * self.n_cut)
        out[_X1::4], out[_X2::4] = self.x1, self.x2
        out[_U::4], out[_V::4] = self.x3.real, self.x3.imag
        return out

    @classmethod
    def from_real(cls, y: np.ndarray) -> "MomentVector":
        return cls(y[_X1::4], y[_X2::4], y[_U::4] + 1j * y[_V::4])

    def violations(self) -> list[str]:
        """Physical-bound violations (empty when consistent)."""
        out = []
        if np.any(self.x1 < -MOMENT_TOL):
            out.append("x1 negative")
        if np.any(self.x2 < -MOMENT_TOL):
            out.append("x2 negative")
        prev = np.concatenate([[1.0], self.x1[:-1]])
        if np.any(self.x2 > prev + MOMENT_TOL):
            out.append("x2(n) exceeds x1(n-1)")
        return out


@dataclass(frozen=True)
class HierarchyMatrix:
    """Real linear system ``y' = A y + b`` in the layout of :meth:`MomentVector.to_real`."""

    n_cut: int
    matrix: sp.csr_matrix
    inhomogeneity: np.ndarray
    coupling: float
    rates: RateSet

    def order_coupling(self) -> np.ndarray:
        """Boolean (n_cut x n_cut) pattern: True where order i feeds order j."""
        coo = self.matrix.tocoo()
        pat = np.zeros((self.n_cut, self.n_cut), dtype=bool)
        pat[coo.row // 4, coo.col // 4] = coo.data != 0
        return pat

    def bandwidth(self) -> int:
        rows, cols = np.nonzero(self.order_coupling())
        return int(np.max(np.abs(rows - cols))) if rows.size else 0


def build_hierarchy(params: RabiParams, rates: RateSet, n_cut: int) -> HierarchyMatrix:
    """Assemble the J = 0 equations for orders 1..n_cut."""
    if int(n_cut) != n_cut or n_cut < 1:
        raise ValueError(f"n_cut must be an integer >= 1, got {n_cut!r}")
    if params.include_counter_rotating or params.include_diamagnetic:
        raise ValueError("the moment hierarchy is only closed for the rotating-wave model")
    w = params.coupling
    ga, gd, gp, gs = rates.gamma_a, rates.gamma_d, rates.gamma_p, rates.gamma_sigma
    size = 4 * n_cut
    a = sp.lil_matrix((size, size))
    b = np.zeros(size)
    for n in range(1, n_cut + 1):
        x1, x2, u, v = (_idx(n, k) for k in range(4))
        g3 = (2 * n - 1) * ga + gs + gp + gd

        a[x1, x1] = -2 * ga * n
        a[x1, v] = -2 * w * n

        a[x2, x2] = -(2 * (n - 1) * ga + 2 * gp + 2 * gd)
        a[x2, v] = 2 * w
        if n == 1:
            b[x2] = 2 * gp
        else:
            a[x2, _idx(n - 1, _X1)] = 2 * gp

        a[u, u] = -g3
        a[v, v] = -g3
        a[v, x1] = w
        a[v, x2] = -w * n
        if n < n_cut:
            a[v, _idx(n + 1, _X2)] = -2 * w
    m = sp.csr_matrix(a)
    m.eliminate_zeros()
    return HierarchyMatrix(int(n_cut), m, b, w, rates)


def complex_generator(h: HierarchyMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Equivalent complex system in (x1, x2, x3, x3*) per order.

    Used to check that the conjugate pair stays conjugate when it is not
    enforced by construction.
    """
    n_cut, size = h.n_cut, 4 * h.n_cut
    # z = T y with z = (x1, x2, u + i v, u - i v)
    t = np.zeros((size, size), dtype=complex)
    for n in range(1, n_cut + 1):
        x1, x2, u, v = (_idx(n, k) for k in range(4))
        t[x1, x1] = t[x2, x2] = 1
        t[u, u], t[u, v] = 1, 1j
        t[v, u], t[v, v] = 1, -1j
    tinv = np.linalg.inv(t)
    return t @ h.matrix.toarray() @ tinv, t @ h.inhomogeneity


def initial_moments_from_state(state: InitialState, n_cut: int) -> MomentVector:
    """Moments of the product initial states (no atomic coherence)."""
    orders = np.arange(1, n_cut + 1)
    if state.kind == "coherent_atom_ground":
        x1 = np.abs(complex(state.photon_param)) ** (2 * orders.astype(float))
        x2 = np.zeros(n_cut)
    elif state.kind in ("fock_atom_ground", "fock_atom_excited"):
        n0 = int(state.photon_param)
        x1 = np.array([falling_factorial(n0, n) for n in orders])
        x2 = (np.array([falling_factorial(n0, n - 1) for n in orders])
              if state.excited else np.zeros(n_cut))
    else:
        raise ValueError(f"unsupported initial state kind {state.kind!r}")
    return MomentVector(x1, x2, np.zeros(n_cut, dtype=complex))


def moments_from_density(rho: np.ndarray, dims: SpaceDims, n_cut: int) -> MomentVector:
    """Moments of an arbitrary density matrix (orders above n_max are zero)."""
    x1, x2, x3 = np.zeros(n_cut), np.zeros(n_cut), np.zeros(n_cut, dtype=complex)
    for n in range(1, n_cut + 1):
        if n <= dims.n_max:
            x1[n - 1] = make_moment_observable(dims, n).expect(rho).real
            x3[n - 1] = -make_moment_observable(dims, n, "sigma").expect(rho)
        if n - 1 <= dims.n_max:
            x2[n - 1] = make_moment_observable(dims, n - 1, "population").expect(rho).real
    return MomentVector(x1, x2, x3)


def integrate_hierarchy(h: HierarchyMatrix, x0: MomentVector, t_grid, tol: float = 1e-8,
                        atol: float = 1e-10, method: str = "DOP853") -> TimeSeries:
    """Integrate the hierarchy and expose ``g{n}``, ``g{n}_ee`` and ``g{n}_sigma`` series."""
    if x0.n_cut != h.n_cut:
        raise ValueError(f"initial moments have n_cut={x0.n_cut}, hierarchy {h.n_cut}")
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t[0] != 0 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be strictly increasing and start at 0")
    a, b = h.matrix, h.inhomogeneity
    kwargs = {"jac": a} if method in ("Radau", "BDF", "LSODA") else {}
    sol = solve_ivp(lambda _t, y: a @ y + b, (t[0], t[-1]), x0.to_real(), method=method,
                    t_eval=t, rtol=tol, atol=atol, **kwargs)
    if not sol.success:
        raise IntegrationError(
            f"hierarchy integration failed ({sol.message}); try a smaller n_cut "
            "or an implicit method such as Radau"
        )
    y = sol.y
    obs = {}
    for n in range(1, h.n_cut + 1):
        obs[observable_name(n)] = y[_idx(n, _X1)].astype(complex)
        obs[observable_name(n - 1, "population")] = y[_idx(n, _X2)].astype(complex)
        obs[observable_name(n, "sigma")] = -(y[_idx(n, _U)] + 1j * y[_idx(n, _V)])
    bounds = [MomentVector.from_real(y[:, k]).violations() for k in range(0, t.size,
                                                                           max(1, t.size // 200))]
    meta = {
        "solver": "hierarchy",
        "model_level": "rwa",
        "n_cut": h.n_cut,
        "coupling": h.coupling,
        "rates": vars(h.rates).copy() if hasattr(h.rates, "__dict__") else {},
        "settings": {"rtol": tol, "atol": atol, "method": method},
        "monitors": {"bound_violations": sorted({v for b in bounds for v in b}),
                     "n_steps": int(sol.nfev)},
    }
    return TimeSeries(t, obs, meta)


def default_n_cut(n0: int) -> int:
    return 2 * int(n0) + 10


Reduction = Literal["printed", "leading"]


@dataclass(frozen=True)
class ReducedBlockSpectrum:
    n: int
    eigenvalues: np.ndarray  # sorted by imaginary part

    @property
    def frequency(self) -> float:
        """Largest oscillation frequency, max |Im lambda|."""
        return float(np.max(np.abs(self.eigenvalues.imag)))

    @property
    def relaxation(self) -> float:
        """Largest relaxation rate, max |Re lambda|."""
        return float(np.max(np.abs(self.eigenvalues.real)))


def reduced_block(coupling: float, rates: RateSet, n: int,
                  reduction: Reduction = "printed") -> np.ndarray:
    """4x4 generator of order ``n`` in (x1, x2, x3, x3*) with x1(n-1), x2(n+1) dropped.

    ``printed`` keeps every coefficient as written; ``leading`` additionally
    replaces each decay coefficient by its leading term ``2 ga n``.
    """
    if n < 1:
        raise ValueError("order must be >= 1")
    w = coupling
    ga, gd, gp, gs = rates.gamma_a, rates.gamma_d, rates.gamma_p, rates.gamma_sigma
    if reduction == "printed":
        r1, r2, r3 = 2 * ga * n, 2 * (n - 1) * ga + 2 * gp + 2 * gd, (2 * n - 1) * ga + gs + gp + gd
    elif reduction == "leading":
        r1 = r2 = r3 = 2 * ga * n
    else:
        raise ValueError(f"unknown reduction {reduction!r}")
    return np.array([
        [-r1, 0, 1j * w * n, -1j * w * n],
        [0, -r2, -1j * w, 1j * w],
        [1j * w, -1j * w * n, -r3, 0],
        [-1j * w, 1j * w * n, 0, -r3],
    ], dtype=complex)


def reduced_block_spectrum(params: RabiParams, rates: RateSet, n: int,
                           reduction: Reduction = "printed") -> ReducedBlockSpectrum:
    ev = np.linalg.eigvals(reduced_block(params.coupling, rates, n, reduction))
    order = np.lexsort((ev.real, ev.imag))
    return ReducedBlockSpectrum(int(n), ev[order])


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    exponent_stderr: float
    prefactor: float
    prefactor_stderr: float


def fit_power_law(x: Sequence[float], y: Sequence[float]) -> PowerLawFit:
    """Least-squares fit of ``log y = log c + p log x``."""
    res = stats.linregress(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)))
    c = math.exp(res.intercept)
    return PowerLawFit(res.slope, res.stderr, c, c * res.intercept_stderr)


@dataclass
class ScalingResult:
    orders: np.ndarray
    frequencies: np.ndarray
    relaxations: np.ndarray
    frequency_fit: PowerLawFit
    relaxation_fit: PowerLawFit


def spectrum_scaling(params: RabiParams, rates: RateSet, orders: Sequence[int],
                     reduction: Reduction = "printed") -> ScalingResult:
    """Fit frequency and relaxation power laws over the reduced block spectra."""
    spectra = [reduced_block_spectrum(params, rates, n, reduction) for n in orders]
    freq = np.array([s.frequency for s in spectra])
    relax = np.array([s.relaxation for s in spectra])
    ns = np.asarray(orders, dtype=float)
    return ScalingResult(np.asarray(orders), freq, relax,
                         fit_power_law(ns, freq), fit_power_law(ns, relax))
