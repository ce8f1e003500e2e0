"""Density-matrix propagation under the Lindblad master equation.

States are vectorised by column stacking, ``vec(rho)[i + j*dim] = rho[i, j]``,
so that ``vec(A rho B) = (B^T kron A) vec(rho)``.

Propagation is restricted to the part of Liouville space reachable from the
initial state through the sparsity graph of the Liouvillian. Components
outside that set have identically zero time derivative and stay exactly
zero, so the restriction is exact. For a Fock initial state under the RWA
it keeps only the excitation-diagonal blocks; in the full model it keeps the
parity-diagonal blocks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import DOP853, RK45, Radau

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
    make_moment_observable,
    observable_name,
)

log = logging.getLogger(__name__)

StateKind = Literal["fock_atom_ground", "fock_atom_excited", "coherent_atom_ground"]

METHODS = {"DOP853": DOP853, "RK45": RK45, "Radau": Radau}

TRACE_TOL = 1e-10
HERMITIAN_TOL = 1e-10
POSITIVITY_TOL = 1e-8


class IntegrationError(RuntimeError):
    """The adaptive integrator failed (e.g. step size underflow)."""


@dataclass(frozen=True)
class InitialState:
    """Product initial state: photon part (x) atomic basis state.

    ``photon_param`` is the Fock number n0 for the ``fock_*`` kinds and the
    complex amplitude alpha for ``coherent_atom_ground``.
    """

    kind: StateKind = "fock_atom_ground"
    photon_param: complex = 10

    def __post_init__(self):
        if self.kind not in ("fock_atom_ground", "fock_atom_excited", "coherent_atom_ground"):
            raise ValueError(f"unsupported initial state kind {self.kind!r}")
        if self.kind != "coherent_atom_ground":
            n0 = self.photon_param
            if isinstance(n0, complex) or int(n0) != n0 or n0 < 0:
                raise ValueError(f"Fock photon number must be a non-negative integer, got {n0!r}")

    @property
    def excited(self) -> bool:
        return self.kind == "fock_atom_excited"

    @property
    def mean_photons(self) -> float:
        if self.kind == "coherent_atom_ground":
            return abs(complex(self.photon_param)) ** 2
        return float(self.photon_param)

    def check_dims(self, dims: SpaceDims) -> None:
        if self.kind == "coherent_atom_ground":
            if self.mean_photons > dims.n_max / 4:
                raise TruncationError(
                    f"|alpha|^2={self.mean_photons} exceeds n_max/4={dims.n_max / 4}"
                )
        elif self.photon_param > dims.n_max:
            raise TruncationError(f"n0={self.photon_param} exceeds n_max={dims.n_max}")

    def photon_amplitudes(self, n_levels: int) -> np.ndarray:
        """Normalised photon amplitudes on |0>..|n_levels-1>."""
        psi = np.zeros(n_levels, dtype=np.complex128)
        if self.kind == "coherent_atom_ground":
            alpha = complex(self.photon_param)
            k = np.arange(n_levels)
            log_norm = np.array([0.5 * math.lgamma(j + 1) for j in k])
            with np.errstate(divide="ignore"):
                mag = np.exp(k * np.log(abs(alpha)) - log_norm) if alpha != 0 else (k == 0) * 1.0
            psi = mag * np.exp(1j * np.angle(alpha) * k)
            psi /= np.linalg.norm(psi)
        else:
            psi[int(self.photon_param)] = 1.0
        return psi


@dataclass
class DensityMatrix:
    """Dense density matrix with invariant diagnostics."""

    dims: SpaceDims
    values: np.ndarray

    @classmethod
    def from_initial_state(cls, state: InitialState, dims: SpaceDims) -> "DensityMatrix":
        state.check_dims(dims)
        photon = state.photon_amplitudes(dims.fock_dim)
        atom = np.array([0.0, 1.0]) if state.excited else np.array([1.0, 0.0])
        psi = np.kron(photon, atom)
        return cls(dims, np.outer(psi, psi.conj()))

    def trace_error(self) -> float:
        return abs(np.trace(self.values) - 1.0)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.values - self.values.conj().T)))

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.values + self.values.conj().T)
        return float(np.linalg.eigvalsh(herm)[0])

    def validate(self) -> None:
        if self.trace_error() > TRACE_TOL:
            raise ValueError(f"trace off by {self.trace_error():.3e}")
        if self.hermiticity_error() > HERMITIAN_TOL:
            raise ValueError("density matrix is not Hermitian")
        if self.min_eigenvalue() < -POSITIVITY_TOL:
            raise ValueError("density matrix has a negative eigenvalue")

    def vec(self) -> np.ndarray:
        return self.values.reshape(-1, order="F")


@dataclass(frozen=True)
class Liouvillian:
    """Sparse generator acting on column-stacked density matrices."""

    dims: SpaceDims
    matrix: sp.csr_matrix

    def apply(self, rho: np.ndarray) -> np.ndarray:
        d = self.dims.dim
        return (self.matrix @ rho.reshape(-1, order="F")).reshape(d, d, order="F")


def build_liouvillian(h: SparseOperator, dissipators: Sequence[Dissipator],
                      dims: SpaceDims) -> Liouvillian:
    """Assemble ``L`` with ``vec(drho/dt) = L vec(rho)``."""
    if h.dims != dims or any(c.op.dims != dims for c in dissipators):
        raise DimensionMismatchError("Hamiltonian/dissipators built on different dims")
    eye = sp.identity(dims.dim, dtype=np.complex128, format="csr")
    hm = h.matrix
    gen = -1j * (sp.kron(eye, hm) - sp.kron(hm.T, eye))
    for c in dissipators:
        op = c.op.matrix
        ldl = op.conj().T @ op
        gen = gen + c.kappa * (
            sp.kron(op.conj(), op)
            - 0.5 * sp.kron(eye, ldl)
            - 0.5 * sp.kron(ldl.T, eye)
        )
    gen = sp.csr_matrix(gen)
    gen.sum_duplicates()
    gen.eliminate_zeros()
    return Liouvillian(dims, gen)


def reachable_indices(matrix: sp.spmatrix, support: np.ndarray) -> np.ndarray:
    """Indices reachable from ``support`` along edges ``j -> i`` with ``M[i, j] != 0``."""
    pattern = sp.csr_matrix(matrix, copy=True)
    pattern.data = np.ones_like(pattern.data, dtype=np.float64)
    pattern = pattern.real.astype(np.float64)
    reach = np.zeros(matrix.shape[0], dtype=bool)
    reach[support] = True
    while True:
        grown = reach | ((pattern @ reach.astype(np.float64)) > 0)
        if grown.sum() == reach.sum():
            return np.flatnonzero(reach)
        reach = grown


def hermitian_reduction(matrix: sp.spmatrix, keep: np.ndarray,
                        d: int) -> tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
    """Real parametrisation of the Hermitian states supported on ``keep``.

    Each diagonal entry contributes ``Re rho_ii`` and each pair ``i < j``
    contributes ``Re rho_ij, Im rho_ij``. Returns ``(P, Q, M)``: ``y = P z``
    rebuilds the kept components, ``z = Re(Q y)`` extracts the parameters and
    the real matrix ``M`` generates ``z' = M z``. Hermiticity then holds by construction.
    """
    pos = {int(k): p for p, k in enumerate(keep)}
    rows, cols, vals = [], [], []          # P entries
    q_rows, q_cols, q_vals = [], [], []    # complex extraction, z = Re(Q y)
    nz = 0
    for k in keep:
        i, j = int(k) % d, int(k) // d
        if i > j:
            continue
        if i == j:
            rows.append(pos[int(k)]); cols.append(nz); vals.append(1.0)
            q_rows.append(nz); q_cols.append(pos[int(k)]); q_vals.append(1.0)
            nz += 1
            continue
        partner = j + i * d
        if partner not in pos:
            raise ValueError("reachable set is not closed under transposition")
        kp = pos[partner]
        rows += [pos[int(k)], pos[int(k)], kp, kp]
        cols += [nz, nz + 1, nz, nz + 1]
        vals += [1.0, 1j, 1.0, -1j]
        q_rows += [nz, nz + 1]
        q_cols += [pos[int(k)], pos[int(k)]]
        q_vals += [1.0, -1j]
        nz += 2
    p = sp.csr_matrix((np.asarray(vals, complex), (rows, cols)), shape=(keep.size, nz))
    q = sp.csr_matrix((np.asarray(q_vals, complex), (q_rows, q_cols)), shape=(nz, keep.size))
    sub = sp.csr_matrix(matrix[keep][:, keep])
    gen = sp.csr_matrix((q @ sub @ p).real)
    gen.eliminate_zeros()
    return p, q, gen


@dataclass
class SolverSettings:
    """Integrator settings (adaptive embedded Runge-Kutta with dense output)."""

    rtol: float = 1e-8
    atol: float = 1e-10
    method: str = "DOP853"
    horizon: float | None = None
    sample_dt: float | None = None
    positivity_every: int = 0  # 0 disables min-eigenvalue checks

    def as_dict(self) -> dict:
        return {
            "rtol": self.rtol, "atol": self.atol, "method": self.method,
            "horizon": self.horizon, "sample_dt": self.sample_dt,
            "positivity_every": self.positivity_every,
        }


@dataclass
class TimeSeries:
    """Sampled observables with provenance metadata."""

    times: np.ndarray
    observables: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        for name, values in self.observables.items():
            if len(values) != len(self.times):
                raise ValueError(f"observable {name!r} has {len(values)} samples, "
                                 f"expected {len(self.times)}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.observables[name]

    def corr(self, n: int) -> np.ndarray:
        """<a+^n a^n>(t) (real part)."""
        return np.real(self.observables[observable_name(n)])


@dataclass
class Trajectory:
    """Raw propagation output.

    ``states`` holds dense density matrices when ``keep_states`` was set;
    ``expectations`` holds values for observables requested up front.
    """

    dims: SpaceDims
    times: np.ndarray
    expectations: dict[str, np.ndarray]
    monitors: dict
    states: np.ndarray | None = None


def _expectation_rows(ops: dict[str, SparseOperator], dims: SpaceDims,
                      keep: np.ndarray) -> tuple[list[str], sp.csr_matrix]:
    """Sparse rows ``r`` with ``Tr(O rho) = r . vec(rho)``, restricted to ``keep``."""
    d = dims.dim
    names, rows = [], []
    for name, op in ops.items():
        if op.dims != dims:
            raise DimensionMismatchError(f"observable {name!r} built on other dims")
        coo = op.matrix.tocoo()
        # Tr(O rho) = sum O[r, c] rho[c, r]; rho[c, r] sits at c + r*d
        flat = coo.col + coo.row * d
        rows.append(sp.csr_matrix((coo.data, (np.zeros_like(flat), flat)), shape=(1, d * d)))
        names.append(name)
    if not rows:
        return names, sp.csr_matrix((0, len(keep)), dtype=np.complex128)
    full = sp.vstack(rows, format="csc")
    return names, sp.csr_matrix(full[:, keep])


def propagate(liouv: Liouvillian, rho0: DensityMatrix, t_grid, tol: float | None = None,
              settings: SolverSettings | None = None,
              observables: dict[str, SparseOperator] | None = None,
              keep_states: bool = False) -> Trajectory:
    """Integrate ``rho(t)`` and record observables and invariant monitors.

    Parameters
    ----------
    liouv : Liouvillian
    rho0 : DensityMatrix
    t_grid : array_like
        Monotone sample times starting at 0.
    tol : float, optional
        Shorthand overriding ``settings.rtol``.
    observables : dict, optional
        Operators whose expectation values are recorded at every sample.
    keep_states : bool
        Also return the dense density matrices (memory ~ len(t) * dim**2).
    """
    settings = settings or SolverSettings()
    rtol = settings.rtol if tol is None else tol
    if rho0.dims != liouv.dims:
        raise DimensionMismatchError("initial state and Liouvillian dims differ")
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t[0] != 0 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be strictly increasing and start at 0")

    d = liouv.dims.dim
    y0 = rho0.vec()
    keep = reachable_indices(liouv.matrix, np.flatnonzero(y0))
    to_vec, extract, gen = hermitian_reduction(liouv.matrix, keep, d)
    log.debug("propagating %d real parameters (%d of %d Liouville components)",
              gen.shape[0], keep.size, d * d)
    z0 = np.real(extract @ y0[keep])

    ops = dict(observables or {})
    names, rows = _expectation_rows(ops, liouv.dims, keep)
    obs_map = sp.csr_matrix(rows @ to_vec) if names else None
    diag_pos = np.flatnonzero(np.isin(keep, np.arange(d) * (d + 1)))
    trace_map = np.asarray(to_vec[diag_pos].sum(axis=0)).ravel()
    want_states = keep_states or settings.positivity_every > 0

    expect = np.zeros((len(names), t.size), dtype=np.complex128)
    trace = np.zeros(t.size)
    states = np.zeros((t.size, d, d), dtype=np.complex128) if want_states else None

    def record(idx: np.ndarray, z: np.ndarray) -> None:
        if names:
            expect[:, idx] = obs_map @ z
        trace[idx] = np.real(trace_map @ z)
        if want_states:
            full = np.zeros((idx.size, d * d), dtype=np.complex128)
            full[:, keep] = (to_vec @ z).T
            states[idx] = full.reshape(idx.size, d, d).transpose(0, 2, 1)

    solver_cls = METHODS[settings.method]
    solver = solver_cls(lambda _t, z: gen @ z, t[0], z0, t[-1], rtol=rtol, atol=settings.atol)
    record(np.array([0]), z0[:, None])
    nxt = 1
    while nxt < t.size:
        msg = solver.step()
        if solver.status == "failed":
            raise IntegrationError(f"integrator failed at t={solver.t:.6g}: {msg}")
        hi = np.searchsorted(t, solver.t, side="right")
        if hi > nxt:
            idx = np.arange(nxt, hi)
            record(idx, solver.dense_output()(t[idx]).reshape(z0.size, idx.size))
            nxt = hi
        if solver.status == "finished" and nxt < t.size:
            idx = np.arange(nxt, t.size)
            record(idx, solver.dense_output()(t[idx]).reshape(z0.size, idx.size))
            nxt = t.size

    expectations = {name: expect[i] for i, name in enumerate(names)}
    monitors = {
        "trace_error": float(np.max(np.abs(trace - 1.0))),
        # real Hermitian parametrisation: exact by construction
        "hermiticity_error": 0.0,
        "n_components": int(keep.size),
        "n_rhs_evals": int(solver.nfev),
    }
    if want_states and settings.positivity_every:
        every = settings.positivity_every
        monitors["hermiticity_error"] = float(max(
            np.max(np.abs(m - m.conj().T)) for m in states[::every]))
        monitors["min_eigenvalue"] = min(
            float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0]) for m in states[::every])
    if not keep_states:
        states = None

    flags = []
    if monitors["trace_error"] > 10 * max(rtol, TRACE_TOL):
        flags.append("trace")
    if monitors["hermiticity_error"] > 10 * max(rtol, HERMITIAN_TOL):
        flags.append("hermiticity")
    if monitors.get("min_eigenvalue", 0.0) < -10 * POSITIVITY_TOL:
        flags.append("positivity")
    monitors["flags"] = flags
    if flags:
        log.warning("invariant monitors breached: %s", ", ".join(flags))
    return Trajectory(liouv.dims, t, expectations, monitors, states)


def sample_observables(trajectory: Trajectory, observables: dict[str, SparseOperator],
                       metadata: dict | None = None) -> TimeSeries:
    """Evaluate ``Tr(O rho(t))`` on stored states (plus any precomputed ones)."""
    values = dict(trajectory.expectations)
    if observables:
        if trajectory.states is None:
            raise ValueError("trajectory was propagated without keep_states")
        for name, op in observables.items():
            if op.dims != trajectory.dims:
                raise DimensionMismatchError(f"observable {name!r} built on other dims")
            coo = op.matrix.tocoo()
            values[name] = np.einsum(
                "k,tk->t", coo.data, trajectory.states[:, coo.col, coo.row]
            )
    meta = dict(metadata or {})
    meta.setdefault("monitors", trajectory.monitors)
    return TimeSeries(trajectory.times, values, meta)


def moment_observables(dims: SpaceDims, orders: Sequence[int],
                       with_population: bool = True) -> dict[str, SparseOperator]:
    """<a+^n a^n> (and <a+^n a^n s+ s>) for the requested orders."""
    ops = {}
    for n in orders:
        ops[observable_name(n)] = make_moment_observable(dims, n)
        if with_population:
            ops[observable_name(n, "population")] = make_moment_observable(dims, n, "population")
    return ops


def default_horizon(params: RabiParams, rates: RateSet) -> float:
    """5/gamma_a with losses, otherwise 20 periods 2 pi / coupling."""
    if rates.gamma_a > 0:
        return 5.0 / rates.gamma_a
    positive = [r for r in (rates.gamma_d, rates.gamma_p, rates.gamma_sigma) if r > 0]
    if positive:
        return 5.0 / min(positive)
    if params.coupling <= 0:
        raise ValueError("no rates and zero coupling: set an explicit horizon")
    return 20 * 2 * math.pi / params.coupling


def default_sample_dt(params: RabiParams, n_photons: float) -> float:
    """At least 20 samples per period of the fastest expected oscillation."""
    fastest = 2 * params.coupling * math.sqrt(n_photons + 1)
    if params.include_counter_rotating:
        fastest = max(fastest, 2 * params.omega0 + fastest)
    if fastest <= 0:
        fastest = params.omega0
    return 2 * math.pi / (20 * fastest)


def time_grid(params: RabiParams, rates: RateSet, initial: InitialState,
              settings: SolverSettings) -> np.ndarray:
    horizon = settings.horizon or default_horizon(params, rates)
    dt = settings.sample_dt or default_sample_dt(params, initial.mean_photons)
    n = int(math.ceil(horizon / dt))
    return np.linspace(0.0, horizon, n + 1)


def simulate(params: RabiParams, rates: RateSet, initial: InitialState, dims: SpaceDims,
             orders: Sequence[int] = (1, 2, 3, 4, 5), t_grid=None,
             settings: SolverSettings | None = None,
             extra_observables: dict[str, SparseOperator] | None = None) -> TimeSeries:
    """Build H and L, propagate from ``initial`` and return the moment time series."""
    settings = settings or SolverSettings()
    if t_grid is None:
        t_grid = time_grid(params, rates, initial, settings)
    liouv = build_liouvillian(build_hamiltonian(params, dims), build_dissipators(rates, dims), dims)
    rho0 = DensityMatrix.from_initial_state(initial, dims)
    ops = moment_observables(dims, [n for n in orders if n <= dims.n_max])
    ops.update(extra_observables or {})
    traj = propagate(liouv, rho0, t_grid, settings=settings, observables=ops)
    meta = {
        "solver": "density_matrix",
        "model_level": params.model_level,
        "params": {"coupling": params.coupling, "omega0": params.omega0,
                   "d_a": params.diamagnetic,
                   "include_counter_rotating": params.include_counter_rotating,
                   "include_diamagnetic": params.include_diamagnetic},
        "rates": {"gamma_a": rates.gamma_a, "gamma_d": rates.gamma_d,
                  "gamma_p": rates.gamma_p, "gamma_sigma": rates.gamma_sigma},
        "initial_state": {"kind": initial.kind, "photon_param": str(initial.photon_param)},
        "n_max": dims.n_max,
        "settings": settings.as_dict(),
        "monitors": traj.monitors,
    }
    return TimeSeries(traj.times, traj.expectations, meta)


@dataclass
class ConvergenceReport:
    n_max_values: list[int]
    differences: list[float]
    per_order: list[dict[int, float]]
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(self.differences) and self.differences[-1] <= self.threshold


def relative_difference(a: np.ndarray, b: np.ndarray) -> float:
    """max_t |a - b| / max_t |b| (0 when both vanish)."""
    scale = np.max(np.abs(b))
    diff = np.max(np.abs(a - b))
    if scale == 0:
        return 0.0 if diff == 0 else math.inf
    return float(diff / scale)


def convergence_check(params: RabiParams, rates: RateSet, initial: InitialState,
                      n_max_list: Sequence[int], orders: Sequence[int] = (1, 2, 3, 4, 5),
                      t_grid=None, settings: SolverSettings | None = None,
                      threshold: float = 1e-4) -> ConvergenceReport:
    """Compare moment trajectories between consecutive photon cutoffs.

    Passes when the difference between the last two cutoffs is within
    ``threshold``.
    """
    values = sorted(int(n) for n in n_max_list)
    if len(values) < 2:
        raise ValueError("need at least two truncation values")
    settings = settings or SolverSettings()
    if t_grid is None:
        t_grid = time_grid(params, rates, initial, settings)
    runs = [simulate(params, rates, initial, SpaceDims(n), orders, t_grid, settings)
            for n in values]
    diffs, per_order = [], []
    for prev, cur in zip(runs, runs[1:]):
        d = {n: relative_difference(prev.corr(n), cur.corr(n)) for n in orders}
        per_order.append(d)
        diffs.append(max(d.values()))
    return ConvergenceReport(values, diffs, per_order, threshold)
