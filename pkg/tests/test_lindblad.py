import math

import numpy as np
import pytest
from conftest import random_density

from rabicorr.lindblad import (
    DensityMatrix,
    InitialState,
    SolverSettings,
    build_liouvillian,
    convergence_check,
    hermitian_reduction,
    moment_observables,
    propagate,
    reachable_indices,
    relative_difference,
    sample_observables,
    simulate,
)
from rabicorr.model import RabiParams, RateSet, build_dissipators, build_hamiltonian
from rabicorr.operators import SpaceDims, make_moment_observable

EXACT = SolverSettings(rtol=1e-10, atol=1e-20)


def liouvillian(params, rates, dims):
    return build_liouvillian(build_hamiltonian(params, dims), build_dissipators(rates, dims), dims)


def test_hamiltonian_part_is_commutator(rng):
    dims = SpaceDims(4)
    params = RabiParams.for_level("full", 0.2)
    h = build_hamiltonian(params, dims).to_dense()
    rho = random_density(dims.dim, rng)
    liouv = liouvillian(params, RateSet(), dims)
    assert np.max(np.abs(liouv.apply(rho) - (-1j) * (h @ rho - rho @ h))) <= 1e-13


def test_liouvillian_is_trace_preserving(rng):
    dims = SpaceDims(6)
    rho = random_density(dims.dim, rng)
    liouv = liouvillian(RabiParams.for_level("full", 0.05), RateSet(1e-3, 1e-3, 2e-3, 1e-3), dims)
    assert abs(np.trace(liouv.apply(rho))) <= 1e-14
    # also as a row identity: vec(I)^T L = 0
    ident = np.eye(dims.dim).ravel(order="F")
    assert np.max(np.abs(ident @ liouv.matrix)) <= 1e-14


def test_cavity_loss_from_one_photon():
    ga = 0.02
    dims = SpaceDims(3)
    liouv = liouvillian(RabiParams(0.0), RateSet(gamma_a=ga), dims)
    rho = np.zeros((dims.dim, dims.dim))
    rho[dims.index(1, False), dims.index(1, False)] = 1
    drho = liouv.apply(rho)
    assert drho[dims.index(1, False), dims.index(1, False)].real == pytest.approx(-2 * ga)
    assert drho[dims.index(0, False), dims.index(0, False)].real == pytest.approx(2 * ga)


def test_spectrum_in_closed_left_half_plane():
    dims = SpaceDims(3)
    liouv = liouvillian(RabiParams.for_level("full", 0.1), RateSet(0.01, 0.02, 0.01, 0.03), dims)
    ev = np.linalg.eigvals(liouv.matrix.toarray())
    assert ev.real.max() <= 1e-12
    assert np.min(np.abs(ev)) <= 1e-12  # a stationary state exists


def test_static_without_coupling_or_rates():
    dims = SpaceDims(4)
    liouv = liouvillian(RabiParams(0.0), RateSet(), dims)
    rho0 = DensityMatrix.from_initial_state(InitialState("fock_atom_ground", 3), dims)
    traj = propagate(liouv, rho0, np.linspace(0, 100, 11), settings=EXACT,
                     observables=moment_observables(dims, [1, 2]))
    assert np.allclose(traj.expectations["g1"], 3, atol=1e-12)
    assert np.allclose(traj.expectations["g2"], 6, atol=1e-12)


def test_decay_cascade_matches_analytic():
    ga, dims = 0.01, SpaceDims(5)
    liouv = liouvillian(RabiParams(0.0), RateSet(gamma_a=ga), dims)
    rho0 = DensityMatrix.from_initial_state(InitialState("fock_atom_ground", 5), dims)
    t = np.linspace(0, 5 / ga, 201)
    traj = propagate(liouv, rho0, t, settings=EXACT, observables=moment_observables(dims, [1, 3]))
    assert np.allclose(traj.expectations["g1"].real, 5 * np.exp(-2 * ga * t), rtol=1e-7, atol=0)
    assert np.allclose(traj.expectations["g3"].real, 60 * np.exp(-6 * ga * t), rtol=1e-7, atol=0)


def test_vacuum_rabi_oscillation():
    w, dims = 0.05, SpaceDims(3)
    t = np.linspace(0, 2 * 2 * np.pi / w, 400)
    series = simulate(RabiParams(w), RateSet(), InitialState("fock_atom_excited", 0), dims,
                      [1], t, EXACT)
    assert np.max(np.abs(series.corr(1) - np.sin(w * t) ** 2)) <= 1e-8
    assert series.metadata["monitors"]["trace_error"] <= 1e-10


def test_restricted_propagation_matches_full_space():
    # a coherent seed populates every Fock level, so the restriction is trivial;
    # compare against a dense expm reference instead
    from scipy.linalg import expm
    dims = SpaceDims(4)
    params = RabiParams.for_level("full", 0.1)
    rates = RateSet(0.01, 0.02, 0.0, 0.01)
    liouv = liouvillian(params, rates, dims)
    rho0 = DensityMatrix.from_initial_state(InitialState("fock_atom_ground", 2), dims)
    t = np.array([0.0, 3.0, 7.5])
    traj = propagate(liouv, rho0, t, settings=EXACT, keep_states=True)
    big = liouv.matrix.toarray()
    for k, tk in enumerate(t):
        ref = (expm(big * tk) @ rho0.vec()).reshape(dims.dim, dims.dim, order="F")
        assert np.max(np.abs(traj.states[k] - ref)) <= 1e-9


def test_rwa_reachable_subspace_is_small():
    dims = SpaceDims(20)
    liouv = liouvillian(RabiParams(0.05), RateSet(1e-3, 1e-3, 0, 1e-3), dims)
    rho0 = DensityMatrix.from_initial_state(InitialState("fock_atom_ground", 10), dims)
    keep = reachable_indices(liouv.matrix, np.flatnonzero(rho0.vec()))
    assert keep.size < 0.2 * dims.dim**2


def test_hermitian_reduction_round_trip(rng):
    dims = SpaceDims(2)
    liouv = liouvillian(RabiParams.for_level("full", 0.3), RateSet(0.1, 0.1, 0.1, 0.1), dims)
    keep = np.arange(dims.dim**2)
    to_vec, extract, gen = hermitian_reduction(liouv.matrix, keep, dims.dim)
    rho = random_density(dims.dim, rng)
    y = rho.ravel(order="F")
    z = np.real(extract @ y)
    assert np.allclose(to_vec @ z, y, atol=1e-14)
    assert np.isrealobj(gen.toarray())
    assert np.allclose(to_vec @ (gen @ z), liouv.matrix @ y, atol=1e-13)


def test_sample_observables_on_stored_states():
    dims = SpaceDims(3)
    liouv = liouvillian(RabiParams(0.1), RateSet(0.01), dims)
    rho0 = DensityMatrix.from_initial_state(InitialState("fock_atom_ground", 2), dims)
    traj = propagate(liouv, rho0, np.linspace(0, 10, 6), settings=EXACT, keep_states=True)
    ident = make_moment_observable(dims, 0, "population")
    series = sample_observables(traj, {"pop": ident, "g1": make_moment_observable(dims, 1)})
    direct = [np.trace(make_moment_observable(dims, 1).to_dense() @ s) for s in traj.states]
    assert np.allclose(series["g1"], direct, atol=1e-14)
    assert np.all(series["pop"].real >= -1e-14)


def test_moment_beyond_occupied_levels_is_zero():
    dims = SpaceDims(8)
    series = simulate(RabiParams(0.05), RateSet(1e-3, 1e-3, 0, 1e-3),
                      InitialState("fock_atom_ground", 4), dims, [5],
                      np.linspace(0, 100, 11), EXACT)
    assert np.max(np.abs(series.corr(5))) <= 1e-12


def test_positivity_monitor():
    dims = SpaceDims(6)
    liouv = liouvillian(RabiParams.for_level("full", 0.1), RateSet(0.01, 0.01, 0.0, 0.01), dims)
    rho0 = DensityMatrix.from_initial_state(InitialState("coherent_atom_ground", 1.0), dims)
    s = SolverSettings(rtol=1e-9, atol=1e-12, positivity_every=5)
    traj = propagate(liouv, rho0, np.linspace(0, 50, 51), settings=s)
    assert traj.monitors["min_eigenvalue"] >= -1e-8
    assert traj.monitors["hermiticity_error"] <= 1e-12
    assert traj.monitors["flags"] == []


def test_initial_state_checks():
    with pytest.raises(ValueError):
        InitialState("fock_atom_ground", 15).check_dims(SpaceDims(10))
    with pytest.raises(ValueError):
        InitialState("coherent_atom_ground", 3.0).check_dims(SpaceDims(20))
    with pytest.raises(ValueError):
        InitialState("thermal", 1)
    rho = DensityMatrix.from_initial_state(InitialState("coherent_atom_ground", 1.5), SpaceDims(40))
    assert rho.trace_error() <= 1e-12 and rho.min_eigenvalue() >= -1e-12


def test_bad_time_grid():
    dims = SpaceDims(2)
    liouv = liouvillian(RabiParams(0.1), RateSet(), dims)
    rho0 = DensityMatrix.from_initial_state(InitialState("fock_atom_ground", 1), dims)
    with pytest.raises(ValueError):
        propagate(liouv, rho0, [0.0, 2.0, 1.0])
    with pytest.raises(ValueError):
        propagate(liouv, rho0, [1.0, 2.0])


def test_full_model_ground_state_holds_photons():
    # counter-rotating terms dress the stationary state with virtual photons
    dims = SpaceDims(8)
    liouv = liouvillian(RabiParams.for_level("full", 0.3), RateSet(1e-3, 1e-3, 0, 1e-3), dims)
    ev, vecs = np.linalg.eig(liouv.matrix.toarray())
    k = int(np.argmin(np.abs(ev)))
    rho = vecs[:, k].reshape(dims.dim, dims.dim, order="F")
    rho = rho / np.trace(rho)
    n_ss = np.trace(make_moment_observable(dims, 1).to_dense() @ rho).real
    assert n_ss > 1e-3
    rwa = liouvillian(RabiParams(0.3), RateSet(1e-3, 1e-3, 0, 1e-3), dims)
    ev, vecs = np.linalg.eig(rwa.matrix.toarray())
    k = int(np.argmin(np.abs(ev)))
    rho = vecs[:, k].reshape(dims.dim, dims.dim, order="F")
    rho = rho / np.trace(rho)
    assert abs(np.trace(make_moment_observable(dims, 1).to_dense() @ rho)) <= 1e-10


def test_relative_difference():
    assert relative_difference(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert relative_difference(np.array([1.0, 2.1]), np.array([1.0, 2.0])) == pytest.approx(0.05)
    assert relative_difference(np.zeros(3), np.zeros(3)) == 0.0
    assert math.isinf(relative_difference(np.ones(3), np.zeros(3)))


def test_convergence_under_cutoff_growth():
    params = RabiParams.for_level("full", 0.1)
    rates = RateSet(1e-2, 1e-2, 0, 1e-2)
    t = np.linspace(0, 60, 301)
    report = convergence_check(params, rates, InitialState("fock_atom_ground", 3), [6, 9, 12],
                               [1, 2], t, SolverSettings(rtol=1e-10, atol=1e-14))
    assert report.differences[1] < report.differences[0]
    assert report.passed
    with pytest.raises(ValueError):
        convergence_check(params, rates, InitialState(), [10])


def test_simulate_metadata():
    s = simulate(RabiParams(0.05), RateSet(1e-2), InitialState("fock_atom_ground", 2),
                 SpaceDims(4), [1, 2], np.linspace(0, 10, 5))
    assert s.metadata["model_level"] == "rwa"
    assert s.metadata["n_max"] == 4
    assert set(s.observables) == {"g1", "g1_ee", "g2", "g2_ee"}
