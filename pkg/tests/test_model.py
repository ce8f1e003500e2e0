import numpy as np
import pytest
from conftest import dense_ladder, random_density

from rabicorr.lindblad import build_liouvillian
from rabicorr.model import (
    ParameterError,
    RabiParams,
    RateSet,
    build_dissipators,
    build_hamiltonian,
)
from rabicorr.operators import SpaceDims, make_atomic_ops, make_number


def test_uncoupled_hamiltonian_is_diagonal():
    dims = SpaceDims(5)
    h = build_hamiltonian(RabiParams(0.0), dims).to_dense()
    assert np.allclose(h, np.diag(np.diag(h)))
    for k in range(6):
        assert h[dims.index(k, True), dims.index(k, True)] == pytest.approx(k + 1)
        assert h[dims.index(k, False), dims.index(k, False)] == pytest.approx(k)


def test_rwa_conserves_excitations():
    dims = SpaceDims(8)
    h = build_hamiltonian(RabiParams(0.2), dims)
    sigma, sigma_dag, _ = make_atomic_ops(dims)
    exc = make_number(dims) + sigma_dag @ sigma
    comm = (h @ exc - exc @ h).to_dense()
    assert np.max(np.abs(comm)) <= 1e-12


def test_full_hamiltonian_matches_dense_construction():
    n_max, g = 7, 0.05
    dims = SpaceDims(n_max)
    params = RabiParams.for_level("full", g)
    a, s = dense_ladder(n_max)
    ad, sd = a.T, s.T
    x = a + ad
    d_a = g**2 / 2
    dense = ad @ a + sd @ s + g * (ad @ s + a @ sd) + g * (ad @ sd + a @ s) + d_a * x @ x
    h = build_hamiltonian(params, dims).to_dense()
    assert np.max(np.abs(h - dense)) <= 1e-14
    # vacuum-ground diagonal element carries only the diamagnetic zero-point term
    assert h[0, 0] == pytest.approx(d_a, abs=1e-15)
    assert build_hamiltonian(params, dims).hermiticity_error() <= 1e-12


def test_parameter_validation():
    with pytest.raises(ParameterError):
        RabiParams(0.1, d_a=0.001, include_counter_rotating=True, include_diamagnetic=True)
    with pytest.raises(ParameterError):
        RabiParams(0.1, include_diamagnetic=True)
    with pytest.raises(ParameterError):
        RabiParams(-0.1)
    with pytest.raises(ParameterError):
        RateSet(gamma_a=-1)
    p = RabiParams.for_level("full", 0.1)
    assert p.diamagnetic == pytest.approx(0.005)
    assert p.model_level == "full"
    assert RabiParams.for_level("rwa", 0.1).model_level == "rwa"


def test_zero_rates_give_no_channels():
    assert build_dissipators(RateSet(), SpaceDims(3)) == []


def test_channel_coefficients():
    rates = RateSet(0.1, 0.2, 0.3, 0.4)
    chans = {c.name: c.kappa for c in build_dissipators(rates, SpaceDims(2))}
    assert chans == pytest.approx({"cavity": 0.2, "decay": 0.4, "pump": 0.6, "dephasing": 0.2})


def test_every_channel_preserves_trace(rng):
    dims = SpaceDims(4)
    rho = random_density(dims.dim, rng)
    for chan in build_dissipators(RateSet(0.3, 0.2, 0.1, 0.4), dims):
        liouv = build_liouvillian(build_hamiltonian(RabiParams(0.0), dims) * 0, [chan], dims)
        assert abs(np.trace(liouv.apply(rho))) <= 1e-12


def test_dephasing_decays_coherence_at_gamma_sigma():
    # analytic 2x2: (gs/2)(D rho D - rho) leaves populations, scales coherences by -gs
    gs = 0.37
    dims = SpaceDims(1)
    chans = build_dissipators(RateSet(gamma_sigma=gs), dims)
    liouv = build_liouvillian(build_hamiltonian(RabiParams(0.0), dims) * 0, chans, dims)
    plus = np.array([1.0, 1.0, 0.0, 0.0]) / np.sqrt(2)  # |0> (x) |+>
    rho = np.outer(plus, plus)
    drho = liouv.apply(rho)
    assert drho[0, 0] == pytest.approx(0) and drho[1, 1] == pytest.approx(0)
    assert drho[0, 1] == pytest.approx(-gs * rho[0, 1])
    assert drho[1, 0] == pytest.approx(-gs * rho[1, 0])


@pytest.mark.parametrize("k", [1, 4, 9])
def test_cavity_channel_number_rate(k):
    ga = 0.013
    dims = SpaceDims(10)
    chans = build_dissipators(RateSet(gamma_a=ga), dims)
    liouv = build_liouvillian(build_hamiltonian(RabiParams(0.0), dims) * 0, chans, dims)
    rho = np.zeros((dims.dim, dims.dim))
    rho[dims.index(k, False), dims.index(k, False)] = 1.0
    rate = np.trace(make_number(dims).to_dense() @ liouv.apply(rho)).real
    assert rate == pytest.approx(-2 * ga * k, rel=1e-13)
