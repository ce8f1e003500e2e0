import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rabicorr.operators import (
    DimensionMismatchError,
    SpaceDims,
    SparseOperator,
    TruncationError,
    falling_factorial,
    make_annihilator,
    make_atomic_ops,
    make_moment_observable,
    make_number,
    op_add_scaled,
    op_mul,
)


def photon_block(op, dims):
    """Photon-space matrix of an operator of the form F (x) I2."""
    return op.to_dense()[::2, ::2]


def test_space_dims():
    dims = SpaceDims(3)
    assert dims.dim == 8 and dims.atom_levels == 2
    assert dims.index(2, True) == 5
    with pytest.raises(ValueError):
        SpaceDims(0)


def test_annihilator_entries_nmax1():
    a = photon_block(make_annihilator(SpaceDims(1)), None)
    assert np.array_equal(a, [[0, 1], [0, 0]])


def test_annihilator_entries_nmax3():
    a = photon_block(make_annihilator(SpaceDims(3)), None)
    expected = np.zeros((4, 4))
    expected[0, 1], expected[1, 2], expected[2, 3] = 1, math.sqrt(2), math.sqrt(3)
    assert np.allclose(a, expected, atol=0, rtol=1e-15)


@pytest.mark.parametrize("n_max", [1, 7, 50])
def test_number_operator_diagonal(n_max):
    dims = SpaceDims(n_max)
    a = make_annihilator(dims)
    num = (a.dag() @ a).to_dense()
    assert np.allclose(np.diag(num)[::2], np.arange(n_max + 1), atol=1e-13)
    assert np.allclose(num, make_number(dims).to_dense(), atol=1e-13)


def test_atomic_algebra(small_dims):
    sigma, sigma_dag, inv = make_atomic_ops(small_dims)
    eye = np.eye(small_dims.dim)
    anti = (sigma @ sigma_dag + sigma_dag @ sigma).to_dense()
    assert np.array_equal(anti, eye)
    assert np.array_equal((inv @ inv).to_dense(), eye)
    assert (sigma @ sigma).nnz == 0
    assert np.array_equal(inv.to_dense(),
                          (sigma_dag @ sigma - sigma @ sigma_dag).to_dense())


def test_commutator_fails_only_at_cutoff():
    dims = SpaceDims(6)
    a = make_annihilator(dims)
    comm = (a @ a.dag() - a.dag() @ a).to_dense()
    diag = np.diag(comm)
    assert np.allclose(diag[:-2], 1.0, atol=1e-14)
    assert np.allclose(diag[-2:], -6.0, atol=1e-13)  # top Fock state: 0 - n_max
    assert np.allclose(comm - np.diag(diag), 0)


def test_a_adag_two_ways_on_interior():
    dims = SpaceDims(8)
    a = make_annihilator(dims)
    direct = (a @ a.dag()).to_dense()
    via_number = op_add_scaled(a.dag() @ a, SparseOperator.identity(dims), 1.0).to_dense()
    interior = slice(0, 2 * dims.n_max)
    assert np.max(np.abs(direct[interior, interior] - via_number[interior, interior])) <= 1e-14


def test_cubic_falling_factorial_on_fock5():
    dims = SpaceDims(7)
    a = make_annihilator(dims)
    ad = a.dag()
    op = ad @ ad @ ad @ a @ a @ a
    psi = np.zeros(dims.dim)
    psi[dims.index(5, False)] = 1.0
    assert np.allclose(op.matrix @ psi, 60 * psi, atol=1e-12)


def test_products_dims_mismatch():
    with pytest.raises(DimensionMismatchError):
        op_mul(make_annihilator(SpaceDims(2)), make_annihilator(SpaceDims(3)))
    with pytest.raises(DimensionMismatchError):
        make_annihilator(SpaceDims(2)) + make_annihilator(SpaceDims(3))


def test_canonical_entries():
    dims = SpaceDims(1)
    op = SparseOperator.from_entries(dims, [1, 0, 1], [2, 0, 2], [1.0, 2.0, 3.0])
    assert op.entries() == [(0, 0, 2 + 0j), (1, 2, 4 + 0j)]
    with pytest.raises(ValueError):
        SparseOperator.from_entries(dims, [0], [1], [1.0], hermitian_hint=True)


def test_operators_are_immutable(small_dims):
    a = make_annihilator(small_dims)
    with pytest.raises(ValueError):
        a.matrix.data[0] = 5.0


def test_moment_observable_examples():
    dims = SpaceDims(5)
    n1 = make_moment_observable(dims, 1).to_dense()
    assert np.allclose(n1, make_number(dims).to_dense())
    n2 = make_moment_observable(dims, 2).to_dense()
    assert n2[dims.index(3, False), dims.index(3, False)] == 6
    pop = make_moment_observable(dims, 1, "population").to_dense()
    assert pop[dims.index(2, True), dims.index(2, True)] == 2
    assert pop[dims.index(2, False), dims.index(2, False)] == 0


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_sigma_moments_match_operator_products(n):
    dims = SpaceDims(6)
    a = make_annihilator(dims)
    ad = a.dag()
    sigma, sigma_dag, _ = make_atomic_ops(dims)
    prod = SparseOperator.identity(dims)
    for _ in range(n):
        prod = prod @ ad
    for _ in range(n - 1):
        prod = prod @ a
    assert np.allclose(make_moment_observable(dims, n, "sigma").to_dense(),
                       (prod @ sigma).to_dense(), atol=1e-12)
    assert np.allclose(make_moment_observable(dims, n, "sigma_dag").to_dense(),
                       make_moment_observable(dims, n, "sigma").dag().to_dense())


def test_moment_order_limits():
    dims = SpaceDims(3)
    with pytest.raises(TruncationError):
        make_moment_observable(dims, 4)
    with pytest.raises(ValueError):
        make_moment_observable(dims, 0)
    assert make_moment_observable(dims, 0, "population").nnz == dims.fock_dim


@settings(max_examples=40, deadline=None)
@given(n_max=st.integers(1, 25), data=st.data())
def test_falling_factorial_diagonal(n_max, data):
    n = data.draw(st.integers(1, n_max))
    dims = SpaceDims(n_max)
    diag = np.real(np.diag(make_moment_observable(dims, n).to_dense()))[::2]
    expected = [math.factorial(k) / math.factorial(k - n) if k >= n else 0.0
                for k in range(n_max + 1)]
    assert np.allclose(diag, expected, rtol=1e-13, atol=0)
    assert falling_factorial(n_max, n) == expected[-1]


@pytest.mark.parametrize("atomic", ["none", "population"])
def test_moment_hermiticity(atomic):
    dims = SpaceDims(12)
    for n in range(1, 12):
        assert make_moment_observable(dims, n, atomic).hermiticity_error() <= 1e-12


def test_photon_and_atom_operators_commute():
    dims = SpaceDims(5)
    a = make_annihilator(dims)
    for atom_op in make_atomic_ops(dims):
        for ph in (a, a.dag(), make_moment_observable(dims, 3)):
            comm = ph @ atom_op - atom_op @ ph
            assert comm.nnz == 0
