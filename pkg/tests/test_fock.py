import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triphoton.fock import (
    ModeLayout,
    QuantumState,
    SparseOperator,
    annihilation,
    antihermitian_part,
    coherent,
    coherent_amplitudes,
    commutator,
    compose,
    creation,
    extended_lowering,
    hermitian_part,
    identity,
    interior_indices,
    number,
    permute_modes,
    product_state,
    single_mode_annihilation,
    vacuum,
)

from oracles import coherent_vector, dense_lowering, dense_mode_operator, poisson_mean

dims_strategy = st.lists(st.integers(2, 5), min_size=1, max_size=4)


@given(dims_strategy)
def test_index_round_trip(dims):
    layout = ModeLayout(dims)
    assert layout.dim == math.prod(dims)
    for i in range(layout.dim):
        assert layout.index(layout.occupation(i)) == i


def test_layout_rejects_small_dims():
    with pytest.raises(ValueError):
        ModeLayout([3, 1])
    with pytest.raises(ValueError):
        ModeLayout([])


def test_annihilation_dim2():
    a = annihilation(ModeLayout([2]), 0).toarray()
    np.testing.assert_array_equal(a, [[0, 1], [0, 0]])


def test_annihilation_dim4_on_three():
    a = annihilation(ModeLayout([4]), 0)
    ket = np.zeros(4)
    ket[3] = 1
    np.testing.assert_allclose(a @ ket, [0, 0, math.sqrt(3), 0])


@given(dims_strategy, st.data())
def test_annihilation_matches_kronecker_oracle(dims, data):
    layout = ModeLayout(dims)
    mode = data.draw(st.integers(0, len(dims) - 1))
    expected = dense_mode_operator(dims, mode, dense_lowering(dims[mode]))
    np.testing.assert_array_equal(annihilation(layout, mode).toarray(), expected)


def test_annihilation_connects_one_photon_changes():
    layout = ModeLayout([3, 4, 3])
    occ = layout.occupations()
    rows, cols = annihilation(layout, 1).matrix.nonzero()
    diff = occ[cols] - occ[rows]
    np.testing.assert_array_equal(diff, np.tile([0, 1, 0], (len(rows), 1)))


def test_commutator_identity_on_interior():
    layout = ModeLayout([5, 4])
    for k in range(2):
        c = commutator(annihilation(layout, k), creation(layout, k)).toarray()
        inner = interior_indices(layout, [k], 1)
        np.testing.assert_allclose(c[np.ix_(inner, inner)], np.eye(len(inner)), atol=1e-14)
        # the truncation artifact sits on the top level only
        top = np.setdiff1d(np.arange(layout.dim), inner)
        assert np.all(np.abs(np.diag(c)[top] - (-(layout.cutoff(k)))) < 1e-12)


def test_cross_mode_commutator_vanishes():
    layout = ModeLayout([3, 4, 3])
    for k in range(3):
        for m in range(3):
            if k != m:
                assert commutator(annihilation(layout, k), creation(layout, m)).matrix.count_nonzero() == 0


def test_number_operator_diagonal():
    layout = ModeLayout([3, 4, 2])
    for k in range(3):
        n = number(layout, k).toarray()
        np.testing.assert_array_equal(n, np.diag(layout.occupations()[:, k]))


def test_hermitian_split_is_exact():
    rng = np.random.default_rng(3)
    layout = ModeLayout([3, 3])
    a = SparseOperator(layout, rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9)))
    total = hermitian_part(a) + antihermitian_part(a)
    # exact up to one rounding of the halving
    np.testing.assert_allclose(total.toarray(), a.toarray(), rtol=0, atol=1e-15 * np.abs(a.toarray()).max())
    assert hermitian_part(a).is_hermitian(0)


def test_compose_empty_is_identity():
    layout = ModeLayout([2, 3])
    np.testing.assert_array_equal(compose([], layout).toarray(), identity(layout).toarray())


def test_compose_single_factor_on_mode0():
    layout = ModeLayout([2, 2])
    a = single_mode_annihilation(2)
    np.testing.assert_array_equal(compose([(0, a)], layout).toarray(), np.kron(a.toarray(), np.eye(2)))


def test_compose_lowers_111_to_vacuum():
    layout = ModeLayout([3, 3, 3])
    a = single_mode_annihilation(3)
    op = compose([(0, a), (1, a), (2, a)], layout)
    ket = np.zeros(27)
    ket[layout.index((1, 1, 1))] = 1
    out = op @ ket
    expected = np.zeros(27)
    expected[0] = 1
    np.testing.assert_allclose(out, expected)
    oracle = dense_lowering(3)
    dense = np.kron(np.kron(oracle, oracle), oracle)
    np.testing.assert_allclose(op.toarray(), dense)


def test_compose_order_independent_and_associative():
    layout = ModeLayout([3, 2, 4])
    rng = np.random.default_rng(1)
    mats = [rng.normal(size=(d, d)) for d in layout.dims]
    a = compose([(0, mats[0]), (1, mats[1]), (2, mats[2])], layout)
    b = compose([(2, mats[2]), (0, mats[0]), (1, mats[1])], layout)
    c = compose([(0, mats[0])], layout) @ (compose([(1, mats[1])], layout) @ compose([(2, mats[2])], layout))
    np.testing.assert_allclose(a.toarray(), b.toarray())
    np.testing.assert_allclose(a.toarray(), c.toarray())


def test_compose_rejects_repeated_mode():
    layout = ModeLayout([2, 2])
    with pytest.raises(ValueError):
        compose([(0, np.eye(2)), (0, np.eye(2))], layout)


def test_vacuum_is_index_zero():
    st_ = vacuum(ModeLayout([3, 5, 2]))
    assert st_.data[0] == 1 and np.count_nonzero(st_.data) == 1


def test_coherent_zero_is_vacuum():
    layout = ModeLayout([8, 8])
    np.testing.assert_allclose(coherent(layout, 1, 0).data, vacuum(layout).data)


def test_coherent_matches_direct_series():
    np.testing.assert_allclose(coherent_amplitudes(20, 1.3 - 0.4j), coherent_vector(20, 1.3 - 0.4j), atol=1e-14)


def _mean_number(dim):
    layout = ModeLayout([dim])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        psi = coherent(layout, 0, math.sqrt(10)).data
    return float(np.vdot(psi, number(layout, 0) @ psi).real)


def test_coherent_dim30_matches_truncated_series():
    # renormalized truncation at 30 levels: compare with the truncated Poisson sum
    assert abs(_mean_number(30) - poisson_mean(math.sqrt(10), 30)) < 1e-12


def test_coherent_mean_photon_number_converges():
    # untruncated value is exactly 10; 32 levels are needed for 1e-6
    assert abs(_mean_number(32) - 10) < 1e-6
    assert abs(poisson_mean(math.sqrt(10), 200) - 10) < 1e-12


def test_coherent_warns_when_undertruncated():
    with pytest.warns(UserWarning):
        coherent_amplitudes(8, 3.0)


def test_density_validation():
    layout = ModeLayout([2])
    with pytest.raises(ValueError):
        QuantumState(layout, np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        QuantumState(layout, np.array([[0.5, 0.1], [0.0, 0.5]]))
    with pytest.raises(ValueError):
        QuantumState(layout, np.diag([1.5, -0.5]))
    rho = QuantumState(layout, np.diag([0.25, 0.75]))
    assert not rho.is_pure and rho.norm_error() < 1e-15


def test_product_state_mixed_factor():
    layout = ModeLayout([2, 3])
    rho = product_state(layout, [np.diag([0.5, 0.5]), np.array([0, 1, 0])])
    assert rho.data.shape == (6, 6)
    assert abs(np.trace(rho.data) - 1) < 1e-15


@settings(max_examples=20)
@given(st.permutations([0, 1, 2]))
def test_permute_modes_matches_transpose(order):
    rng = np.random.default_rng(7)
    layout = ModeLayout([2, 3, 4])
    psi = rng.normal(size=24) + 1j * rng.normal(size=24)
    psi /= np.linalg.norm(psi)
    out = permute_modes(QuantumState(layout, psi), order)
    assert out.layout.dims == tuple(layout.dims[j] for j in order)
    for i in range(layout.dim):
        occ = layout.occupation(i)
        assert out.data[out.layout.index([occ[j] for j in order])] == psi[i]


@pytest.mark.parametrize("power", [0, 1, 2, 4, 7])
def test_annihilation_power_matches_repeated_product(power):
    layout = ModeLayout([6, 9])
    direct = annihilation(layout, 1, power).toarray()
    repeated = annihilation(layout, 1).power(power).toarray()
    np.testing.assert_allclose(direct, repeated, rtol=1e-14, atol=1e-14)


def test_extended_lowering_matches_double_operator():
    layout = ModeLayout([5, 7, 6])
    ext = extended_lowering(layout, {0: 2, 2: 3})
    assert ext.dtype == np.clongdouble
    dbl = annihilation(layout, 0, 2) @ annihilation(layout, 2, 3)
    np.testing.assert_allclose(ext.toarray().astype(complex), dbl.toarray(), rtol=1e-15)
