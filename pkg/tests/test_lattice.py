from fractions import Fraction

import numpy as np
import pytest

from src.lattice import (LatticeError, LatticeSpec, MultiIndex, PotentialCoefficients, Site, continuum_couplings,
                         index_distance, is_primitive, lattice_bonds, norms, primitive_basis, tau,
                         truncation_radius, weight)


def test_sites_wrap_periodically():
    assert Site.of(5, 3) == Site((2,))
    assert Site.of((-1, 4), 3) == Site((2, 1))
    assert Site((0, 2)).shifted(1, 1, 3) == Site((0, 0))


@pytest.mark.parametrize('extent,dimension,expected', [(1, 1, 0), (2, 1, 1), (3, 1, 2), (4, 2, 4), (2, 2, 2)])
def test_neighbour_counts(extent, dimension, expected):
    assert len(Site((0,) * dimension).neighbors(extent)) == expected


def test_dense_conversion():
    nu = MultiIndex.from_dense((3, 0, 2), 3)
    assert nu.to_dense(3) == (3, 0, 2)
    assert weight(nu) == 5
    assert tau(nu) == 2
    assert MultiIndex.vacuum().weight == 0
    with pytest.raises(LatticeError):
        MultiIndex.from_dense((1, 2), 3)


def test_negative_occupation_rejected():
    with pytest.raises(LatticeError):
        MultiIndex({Site((0,)): -1})


def test_shift_underflow():
    nu = MultiIndex.from_dense((1, 0), 2)
    assert nu.shifted({Site((0,)): -1, Site((1,)): 2}).to_dense(2) == (0, 2)
    with pytest.raises(LatticeError, match='occupation underflow'):
        nu.shifted({Site((1,)): -1})


def test_text_key():
    nu = MultiIndex.from_dense((0, 3, 2), 3)
    assert nu.key() == '1:3|2:2'
    assert MultiIndex.from_key(nu.key()) == nu
    assert MultiIndex.from_key('') == MultiIndex.vacuum()


def test_norms_and_distance():
    nu = MultiIndex.from_dense((3, 0, 5), 3)
    result = norms(nu)
    assert (result.inf_norm, result.one_norm, result.distance_to_Hc) == (5, 8, 4)
    assert index_distance(nu, MultiIndex.from_dense((1, 1, 5), 3)) == 3


def test_primitivity_depends_on_top_power():
    nu = MultiIndex.from_dense((2, 1), 2)
    assert is_primitive(nu, 4)
    assert not is_primitive(nu, 3)
    with pytest.raises(LatticeError):
        is_primitive(nu, 5)


@pytest.mark.parametrize('dimension,extent,expected', [(1, 1, 0), (1, 2, 1), (1, 3, 3), (1, 5, 5),
                                                       (2, 2, 4), (2, 3, 18)])
def test_bond_counts(dimension, extent, expected):
    assert len(lattice_bonds(dimension, extent)) == expected


def test_potential_order():
    assert PotentialCoefficients().m_anh == 4
    assert PotentialCoefficients(lam=0, g='g').m_anh == 3
    assert PotentialCoefficients(lam=0).m_anh == 2
    assert not PotentialCoefficients(a=1).is_even
    with pytest.raises(LatticeError):
        PotentialCoefficients(k=0.5)


def test_uniform_and_per_site_symbols():
    assert LatticeSpec.uniform(1, 3).symbols() == ['k', 'lambda', 'w']
    per_site = LatticeSpec.per_site(1, 3)
    assert per_site.symbols() == ['k_0', 'k_1', 'k_2', 'lambda_0', 'lambda_1', 'lambda_2', 'w_0', 'w_1', 'w_2']
    assert not per_site.is_uniform()
    assert LatticeSpec.uniform(2, 3).is_uniform()


def test_mismatched_lengths_rejected():
    with pytest.raises(LatticeError):
        LatticeSpec(1, 3, (PotentialCoefficients(),) * 2, ('w',) * 3)
    with pytest.raises(LatticeError):
        LatticeSpec(1, 3, (PotentialCoefficients(),) * 3, ('w',))


def test_partial_coupling_substitution():
    spec = LatticeSpec.uniform(1, 2).with_couplings({'k': Fraction(1), 'lambda': Fraction(1, 2)})
    assert spec.symbols() == ['w']
    assert spec.mode == 'symbolic'
    assert spec.with_couplings({'w': Fraction(1, 4)}).is_numeric


def test_kinetic_matrix(numeric_three_site):
    matrix = numeric_three_site.kinetic_matrix()
    expected = np.array([[1.0, -0.25, -0.25], [-0.25, 1.0, -0.25], [-0.25, -0.25, 1.0]])
    np.testing.assert_allclose(matrix, expected)
    with pytest.raises(LatticeError):
        LatticeSpec.uniform(1, 3).kinetic_matrix()


def test_two_site_ring_has_single_bond():
    spec = LatticeSpec.numeric(1, 2, k=3, w=1)
    np.testing.assert_allclose(spec.kinetic_matrix(), [[3.0, -1.0], [-1.0, 3.0]])


@pytest.mark.parametrize('extent,parity,expected', [(1, True, 2), (2, True, 5), (3, True, 14), (2, False, 9)])
def test_primitive_basis_size(extent, parity, expected):
    assert len(primitive_basis(LatticeSpec.uniform(1, extent), parity)) == expected


def test_primitive_basis_order(two_site):
    basis = [two_site.dense(nu) for nu in primitive_basis(two_site)]
    assert basis == [(0, 0), (0, 2), (1, 1), (2, 0), (2, 2)]


def test_continuum_couplings():
    assert continuum_couplings(1.0, 0.5, 3) == {'k': 4.5, 'w': 2.0}
    assert continuum_couplings(1.0, 0.5, 2) == {'k': 4.5, 'w': 4.0}
    assert continuum_couplings(1.0, 0.5, 1) == {'k': 0.5, 'w': 0.0}
    with pytest.raises(LatticeError):
        continuum_couplings(0.0, 0.5, 3)


def test_truncation_radius():
    radius = truncation_radius(PotentialCoefficients(k=1, lam=Fraction(1, 2)), 4, 1e-12)
    assert 3.0 < radius < 10.0
    with pytest.raises(LatticeError, match='not confining'):
        truncation_radius(PotentialCoefficients(k=-1, lam=0), 0, 1e-12)
