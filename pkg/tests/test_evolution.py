import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.special import gamma

from src.evolution import (NonIntegrablePotentialError, SingularFlowPointError, classify_rows,
                           dependency_closure, evaluate_correlator, generate_flow_system, initial_primitive_values,
                           integrate_flow, onsite_moment)
from src.lattice import LatticeSpec, MultiIndex, PotentialCoefficients
from src.oracle import direct_correlator
from src.verification import expected_single_site_k_flow, expected_single_site_lambda_flow, indices_up_to


def _rows(system):
    label = system.labels[0]
    return {system.spec.dense(nu): system.matrices[label][nu] for nu in system.basis}


# ============== Onsite moments ==============

def test_gaussian_moment():
    assert onsite_moment(2, PotentialCoefficients(k=1, lam=0)) == pytest.approx(math.sqrt(2 * math.pi), rel=1e-10)


def test_quartic_normalization():
    expected = 4 ** 0.25 * gamma(0.25) / 2
    assert onsite_moment(0, PotentialCoefficients(k=0, lam=1)) == pytest.approx(expected, rel=1e-10)


def test_odd_moment_of_even_potential():
    assert onsite_moment(3, PotentialCoefficients(k=1, lam=1)) == 0.0


def test_shifted_potential_has_odd_moments():
    assert onsite_moment(1, PotentialCoefficients(a=1, k=1, lam=0)) == pytest.approx(
        -math.sqrt(2 * math.pi) * math.exp(0.5), rel=1e-8)


def test_non_integrable_potential():
    with pytest.raises(NonIntegrablePotentialError):
        onsite_moment(0, PotentialCoefficients(k=1, lam=-1))
    with pytest.raises(NonIntegrablePotentialError):
        onsite_moment(0, PotentialCoefficients(k=0, lam=0))
    with pytest.raises(ValueError):
        onsite_moment(0, PotentialCoefficients())


def test_initial_values_need_random_field(numeric_two_site):
    with pytest.raises(ValueError):
        initial_primitive_values(numeric_two_site, [MultiIndex.vacuum()])


# ============== Flow systems ==============

def test_single_site_k_flow():
    system = generate_flow_system(LatticeSpec.uniform(1, 1), 'k')
    assert _rows(system) == expected_single_site_k_flow()


def test_single_site_lambda_flow():
    system = generate_flow_system(LatticeSpec.uniform(1, 1), 'lambda')
    assert _rows(system) == expected_single_site_lambda_flow()


def test_row_classification(numeric_two_site):
    system = generate_flow_system(numeric_two_site, 'w')
    kinds = {numeric_two_site.dense(row['row']): row['kind'] for row in classify_rows(system)}
    assert kinds == {(0, 0): 'one-term', (1, 1): 'one-term', (2, 0): 'many-term',
                     (0, 2): 'many-term', (2, 2): 'many-term'}


def test_dependency_closure(numeric_two_site, numeric_three_site):
    system = generate_flow_system(numeric_two_site, 'w')
    assert dependency_closure([MultiIndex.vacuum()], system) == set(system.basis)
    larger = generate_flow_system(numeric_three_site, 'w')
    assert dependency_closure([MultiIndex.vacuum()], larger) == set(larger.basis)
    assert len(larger.basis) == 14


def test_per_bond_system_has_one_matrix_per_bond(numeric_three_site):
    system = generate_flow_system(numeric_three_site, 'w_bonds')
    assert system.labels == ['w_0', 'w_1', 'w_2']
    assert len(system.describe()) == 3 * system.size


def test_unknown_parameter(numeric_two_site):
    with pytest.raises(ValueError):
        generate_flow_system(numeric_two_site, 'mass')


# ============== Integration ==============

def test_zero_length_flow_returns_initial_data(numeric_two_site):
    system = generate_flow_system(numeric_two_site, 'w')
    state = integrate_flow(system, 0.0)
    decoupled = numeric_two_site.with_bond_couplings([0])
    np.testing.assert_array_equal(state.values, initial_primitive_values(decoupled, system.basis))
    assert state.error_estimate == 0.0


def test_lambda_flow_matches_onsite_moments():
    system = generate_flow_system(LatticeSpec.numeric(1, 1, k=1), 'lambda')
    state = integrate_flow(system, 1.0, start=0.5)
    target = PotentialCoefficients(k=1, lam=1)
    p0, p2 = MultiIndex.from_dense((0,), 1), MultiIndex.from_dense((2,), 1)
    assert state.value(p0) == pytest.approx(onsite_moment(0, target), rel=1e-7)
    assert state.value(p2) == pytest.approx(onsite_moment(2, target), rel=1e-7)
    expected = onsite_moment(4, target) / onsite_moment(0, target)
    assert evaluate_correlator(MultiIndex.from_dense((4,), 1), system, state) == pytest.approx(expected, rel=1e-6)


def test_k_flow_matches_onsite_moments():
    system = generate_flow_system(LatticeSpec.numeric(1, 1), 'k')
    state = integrate_flow(system, 1.0)
    target = PotentialCoefficients(k=1, lam=Fraction(1, 2))
    normalized = state.normalized()
    assert normalized[MultiIndex.from_dense((2,), 1)] == pytest.approx(
        onsite_moment(2, target) / onsite_moment(0, target), rel=1e-7)


def test_lambda_flow_cannot_cross_zero():
    system = generate_flow_system(LatticeSpec.numeric(1, 1), 'lambda')
    with pytest.raises(SingularFlowPointError, match='singular flow point'):
        integrate_flow(system, -0.5, start=0.5)
    with pytest.raises(ValueError):
        integrate_flow(system, 1.0)


def test_bad_path_and_initial_vector(numeric_two_site):
    system = generate_flow_system(numeric_two_site, 'w')
    with pytest.raises(ValueError):
        integrate_flow(system, 0.25, path='zigzag')
    with pytest.raises(ValueError):
        integrate_flow(system, 0.25, initial=[1.0, 2.0])


@pytest.mark.slow
def test_two_site_flow_matches_oracle(numeric_two_site):
    system = generate_flow_system(numeric_two_site, 'w')
    state = integrate_flow(system, 0.25)
    assert state.error_estimate < 1e-6
    for dense in [(1, 1), (2, 0), (2, 2), (4, 0), (3, 1)]:
        nu = numeric_two_site.index(dense)
        direct = direct_correlator(numeric_two_site, nu).normalized
        assert evaluate_correlator(nu, system, state) == pytest.approx(direct, rel=1e-5)


@pytest.mark.slow
def test_sequential_path_matches_diagonal(numeric_three_site):
    system = generate_flow_system(numeric_three_site, 'w_bonds')
    target = [0.25, 0.25, 0.25]
    diagonal = integrate_flow(system, target, estimate_error=False)
    sequential = integrate_flow(system, target, path='sequential', estimate_error=False)
    np.testing.assert_allclose(sequential.values, diagonal.values, rtol=1e-7)


@pytest.mark.slow
def test_compressed_system_matches_full(numeric_three_site):
    full = generate_flow_system(numeric_three_site, 'w')
    compressed = generate_flow_system(numeric_three_site, 'w', compress=True)
    assert compressed.size < full.size
    full_state = integrate_flow(full, 0.25, estimate_error=False)
    compressed_state = integrate_flow(compressed, 0.25, estimate_error=False)
    for dense in [(2, 0, 0), (1, 1, 0), (2, 2, 0), (4, 0, 0)]:
        nu = numeric_three_site.index(dense)
        assert evaluate_correlator(nu, compressed, compressed_state) == pytest.approx(
            evaluate_correlator(nu, full, full_state), rel=1e-7)


@pytest.mark.slow
def test_square_lattice_smoke():
    spec = LatticeSpec.numeric(2, 2, w=Fraction(1, 8))
    system = generate_flow_system(spec, 'w')
    state = integrate_flow(system, 0.125)
    for nu in indices_up_to(spec, 4):
        direct = direct_correlator(spec, nu).normalized
        assert evaluate_correlator(nu, system, state) == pytest.approx(direct, rel=1e-5, abs=1e-12)
