import math
from fractions import Fraction

import pytest

from src.evolution import onsite_moment
from src.lattice import LatticeSpec, MultiIndex, PotentialCoefficients
from src.oracle import (DimensionTooLargeError, NonIntegrableActionError, OracleConfig, box_radius,
                        direct_correlator, direct_correlators)
from src.reduction import gaussian_reduce
from src.symmetry import apply_group, symmetry_group
from src.verification import indices_up_to


def test_single_site_gaussian():
    spec = LatticeSpec.numeric(1, 1, k=1, lam=0, w=0)
    result = direct_correlator(spec, spec.index((2,)))
    assert result.normalized == pytest.approx(1.0, abs=1e-10)
    assert result.method == 'tensor'
    assert result.as_dict()['nodes'] == 128


def test_odd_correlator_vanishes(numeric_two_site):
    result = direct_correlator(numeric_two_site, numeric_two_site.index((2, 1)))
    assert result.value == 0.0
    assert result.detail == {'parity': 'odd'}


def test_quartic_site_matches_onsite_moments():
    spec = LatticeSpec.numeric(1, 1, k=1, lam=Fraction(1, 2), w=0)
    pot = PotentialCoefficients(k=1, lam=Fraction(1, 2))
    expected = onsite_moment(4, pot) / onsite_moment(0, pot)
    assert direct_correlator(spec, spec.index((4,))).normalized == pytest.approx(expected, rel=1e-9)


def test_two_site_gaussian_matches_exact_covariance():
    spec = LatticeSpec.numeric(1, 2, k=2, lam=0, w=Fraction(1, 2))
    exact = float(gaussian_reduce(spec.index((1, 1)), spec))
    assert exact == pytest.approx(0.5 / 3.75)
    assert direct_correlator(spec, spec.index((1, 1))).normalized == pytest.approx(exact, rel=1e-9)


def test_non_integrable_actions():
    with pytest.raises(NonIntegrableActionError, match='non-integrable action'):
        direct_correlator(LatticeSpec.numeric(1, 1, lam=-1, w=0), MultiIndex.vacuum())
    # gaussian with a kinetic form that is not positive definite
    spec = LatticeSpec.numeric(1, 2, k=1, lam=0, w=2)
    with pytest.raises(NonIntegrableActionError):
        direct_correlator(spec, spec.index((1, 1)))


def test_tensor_rule_site_limit():
    spec = LatticeSpec.numeric(1, 5)
    with pytest.raises(DimensionTooLargeError, match='dimension too large'):
        direct_correlator(spec, spec.index((2, 0, 0, 0, 0)))


def test_symbolic_couplings_rejected(two_site):
    with pytest.raises(ValueError):
        direct_correlator(two_site, two_site.index((1, 1)))


def test_unknown_method():
    with pytest.raises(ValueError):
        OracleConfig(method='quadrature')


def test_box_radius_grows_with_occupation(numeric_two_site):
    small = box_radius(numeric_two_site, numeric_two_site.index((0, 0)), 1e-12)
    large = box_radius(numeric_two_site, numeric_two_site.index((8, 0)), 1e-12)
    assert large > small > 0


def test_monte_carlo_within_error(numeric_two_site):
    nu = numeric_two_site.index((1, 1))
    reference = direct_correlator(numeric_two_site, nu).normalized
    sampled = direct_correlator(numeric_two_site, nu, OracleConfig(method='monte-carlo', samples=50_000, seed=3))
    assert sampled.method == 'monte-carlo'
    assert sampled.detail['samples'] == 50_000
    assert abs(sampled.normalized - reference) < 5 * sampled.normalized_error


@pytest.mark.slow
def test_three_site_monte_carlo_agrees_with_tensor_rule(numeric_three_site):
    nu = numeric_three_site.index((2, 2, 2))
    tensor = direct_correlator(numeric_three_site, nu)
    sampled = direct_correlator(numeric_three_site, nu, OracleConfig(method='monte-carlo', seed=20240101))
    combined = math.hypot(tensor.normalized_error, sampled.normalized_error)
    assert abs(sampled.normalized - tensor.normalized) < 3 * combined


@pytest.mark.slow
def test_correlators_are_invariant_under_lattice_symmetries(numeric_three_site):
    indices = indices_up_to(numeric_three_site, 4)
    results = direct_correlators(numeric_three_site, indices)
    for nu in indices:
        for g in symmetry_group(numeric_three_site):
            assert results[apply_group(g, nu)].normalized == pytest.approx(results[nu].normalized, rel=1e-8, abs=1e-12)


def test_monte_carlo_is_seeded(numeric_two_site):
    nu = numeric_two_site.index((2, 0))
    cfg = OracleConfig(method='monte-carlo', samples=2_000, seed=11)
    assert direct_correlator(numeric_two_site, nu, cfg).normalized == direct_correlator(numeric_two_site, nu, cfg).normalized


def test_batch_evaluation(numeric_two_site):
    indices = [numeric_two_site.index(d) for d in [(0, 0), (1, 1), (2, 0)]]
    results = direct_correlators(numeric_two_site, indices)
    assert set(results) == set(indices)
    assert results[indices[0]].normalized == pytest.approx(1.0)
