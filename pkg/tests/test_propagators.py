import math

import numpy as np
import pytest

from src.propagators import (ToleranceUnachievableError, brillouin_integral, brillouin_window,
                             effective_params_series, lattice_effective_params, parse_params, propagator_circle,
                             propagator_circle_closed, propagator_circular_lattice, propagator_infinite_lattice,
                             propagator_line, propagator_series, propagator_value)


def test_line_propagator():
    assert propagator_line(1.0, 0.0) == 0.5
    assert propagator_line(2.0, -1.0) == pytest.approx(math.exp(-2.0) / 4.0)


def test_effective_parameters():
    params = lattice_effective_params(1.0, 0.9)
    assert params.Z_eff == pytest.approx(0.456, abs=1e-3)
    assert params.m_eff == pytest.approx(0.969, abs=1e-3)
    assert set(params.as_dict()) == {'m_eff', 'Z_eff'}


@pytest.mark.parametrize('t', [0.0, 0.5, 1.0, 2.0, 4.0, 7.5])
def test_circle_series_matches_closed_form(t):
    assert propagator_circle(1.0, 8.0, t) == pytest.approx(propagator_circle_closed(1.0, 8.0, t), abs=1e-10)


def test_circle_is_periodic():
    assert propagator_circle(1.0, 8.0, 1.0) == pytest.approx(propagator_circle(1.0, 8.0, 9.0), abs=1e-10)
    assert propagator_circle(1.0, 8.0, 3.0) == pytest.approx(propagator_circle(1.0, 8.0, 5.0), abs=1e-10)


def test_large_circle_approaches_line():
    for t in (0.0, 0.5, 1.0, 1.5, 2.0):
        ratio = propagator_circle(1.0, 8.0, t) / propagator_line(1.0, t)
        assert abs(ratio - 1.0) < 0.05
    assert propagator_circle_closed(1.0, 8.0, 2.0) / propagator_line(1.0, 2.0) == pytest.approx(1.0186, abs=1e-4)


def test_tolerance_below_rounding_floor():
    with pytest.raises(ToleranceUnachievableError, match='tolerance unachievable'):
        propagator_circle(1.0, 8.0, 0.0, tol=1e-20)


@pytest.mark.parametrize('n', [0, 1, 2, 3])
def test_brillouin_integral_matches_closed_form(n):
    assert brillouin_integral(1.0, 0.5, n) == pytest.approx(propagator_infinite_lattice(1.0, 0.5, n), abs=1e-10)


def test_long_circular_lattice_matches_infinite_lattice():
    for n in range(4):
        assert propagator_circular_lattice(1.0, 64, 0.5, n) == pytest.approx(
            propagator_infinite_lattice(1.0, 0.5, n), abs=1e-10)


def test_effective_params_series_near_continuum():
    exact = lattice_effective_params(1.0, 0.05)
    series = effective_params_series(1.0, 0.05)
    assert series.m_eff == pytest.approx(exact.m_eff, rel=1e-6)
    assert series.Z_eff == pytest.approx(exact.Z_eff, rel=1e-6)


def test_nonpositive_mass_rejected():
    with pytest.raises(ValueError, match='m must be positive'):
        propagator_line(0.0, 1.0)
    with pytest.raises(ValueError):
        lattice_effective_params(-1.0, 0.5)


def test_brillouin_window():
    assert list(brillouin_window(4)) == [-1, 0, 1, 2]
    assert list(brillouin_window(5)) == [-2, -1, 0, 1, 2]


def test_circular_lattice_from_period():
    by_extent = propagator_value('circular', {'m': 1.0, 'a': 0.5, 'N': 16}, 2)
    by_period = propagator_value('circular', {'m': 1.0, 'a': 0.5, 'T': 8.0}, 2)
    assert by_extent == by_period


def test_series_and_params():
    params = parse_params('m=1; T=8')
    assert params == {'m': 1.0, 'T': 8.0}
    values = propagator_series('circle', params, np.linspace(0.0, 2.0, 5))
    assert values.shape == (5,)
    assert np.all(np.diff(values) < 0)
    with pytest.raises(ValueError):
        propagator_series('sphere', params, [0.0])
