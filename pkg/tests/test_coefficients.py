import random
from fractions import Fraction

import pytest

from src.coefficients import (Coefficient, Monomial, ONE, ZERO, UnassignedSymbolError, ZeroCouplingError,
                              coeff_add, coeff_eval, coeff_mul, format_rational, to_fraction)

k = Coefficient.symbol('k')
w = Coefficient.symbol('w')
lam = Coefficient.symbol('lambda')


def test_ring_arithmetic():
    assert (k + w) * (k - w) == k * k - w * w
    assert k - k == ZERO
    assert not (k - k)
    assert k * k.inverse() == ONE
    assert (k / lam) * lam == k
    assert 2 * k == k + k


def test_zero_terms_are_dropped():
    c = Coefficient({Monomial({'k': 1}): 0, Monomial(): Fraction(1, 3)})
    assert c.is_constant()
    assert c.constant_value() == Fraction(1, 3)
    assert c.symbols() == []


def test_monomial_powers_cancel():
    assert Monomial({'k': 2}) * Monomial({'k': -2}) == Monomial.one()
    assert (k ** 2 * lam ** -1).symbols() == ['k', 'lambda']


def test_multi_term_inverse_rejected():
    with pytest.raises(ValueError):
        (k + w).inverse()


def test_exact_evaluation():
    c = k / lam - Fraction(1, 2) * w
    assert c.evaluate({'k': 1, 'lambda': Fraction(1, 2), 'w': Fraction(1, 4)}) == Fraction(15, 8)


def test_unassigned_symbol():
    with pytest.raises(UnassignedSymbolError, match='unassigned symbol: lambda'):
        (k / lam).evaluate({'k': 1})


def test_division_by_zero_coupling():
    with pytest.raises(ZeroCouplingError, match='division by zero coupling'):
        (k / lam).evaluate({'k': 1, 'lambda': 0})
    with pytest.raises(ZeroCouplingError):
        (k / lam).substitute({'lambda': 0})


def test_partial_substitution_keeps_free_symbols():
    c = (k * k + w) / lam
    partial = c.substitute({'k': 2})
    assert partial.symbols() == ['lambda', 'w']
    assert partial.evaluate({'lambda': 2, 'w': 2}) == 3


def test_laurent_derivative():
    c = k ** 2 / lam
    assert c.derivative('lambda') == -(k ** 2) * lam ** -2
    assert c.derivative('w') == ZERO


def test_serialized_terms_use_rational_strings():
    c = Fraction(-1, 2) * k / lam
    assert c.to_terms() == [{'monomial': {'k': 1, 'lambda': -1}, 'rational': '-1/2'}]
    assert Coefficient.from_terms(c.to_terms()) == c


def test_readable_text():
    assert str(Fraction(-1, 2) * k) == '-1/2*k'
    assert str(ZERO) == '0'
    assert format_rational(Fraction(6, 3)) == '2'


def test_coerce_and_to_fraction():
    assert Coefficient.coerce('3/4') == Fraction(3, 4)
    assert Coefficient.coerce('w') == w
    assert to_fraction('5/10') == Fraction(1, 2)
    with pytest.raises(TypeError):
        to_fraction(0.5)


def test_ring_helpers():
    three = Coefficient.constant(3)
    assert coeff_add(three / lam, -three / lam) == ZERO
    assert coeff_mul(w / lam, w / lam) == w ** 2 * lam ** -2
    assert coeff_mul(k, ONE) == k
    assert coeff_eval(coeff_add(k / lam, w / lam), {'k': 1, 'w': 1, 'lambda': 4}) == Fraction(1, 2)


# ============== Random coefficients ==============

POINT = {'k': Fraction(3, 2), 'w': Fraction(-1, 3), 'lambda': Fraction(2, 5)}


def random_coefficient(rng: random.Random) -> Coefficient:
    terms = {}
    for _ in range(rng.randint(0, 4)):
        monomial = Monomial({name: rng.randint(-2, 2) for name in POINT if rng.random() < 0.6})
        terms[monomial] = Fraction(rng.randint(-9, 9), rng.randint(1, 6))
    return Coefficient(terms)


@pytest.mark.parametrize('seed', range(25))
def test_random_ring_axioms(seed):
    rng = random.Random(seed)
    a, b, c = (random_coefficient(rng) for _ in range(3))
    assert (a + b) + c == a + (b + c)
    assert (a * b) * c == a * (b * c)
    assert a + b == b + a
    assert a * b == b * a
    assert a * (b + c) == a * b + a * c
    assert a + ZERO == a
    assert a * ONE == a
    assert a - a == ZERO


@pytest.mark.parametrize('seed', range(25))
def test_random_evaluation_is_homomorphism(seed):
    rng = random.Random(1000 + seed)
    a, b = random_coefficient(rng), random_coefficient(rng)
    assert (a + b).evaluate(POINT) == a.evaluate(POINT) + b.evaluate(POINT)
    assert (a * b).evaluate(POINT) == a.evaluate(POINT) * b.evaluate(POINT)
    assert coeff_eval(coeff_mul(a, b), POINT) == coeff_eval(a, POINT) * coeff_eval(b, POINT)
