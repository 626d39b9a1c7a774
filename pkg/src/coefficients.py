"""
Exact coefficient ring for reduction coefficients.
Rational-coefficient Laurent polynomials in coupling symbols, with exact
evaluation against rational assignments.
"""

import logging
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

logger = logging.getLogger(__name__)

Rational = Union[int, Fraction]
ExponentTuple = Tuple[Tuple[str, int], ...]


class CoefficientError(ValueError):
    """Base class for coefficient evaluation failures."""


class UnassignedSymbolError(CoefficientError):
    pass


class ZeroCouplingError(CoefficientError):
    pass


def to_fraction(value) -> Fraction:
    """Coerce int, Fraction or a 'p/q' string to an exact rational."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"Cannot use {value!r} as an exact rational")


class Monomial:
    """Product of coupling symbols raised to nonzero integer powers."""

    __slots__ = ('exponents', '_hash')

    def __init__(self, exponents: Union[Mapping[str, int], Iterable[Tuple[str, int]]] = ()):
        items = exponents.items() if isinstance(exponents, Mapping) else exponents
        merged: Dict[str, int] = {}
        for symbol, power in items:
            merged[symbol] = merged.get(symbol, 0) + int(power)
        self.exponents: ExponentTuple = tuple(sorted((s, p) for s, p in merged.items() if p != 0))
        self._hash = hash(self.exponents)

    @classmethod
    def one(cls) -> 'Monomial':
        return _ONE_MONOMIAL

    def __mul__(self, other: 'Monomial') -> 'Monomial':
        if not other.exponents:
            return self
        if not self.exponents:
            return other
        return Monomial(self.exponents + other.exponents)

    def __pow__(self, power: int) -> 'Monomial':
        return Monomial((s, p * power) for s, p in self.exponents)

    def __eq__(self, other) -> bool:
        return isinstance(other, Monomial) and self.exponents == other.exponents

    def __lt__(self, other: 'Monomial') -> bool:
        return self.exponents < other.exponents

    def __hash__(self) -> int:
        return self._hash

    def degree(self, symbol: str) -> int:
        for s, p in self.exponents:
            if s == symbol:
                return p
        return 0

    def symbols(self) -> List[str]:
        return [s for s, _ in self.exponents]

    def as_dict(self) -> Dict[str, int]:
        return dict(self.exponents)

    def __repr__(self) -> str:
        return f"Monomial({dict(self.exponents)})"

    def __str__(self) -> str:
        if not self.exponents:
            return '1'
        parts = []
        for symbol, power in self.exponents:
            parts.append(symbol if power == 1 else f"{symbol}^{power}")
        return '*'.join(parts)


_ONE_MONOMIAL = Monomial()


class Coefficient:
    """
    Immutable sum of (nonzero rational) x (Laurent monomial).
    Zero terms are never stored, so the empty sum is the ring zero.
    """

    __slots__ = ('_terms', '_hash')

    def __init__(self, terms: Optional[Mapping[Monomial, Rational]] = None):
        cleaned: Dict[Monomial, Fraction] = {}
        if terms:
            for monomial, value in terms.items():
                q = to_fraction(value)
                if q:
                    cleaned[monomial] = q
        self._terms = cleaned
        self._hash = None

    @classmethod
    def _raw(cls, terms: Dict[Monomial, Fraction]) -> 'Coefficient':
        obj = cls.__new__(cls)
        obj._terms = terms
        obj._hash = None
        return obj

    @classmethod
    def constant(cls, value) -> 'Coefficient':
        q = to_fraction(value)
        return cls._raw({_ONE_MONOMIAL: q} if q else {})

    @classmethod
    def symbol(cls, name: str, power: int = 1) -> 'Coefficient':
        return cls._raw({Monomial([(name, power)]): Fraction(1)})

    @classmethod
    def coerce(cls, value) -> 'Coefficient':
        """Turn a symbol name, rational or Coefficient into a Coefficient."""
        if isinstance(value, Coefficient):
            return value
        if isinstance(value, str):
            try:
                return cls.constant(Fraction(value))
            except ValueError:
                return cls.symbol(value)
        return cls.constant(value)

    @property
    def terms(self) -> Dict[Monomial, Fraction]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __bool__(self) -> bool:
        return bool(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def is_constant(self) -> bool:
        return all(not m.exponents for m in self._terms)

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise ValueError(f"Coefficient {self} is not a constant")
        return self._terms.get(_ONE_MONOMIAL, Fraction(0))

    def symbols(self) -> List[str]:
        found = set()
        for monomial in self._terms:
            found.update(monomial.symbols())
        return sorted(found)

    # ============== Ring operations ==============

    def __add__(self, other) -> 'Coefficient':
        other = Coefficient.coerce(other) if not isinstance(other, Coefficient) else other
        if not other._terms:
            return self
        if not self._terms:
            return other
        result = dict(self._terms)
        for monomial, value in other._terms.items():
            total = result.get(monomial, 0) + value
            if total:
                result[monomial] = total
            else:
                result.pop(monomial, None)
        return Coefficient._raw(result)

    __radd__ = __add__

    def __neg__(self) -> 'Coefficient':
        return Coefficient._raw({m: -v for m, v in self._terms.items()})

    def __sub__(self, other) -> 'Coefficient':
        other = Coefficient.coerce(other) if not isinstance(other, Coefficient) else other
        return self + (-other)

    def __rsub__(self, other) -> 'Coefficient':
        return Coefficient.coerce(other) - self

    def __mul__(self, other) -> 'Coefficient':
        if not isinstance(other, Coefficient):
            q = to_fraction(other)
            if not q:
                return ZERO
            return Coefficient._raw({m: v * q for m, v in self._terms.items()})
        result: Dict[Monomial, Fraction] = {}
        for m1, v1 in self._terms.items():
            for m2, v2 in other._terms.items():
                monomial = m1 * m2
                total = result.get(monomial, 0) + v1 * v2
                if total:
                    result[monomial] = total
                else:
                    result.pop(monomial, None)
        return Coefficient._raw(result)

    __rmul__ = __mul__

    def __pow__(self, power: int) -> 'Coefficient':
        if power < 0:
            if len(self._terms) != 1:
                raise ValueError("Only single-term coefficients can be inverted in a Laurent ring")
            (monomial, value), = self._terms.items()
            return Coefficient._raw({monomial ** power: Fraction(1) / value ** (-power)})
        result = ONE
        for _ in range(power):
            result = result * self
        return result

    def inverse(self) -> 'Coefficient':
        return self ** -1

    def __truediv__(self, other) -> 'Coefficient':
        if isinstance(other, Coefficient):
            return self * other.inverse()
        return self * (Fraction(1) / to_fraction(other))

    def __eq__(self, other) -> bool:
        if isinstance(other, Coefficient):
            return self._terms == other._terms
        if isinstance(other, (int, Fraction)):
            return self._terms == Coefficient.constant(other)._terms
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    # ============== Calculus and evaluation ==============

    def derivative(self, symbol: str) -> 'Coefficient':
        """Exact partial derivative with respect to one symbol."""
        result: Dict[Monomial, Fraction] = {}
        for monomial, value in self._terms.items():
            power = monomial.degree(symbol)
            if power == 0:
                continue
            lowered = monomial * Monomial([(symbol, -1)])
            result[lowered] = result.get(lowered, 0) + value * power
        return Coefficient(result)

    def substitute(self, assignment: Mapping[str, Rational]) -> 'Coefficient':
        """Replace the assigned symbols by rationals, leaving the others symbolic."""
        result: Dict[Monomial, Fraction] = {}
        for monomial, value in self._terms.items():
            factor = value
            remaining = []
            for symbol, power in monomial.exponents:
                if symbol in assignment:
                    q = to_fraction(assignment[symbol])
                    if power < 0 and q == 0:
                        raise ZeroCouplingError(f"division by zero coupling: {symbol} = 0")
                    factor *= q ** power
                else:
                    remaining.append((symbol, power))
            if factor:
                key = Monomial(remaining)
                total = result.get(key, 0) + factor
                if total:
                    result[key] = total
                else:
                    result.pop(key, None)
        return Coefficient._raw(result)

    def evaluate(self, assignment: Mapping[str, Rational]) -> Fraction:
        return coeff_eval(self, assignment)

    # ============== Serialization ==============

    def to_terms(self) -> List[Dict]:
        """JSON-friendly form: [{'monomial': {sym: exp}, 'rational': 'p/q'}]."""
        return [{'monomial': monomial.as_dict(), 'rational': format_rational(value)}
                for monomial, value in sorted(self._terms.items(), key=lambda item: item[0])]

    @classmethod
    def from_terms(cls, terms: Iterable[Mapping]) -> 'Coefficient':
        return cls({Monomial(t['monomial']): Fraction(t['rational']) for t in terms})

    def __repr__(self) -> str:
        return f"Coefficient({self})"

    def __str__(self) -> str:
        if not self._terms:
            return '0'
        parts = []
        for monomial, value in sorted(self._terms.items(), key=lambda item: item[0]):
            if not monomial.exponents:
                parts.append(format_rational(value))
            elif value == 1:
                parts.append(str(monomial))
            elif value == -1:
                parts.append(f"-{monomial}")
            else:
                parts.append(f"{format_rational(value)}*{monomial}")
        return ' + '.join(parts).replace('+ -', '- ')


ZERO = Coefficient()
ONE = Coefficient.constant(1)


def format_rational(value: Fraction) -> str:
    return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"


def coeff_add(a: Coefficient, b: Coefficient) -> Coefficient:
    return a + b


def coeff_mul(a: Coefficient, b: Coefficient) -> Coefficient:
    return a * b


def coeff_eval(a: Coefficient, assignment: Mapping[str, Rational]) -> Fraction:
    """Evaluate exactly; every symbol must be assigned and no pole may be hit."""
    total = Fraction(0)
    for monomial, value in a.items():
        term = value
        for symbol, power in monomial.exponents:
            if symbol not in assignment:
                raise UnassignedSymbolError(f"unassigned symbol: {symbol}")
            q = to_fraction(assignment[symbol])
            if power < 0 and q == 0:
                raise ZeroCouplingError(f"division by zero coupling: {symbol} = 0")
            term *= q ** power
        total += term
    return total
